#pragma once

#include <string>
#include <vector>

#include "hamflow/density.hpp"
#include "hamflow/phase_geometry.hpp"

namespace hamflow {

struct RearrangeConfig {
    double a = 0;   // lower truncation, > 0
    double A = 0;   // upper truncation, > a
    int N = 1;      // quantization levels
    double h = 0;   // mesh size (informational; the mesh carries it)
    double eta = 0; // cover margin in (0, h); drives the overlap quadrature
    double r = 1;   // L^r exponent
    double tol = 0; // target epsilon and signature tolerance

    void validate() const;
};

// Cube covers of one level band: J covers the band, J_hat keeps the cubes
// overlapping it in more than half their volume, J_tilde is trimmed to the
// matched cardinality.
struct LevelCover {
    std::vector<CubeIndex> J, J_hat;
};

// rho * 1{a < |rho| < A}.
DensityField truncate_density(const DensityField& rho, double a, double A);

struct QuantizeResult {
    DensityField step; // I_N
    Vec levels;        // xi_0 .. xi_N
    LrResult error;    // || I_N - rho ||_{L^r}
};

// Step density I_N = sum_k xi_k 1{xi_{k-1} <= rho < xi_k} on the levels
// xi_k = -A + 2Ak/N, with I_N = 0 where rho vanishes.
QuantizeResult quantize(const DensityField& rho, const RearrangeConfig& config,
                        const QuadratureSpec& quad);

// Majority-overlap cube cover of a band {lo <= rho < hi}; fractional overlap
// measured by midpoint subsampling with spacing bounded by eta.
LevelCover cover_level(const DensityField& rho, double lo, double hi, const Mesh& mesh,
                       double eta);

struct RearrangeLevelStats {
    double lo = 0, hi = 0;
    std::size_t cover0 = 0, cover1 = 0, majority0 = 0, majority1 = 0, matched = 0;
    double band_volume0 = 0, band_volume1 = 0;
};

struct RearrangeResult {
    MeshPermutation F;
    LrResult achieved; // || rho0 o F - rho1 ||_{L^r}
    Vec levels;
    std::vector<RearrangeLevelStats> per_level;

    std::string report_json() const;
};

// Lemma 9 pipeline: signature precondition, truncation, quantization, per-band
// majority covers trimmed to matched cardinality and paired in lexicographic
// order, completed to a permutation of the union support.
RearrangeResult build_permutation(const DensityField& rho0, const DensityField& rho1,
                                  const Mesh& mesh, const RearrangeConfig& config,
                                  const QuadratureSpec& quad);

// rho o F as a density field (boundary faces evaluate as the identity).
DensityField compose_with_permutation(const DensityField& rho, const MeshPermutation& F,
                                      const Mesh& mesh);

} // namespace hamflow
