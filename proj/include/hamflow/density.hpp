#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hamflow/flow.hpp"
#include "hamflow/ham_expr.hpp"

namespace hamflow {

// Deterministic tensor midpoint quadrature with boundary-cell bisection;
// Monte-Carlo mode behind a fixed seed when mc_samples > 0.
struct QuadratureSpec {
    int resolution = 128;  // cells per axis
    int refine_levels = 2; // bisection depth near level boundaries
    long mc_samples = 0;
    std::uint64_t seed = 1;
};

// Grid-sampled density: piecewise constant on a regular grid over a box.
struct GridDensity {
    PhaseBox box;
    std::vector<long> dims; // length 2d
    std::vector<double> values;
    double r = 1;

    long cell_count() const;
    double value_at(const Vec& flat) const;
};

std::string grid_density_header_json(const GridDensity& g, const SpaceSpec& space);
std::string grid_density_values_csv(const GridDensity& g);
GridDensity grid_density_load(const std::string& header_json, const std::string& values_csv);

// Compactly supported density field on T*M.  Evaluation is pure; the field
// vanishes outside its support box.
class DensityField {
public:
    DensityField() = default;

    static DensityField from_expr(const SpaceSpec& space, HamExpr e, PhaseBox support, double r = 1);
    static DensityField from_cubes(const SpaceSpec& space, std::vector<std::pair<Cube, double>> cubes,
                                   double r = 1);
    static DensityField from_grid(const SpaceSpec& space, GridDensity grid);
    static DensityField from_callable(const SpaceSpec& space,
                                      std::function<double(const PhasePoint&)> f, PhaseBox support,
                                      double r = 1, std::string kind = "callable");

    const SpaceSpec& space() const { return space_; }
    const PhaseBox& support() const { return support_; }
    double exponent() const { return r_; }
    const std::string& kind() const { return kind_; }

    double operator()(const PhasePoint& x) const;

private:
    SpaceSpec space_;
    PhaseBox support_{};
    double r_ = 1;
    std::string kind_ = "zero";
    std::function<double(const PhasePoint&)> eval_;
    bool clip_to_support_ = true;
};

// rho0 composed with the flow: evaluating at x applies the flow to x and
// evaluates rho0 there.  The support box is transported conservatively
// through the inverse flow.
DensityField pushforward(const DensityField& rho0, const FlowMap& flow);

struct LrResult {
    double value = 0;
    double refinement_delta = 0; // |value - coarser-resolution value|
};

LrResult lr_distance(const DensityField& a, const DensityField& b, double r,
                     const QuadratureSpec& spec);

// L^r norm of a single field (distance to zero).
LrResult lr_norm(const DensityField& a, double r, const QuadratureSpec& spec);

struct VolumeResult {
    double volume = 0;
    double error_bound = 0; // half the ambiguous-cell volume
};

// Volume of the open band {mu < rho < nu}.
VolumeResult level_set_volume(const DensityField& rho, double mu, double nu,
                              const QuadratureSpec& spec);

// Band volumes Vol({mu_i < rho < mu_{i+1}}) over an ordered level grid.
struct LevelSignature {
    Vec levels;       // mu_0 < ... < mu_L
    Vec band_volumes; // length L
    Vec band_errors;  // reported error bounds

    std::string to_json() const;
};

LevelSignature signature(const DensityField& rho, const Vec& levels, const QuadratureSpec& spec);
bool signatures_match(const LevelSignature& a, const LevelSignature& b, double tol);

// Union of the two supports, intersected with the torus fundamental domain in q.
PhaseBox common_box(const DensityField& a, const DensityField& b);

} // namespace hamflow
