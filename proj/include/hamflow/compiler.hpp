#pragma once

#include <map>
#include <string>
#include <vector>

#include "hamflow/flow.hpp"
#include "hamflow/phase_geometry.hpp"

namespace hamflow {

// Ordered sequence of exact Hamiltonian primitives (localized shears and
// harmonic rotations) realizing a mesh permutation on the (h - eta)-cubes.
struct PrimitiveSeq {
    FlowMap flow;
    std::vector<std::string> annotations; // one label per stage
    double rotation_time = 0;             // total synthetic time sum(pi * w)

    int stage_count() const { return static_cast<int>(flow.stages.size()); }
    std::string to_json() const;
};

struct CompileConfig {
    double eta = 0;          // collar width; default h/4 when 0
    double w_factor = 0.5;   // rotation policy: fraction of the largest certifying w
    double hover_pitch = 32; // hover band pitch in units of h
    double numeric_dt = 2.5e-3;
    double center_tol = 1e-9;
    std::vector<CubeIndex> protected_cubes; // kept fixed but routed around
};

struct CompileReport {
    bool ok = false;
    double max_center_error = 0;
    double max_corner_slack = 0; // worst overshoot of corner samples outside the target cube
    int stages = 0;
    double rotation_time = 0;
    std::string to_json() const;
};

struct CompileResult {
    PrimitiveSeq seq;
    CompileReport report;
};

// One vertical shear translating each listed cube (radius h - eta) to momentum
// o^n, constant offset per column; images must be pairwise >= 2h separated.
FlowStage column_spread(const Mesh& mesh, const std::vector<CubeIndex>& cubes,
                        const std::vector<Vec>& target_momenta, double eta);

// Localized horizontal shear moving the cube at (q^n, o^n) to (target_q, o^n)
// along the fattened segment tube.
FlowStage horizontal_translate(const Mesh& mesh, const Vec& q_from, const Vec& o_n,
                               const Vec& q_to, double eta);

// Harmonic rotation of duration pi*w swapping the two consecutive cubes of a
// column at momenta o1 and o2.  Throws geometry_error when the cubes are not
// certified inside the rotation ellipse at this w.
FlowStage swap_consecutive(const Mesh& mesh, const Vec& column_q, const Vec& o1, const Vec& o2,
                           double w, double eta);

// Largest admissible rotation width for a swap, given same-column bystander
// momentum distances; used by the w policy.  Returns {w_lower, w_upper}.
std::pair<double, double> swap_w_window(double h, double eta, double pair_gap,
                                        double bystander_min_dist);

// Lemma 10 pipeline: spread, horizontal tubes, within-column reshuffle
// (adjacent-transposition rotations for d = 1, staged vertical translations
// for d >= 2).  End-to-end images of the shrunken cubes are verified against
// F on centers and corner samples.
CompileResult compile_permutation(const MeshPermutation& F, const Mesh& mesh,
                                  const CompileConfig& config = {});

// Per-column rotations of duration pi*w about (q^j, 0) sending every listed
// cube onto its reflection through {p = 0}.  Valid at density level on the
// cube union, not pointwise.
CompileResult emulate_symmetry(const Mesh& mesh, const std::vector<CubeIndex>& cubes,
                               const CompileConfig& config = {});

} // namespace hamflow
