#pragma once

#include <memory>
#include <optional>
#include <string>

#include "hamflow/compiler.hpp"
#include "hamflow/flow.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

// A realizable element of the small-time calculus: control-schedule pieces
// (kicks, drifts, oscillator arcs) and admitted exact primitives, composed by
// conjugation and Lie products.  Nodes know how to rescale their generator
// and how to invert themselves, which is what the bracket constructions need.
class SynthNode;
using SynthPtr = std::shared_ptr<const SynthNode>;

struct SynthesisResult {
    SynthPtr node;
    std::optional<HamExpr> predicted; // generator X; the flow approximates e^{X}
    std::string label;

    double total_time() const;
    bool pure_schedule() const;

    // Realize as stages (numeric schedule segments plus exact primitives).
    FlowMap flow() const;

    // Control schedule, available when every part is a schedule on one system.
    ControlSchedule schedule() const;
    const MechanicalSystem& system() const;

    SynthesisResult scaled(double lambda) const;
    SynthesisResult inverted() const;
};

using SystemPtr = std::shared_ptr<const MechanicalSystem>;

// One segment (sigma, u_j = s/sigma): the flow tends to e^{s V_j} as sigma->0.
SynthesisResult potential_kick(const SystemPtr& sys, int j, double s, double sigma,
                               double dt = 0, bool exact = false);

// Drift segment of duration tau (u = 0).
SynthesisResult drift_segment(const SystemPtr& sys, double tau, double dt = 1e-3);

// An admitted exact primitive as a calculus element.
SynthesisResult exact_stage(const SystemPtr& sys, FlowStage st, std::string label,
                            std::optional<HamExpr> generator = std::nullopt);

// phi mid phi^{-1}; realized as [phi^{-1}; mid; phi].
SynthesisResult conjugate(const SynthesisResult& inner, const SynthesisResult& mid);

// (e^{f/n} e^{g/n})^n -> e^{f+g}.
SynthesisResult lie_product(const SynthesisResult& f, const SynthesisResult& g, int n);

// e^{tau f} e^{(1/tau) g} e^{-tau f} = exp((1/tau) g + {f,g} + O(tau)); with
// cancellation the large (1/tau) g flow is removed by a Lie product against
// g^{-1/tau}, leaving e^{{f,g}} + O(tau) + O(1/n).
SynthesisResult bracket_schedule(const SynthesisResult& f, const SynthesisResult& g, double tau,
                                 bool cancel = true, int cancel_n = 8);

struct ReverseDriftOptions {
    double dt = 1e-4;        // oscillator segment step in numeric mode
    bool exact_osc = true;   // realize the oscillator arc as the exact rotation
    bool exact_drift = true; // w >= 0 branch: drift factor as the exact shear
};

// e^{w |p|^2/2} on R^d for any sign of w.  Nonnegative w uses the dilation
// conjugation identity D_{1/sqrt(tau)} e^{tau w drift} D_{sqrt(tau)}; negative
// w goes through the auxiliary oscillator |p|^2/2 + u |q|^2/2, whose 2pi
// periodicity represents backward time with forward arcs.
SynthesisResult reverse_drift_euclidean(int d, double w, double tau,
                                        const ReverseDriftOptions& opts = {});

// e^{s |p|^2/2} on R^d as a single rescalable calculus element (free flight
// forward, kick/arc/kick chunks backward).
SynthesisResult drift_power(int d, double s, const ReverseDriftOptions& opts = {});

struct DensityReversalPlan {
    FlowMap flow; // [emulate_symmetry; drift(tau); emulate_symmetry]
    double rotation_time = 0;
    std::string note;
};

// Density-level backward drift on the torus: valid for densities carried by
// the listed cubes, not at the level of the diffeomorphism group.
DensityReversalPlan reverse_drift_density_torus(const Mesh& mesh,
                                                const std::vector<CubeIndex>& cubes, double tau,
                                                const CompileConfig& config = {});

struct SynthesisError {
    double c0 = 0;
    double total_time = 0;
};

SynthesisError synthesis_error(const SynthesisResult& result, const FlowMap& target,
                               const PhaseBox& K, int samples);

} // namespace hamflow
