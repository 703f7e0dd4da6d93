#pragma once

#include <string>
#include <vector>

#include "hamflow/flow.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

// N pairwise-distinct phase points (an element of V^(N) = V^N minus the
// coincidence set).
struct EnsembleState {
    SpaceSpec space;
    std::vector<PhasePoint> points;

    int size() const { return static_cast<int>(points.size()); }
    void validate() const; // distinctness and dimensions
};

struct SeparateResult {
    double delta = 0;  // drift time making positions pairwise distinct
    double margin = 0; // achieved sup-norm separation of the drifted positions
};

// Smallest sampled delta in {0, dmax/K, ..., dmax} (grid refined up to 20
// times) such that q^i + delta p^i are pairwise distinct.
SeparateResult separate(const EnsembleState& ens, double delta_max);

// Smooth function with prescribed gradients: sum of bump-localized linear
// forms with plateau radius min-pairwise-distance/3.  Gradients are exact at
// the nodes and vanish at every other node; the Hessian vanishes on each
// plateau.
ScalarField ensemble_interpolant(const SpaceSpec& space, const std::vector<Vec>& positions,
                                 const std::vector<Vec>& gradients);

// Exact steering plan: [drift delta1; vertical shear f_tau; drift tau;
// vertical shear g_tau; drift delta2], all stages closed form.
struct SteeringPlan {
    FlowMap flow;
    double delta1 = 0, tau = 0, delta2 = 0;
    std::vector<Vec> hat_p; // chosen representatives of qbar - q

    double total_time() const { return delta1 + tau + delta2; }
    std::string to_json() const;
};

SteeringPlan steer(const EnsembleState& start, const EnsembleState& target, double tau,
                   double delta_max = 0.02);

// Lie-rank verification at gamma: momentum directions from localized
// interpolants, position directions from their drift brackets; reports the
// singular values of the assembled 2dN x 2dN frame.
struct LieRankReport {
    int dimension = 0; // 2dN
    std::vector<double> singular_values;
    double smallest = 0;
    bool full_rank = false;
    double separation_delta = 0; // pre-drift applied when positions coincide

    std::string to_json() const;
};

LieRankReport lie_rank_check(const MechanicalSystem& sys, const EnsembleState& gamma,
                             const std::vector<Vec>& probes = {});

std::string ensemble_to_json(const EnsembleState& e);
EnsembleState ensemble_from_json(const std::string& text);

} // namespace hamflow
