#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/ham_expr.hpp"
#include "hamflow/linalg.hpp"
#include "hamflow/phase_geometry.hpp"

namespace hamflow {

// Scalar field over one set of variables (q for potentials, p for the
// momentum functions of horizontal shears).  Either an exact expression or a
// black box with value, gradient, optional Hessian and a declared Lipschitz
// bound for its gradient.
class ScalarField {
public:
    ScalarField() = default; // the zero field

    static ScalarField from_expr_q(HamExpr e);
    static ScalarField from_expr_p(HamExpr e);
    static ScalarField blackbox(std::string name, int d,
                                std::function<double(const Vec&)> value,
                                std::function<Vec(const Vec&)> grad, double grad_lipschitz,
                                std::function<Mat(const Vec&)> hess = nullptr);
    static ScalarField zero(int d);
    static ScalarField gaussian(int d); // e^{-|q|^2/2}

    int dim() const { return d_; }
    bool is_zero() const;
    bool symbolic() const { return expr_.has_value(); }
    const std::optional<HamExpr>& expr() const { return expr_; }
    const std::string& name() const { return name_; }
    double grad_lipschitz() const { return lipschitz_; }

    double value(const Vec& x) const;
    Vec grad(const Vec& x) const;
    Mat hess(const Vec& x) const; // symbolic, supplied, or central differences of grad

private:
    int d_ = 0;
    std::optional<HamExpr> expr_; // in q-slots for q-fields, p-slots for p-fields
    bool expr_in_p_ = false;
    std::function<double(const Vec&)> value_;
    std::function<Vec(const Vec&)> grad_;
    std::function<Mat(const Vec&)> hess_;
    double lipschitz_ = 0;
    std::string name_ = "0";
};

// Linear combination c0*f0 + sum c_j f_j; symbolic when every participating
// field is symbolic and every coefficient is exactly dyadic.
ScalarField combine_fields(const std::vector<const ScalarField*>& fields, const Vec& coeffs);

// Mechanical control system H_u = |p|^2/2 + V0(q) + sum u_j V_j(q).
struct MechanicalSystem {
    SpaceSpec space;
    ScalarField V0;
    std::vector<ScalarField> controls;

    int m() const { return static_cast<int>(controls.size()); }
    void validate() const;
};

// Controls q_1, ..., q_d and the Gaussian e^{-|q|^2/2}; m = d + 1.
MechanicalSystem euclidean_preset(int d, ScalarField V0 = ScalarField());

// Controls cos(k_j.q), sin(k_j.q) with k_1..k_{d-1} the coordinate basis and
// k_d = (1,...,1); m = 2d.
MechanicalSystem torus_preset(int d, ScalarField V0 = ScalarField());

// Auxiliary quadratic system |p|^2/2 + u |q|^2/2 used by the backward-drift
// construction.
MechanicalSystem oscillator_system(int d);

struct ControlSchedule {
    struct Segment {
        double tau;
        Vec u;
    };
    std::vector<Segment> segments;

    double total_duration() const;
    void validate(int m) const;
    ControlSchedule then(const ControlSchedule& next) const;
    static ControlSchedule constant(double tau, Vec u) { return ControlSchedule{{{tau, std::move(u)}}}; }
};

std::string schedule_to_csv(const ControlSchedule& s);
ControlSchedule schedule_from_csv(const std::string& text);

// Frozen Hamiltonian |p|^2/2 + W(q) for one control value.
class HamHandle {
public:
    HamHandle() = default;
    HamHandle(SpaceSpec space, ScalarField W);

    const SpaceSpec& space() const { return space_; }
    const ScalarField& potential() const { return W_; }

    // Full symbolic H including the kinetic term, when W is symbolic.
    const std::optional<HamExpr>& symbolic() const { return symbolic_; }

    double value(const PhasePoint& x) const;
    Vec grad_q(const Vec& q) const { return W_.grad(q); }
    Vec grad_p(const Vec& p) const { return p; }
    Mat hess_qq(const Vec& q) const { return W_.hess(q); }

private:
    SpaceSpec space_;
    ScalarField W_;
    std::optional<HamExpr> symbolic_;
};

HamHandle frozen_hamiltonian(const MechanicalSystem& sys, const Vec& u);

// System description as JSON: {space:{kind,d}, V0:..., controls:[...]} where a
// potential is "expr string" or {"builtin": "gaussian"} or 0.
std::string system_to_json(const MechanicalSystem& sys);
MechanicalSystem system_from_json(const std::string& text);

} // namespace hamflow
