#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hamflow/bump.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

// Plateau / support radii of a smooth cutoff, 0 < r1 < r2.
struct CutoffSpec {
    double r1 = 0, r2 = 0;
    void validate() const {
        if (!(0 < r1 && r1 < r2)) throw input_error("CutoffSpec: need 0 < r1 < r2");
    }
};

// Strang-split numerical flow of a frozen mechanical Hamiltonian.
struct NumericStage {
    HamHandle H;
    double duration = 0; // may be negative (backward flow)
    double dt = 1e-3;
};

// (q, p) -> (q, p - s grad f(q)) for a configuration potential f.
struct VerticalShearStage {
    ScalarField f;
    double s = 1;
};

// (q, p) -> (q + s grad g(p), p) for a momentum function g.
struct HorizontalShearStage {
    ScalarField g;
    double s = 1;
};

// Localized harmonic rotation about `center`: exact elliptic rotation on the
// certified region |dq|^2 + (w |dp|)^2 < r1^2 (the conserved quadratic of the
// plateau Hamiltonian |dp|^2/2 + |dq|^2/(2w^2)); identity beyond r2; RK4 on
// the cutoff Hamiltonian in the collar.
struct RotationStage {
    PhasePoint center;
    double width = 1; // w
    double time = 0;  // flow time; angle = time / width
    CutoffSpec cutoff;
};

// (q, p) -> (s q, p / s); euclidean only.
struct DilationStage {
    double s = 1;
};

// S(q, p) = (q, -p); volume preserving but not Hamiltonian.
struct SymmetryStage {};

// Compactly supported shear profile: bump(q,p) * (a . (q - q_c)) kicks p by
// -a on its certified region; the horizontal variant moves q by +a.  Several
// profiles with pairwise disjoint supports may share one stage.
struct LocalizedProfile {
    enum class Base { vertical, horizontal };
    Base base = Base::vertical;
    Vec coeff; // a, length d
    BoxBump bump;

    double hamiltonian(const PhasePoint& x) const;
    void grad(const PhasePoint& x, Vec& grad_q, Vec& grad_p) const;
    bool certified(const PhasePoint& x) const; // full unit-time path in the plateau
};

struct LocalizedShearStage {
    std::vector<LocalizedProfile> profiles;
    double sign = 1; // +1 forward, -1 inverse
    double dt = 2.5e-3;
};

using FlowStage = std::variant<NumericStage, VerticalShearStage, HorizontalShearStage,
                               RotationStage, DilationStage, SymmetryStage, LocalizedShearStage>;

struct StageResult {
    PhasePoint x;
    bool certified = true; // false when a numeric fallback was used
};

// Axis-aligned phase box for sampling and quadrature.
struct PhaseBox {
    Vec lo, hi; // length 2d, q then p

    int dim2() const { return static_cast<int>(lo.size()); }
    double volume() const {
        double v = 1;
        for (int i = 0; i < dim2(); ++i) v *= hi[i] - lo[i];
        return v;
    }
    Vec sample(const Vec& unit) const {
        Vec x(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * unit[i];
        return x;
    }
    static PhaseBox cube(int d, double q_radius, double p_radius) {
        PhaseBox b;
        b.lo.assign(2 * d, 0);
        b.hi.assign(2 * d, 0);
        for (int i = 0; i < d; ++i) {
            b.lo[i] = -q_radius;
            b.hi[i] = q_radius;
            b.lo[d + i] = -p_radius;
            b.hi[d + i] = p_radius;
        }
        return b;
    }
};

// Ordered composition of stages; stages act in list order.
class FlowMap {
public:
    SpaceSpec space;
    std::vector<FlowStage> stages;
    double safety_box = 1e3;

    FlowMap() = default;
    explicit FlowMap(SpaceSpec sp) : space(sp) {}

    static FlowMap identity(SpaceSpec sp) { return FlowMap(sp); }

    FlowMap& push(FlowStage st) {
        stages.push_back(std::move(st));
        return *this;
    }
    FlowMap then(const FlowMap& next) const;

    PhasePoint apply(const PhasePoint& x) const;
    StageResult apply_checked(const PhasePoint& x) const;

    // Composed tangent map: exact stage Jacobians, variational equations
    // through numeric stages.
    Mat tangent(const PhasePoint& x) const;
    double jacobian_det(const PhasePoint& x) const { return tangent(x).det(); }

    bool hamiltonian() const; // false if any symmetry stage present
    FlowMap inverse() const;

    std::string to_json() const;
};

// Stage constructors enforcing the spec preconditions.
FlowStage make_vertical_shear(const ScalarField& f, double s);
FlowStage make_horizontal_shear(const ScalarField& g, double s);
FlowStage make_harmonic_rotation(PhasePoint center, double w, double t, CutoffSpec cutoff);
FlowStage make_dilation(const SpaceSpec& space, double s);
FlowStage make_symmetry();

struct IntegrateOptions {
    double safety_box = 1e3;
    bool record = false;
    int record_stride = 1;
};

struct Trajectory {
    std::vector<double> t;
    std::vector<PhasePoint> x;
};

struct IntegrateResult {
    PhasePoint endpoint;
    Trajectory trajectory;
};

// Piecewise-autonomous Strang (kick-drift-kick) integration of Hamilton's
// equations under a schedule; segment boundaries are hit exactly.
IntegrateResult integrate(const MechanicalSystem& sys, const ControlSchedule& sched,
                          const PhasePoint& x0, double dt, const IntegrateOptions& opts = {});

// Numeric stage application with optional variational matrix and trajectory.
PhasePoint strang_flow(const SpaceSpec& space, const HamHandle& H, double duration, double dt,
                       PhasePoint x, Mat* J, Trajectory* traj, double safety_box,
                       double t_offset = 0);

// Max sup-distance between two flows over a deterministic low-discrepancy
// sample of the box.
double c0_distance(const FlowMap& a, const FlowMap& b, const PhaseBox& K, int samples);

// Apply a rotation or localized-shear stage by integrating its cutoff
// Hamiltonian with RK4 instead of using the certified closed form; exact
// stages without a cutoff Hamiltonian fall back to their exact map.
PhasePoint stage_apply_numeric(const FlowStage& st, const SpaceSpec& space, const PhasePoint& x,
                               double dt, double safety_box = 1e6);

} // namespace hamflow
