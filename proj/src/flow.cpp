#include "hamflow/flow.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

void check_safety(const PhasePoint& x, double box, double t) {
    for (double v : x.q)
        if (!std::isfinite(v) || std::fabs(v) > box)
            throw escape_error("trajectory left the safety box", t);
    for (double v : x.p)
        if (!std::isfinite(v) || std::fabs(v) > box)
            throw escape_error("trajectory left the safety box", t);
}

} // namespace

// ---------------------------------------------------------------------------
// Localized profiles

double LocalizedProfile::hamiltonian(const PhasePoint& x) const {
    double b = bump.value(x);
    if (b == 0) return 0;
    Vec delta = bump.space.q_diff(x.q, bump.center.q);
    double lin = 0;
    if (base == Base::vertical) {
        for (std::size_t i = 0; i < coeff.size(); ++i) lin += coeff[i] * delta[i];
    } else {
        for (std::size_t i = 0; i < coeff.size(); ++i) lin += coeff[i] * (x.p[i] - bump.center.p[i]);
    }
    return b * lin;
}

void LocalizedProfile::grad(const PhasePoint& x, Vec& grad_q, Vec& grad_p) const {
    const int d = bump.space.d;
    grad_q.assign(d, 0.0);
    grad_p.assign(d, 0.0);
    double b;
    Vec gb;
    bump.value_grad(x, b, gb);
    if (b == 0 && sup_norm(gb) == 0) return;
    Vec delta = bump.space.q_diff(x.q, bump.center.q);
    double lin = 0;
    if (base == Base::vertical)
        for (int i = 0; i < d; ++i) lin += coeff[i] * delta[i];
    else
        for (int i = 0; i < d; ++i) lin += coeff[i] * (x.p[i] - bump.center.p[i]);
    for (int i = 0; i < d; ++i) {
        grad_q[i] = gb[i] * lin;
        grad_p[i] = gb[d + i] * lin;
    }
    if (base == Base::vertical)
        for (int i = 0; i < d; ++i) grad_q[i] += b * coeff[i];
    else
        for (int i = 0; i < d; ++i) grad_p[i] += b * coeff[i];
}

bool LocalizedProfile::certified(const PhasePoint& x) const {
    if (!bump.in_plateau(x)) return false;
    // The unit-time path is a straight translation; its endpoint must stay in
    // the plateau, which suffices for the whole segment (boxes are convex).
    PhasePoint end = x;
    if (base == Base::vertical)
        for (std::size_t i = 0; i < coeff.size(); ++i) end.p[i] -= coeff[i];
    else {
        for (std::size_t i = 0; i < coeff.size(); ++i) end.q[i] += coeff[i];
        end.q = bump.space.wrap_q(end.q);
    }
    return bump.in_plateau(end);
}

// ---------------------------------------------------------------------------
// Strang splitting

PhasePoint strang_flow(const SpaceSpec& space, const HamHandle& H, double duration, double dt,
                       PhasePoint x, Mat* J, Trajectory* traj, double safety_box, double t_offset) {
    if (dt <= 0) throw input_error("strang_flow: dt must be positive");
    const int d = space.d;
    double remaining = std::fabs(duration);
    const double sign = duration >= 0 ? 1.0 : -1.0;
    long steps = static_cast<long>(std::ceil(remaining / dt - 1e-12));
    if (steps < 1) steps = (remaining > 0) ? 1 : 0;
    double t = 0;
    auto record = [&](double tt) {
        if (traj) {
            traj->t.push_back(t_offset + sign * tt);
            traj->x.push_back(x);
        }
    };
    record(0);
    for (long k = 0; k < steps; ++k) {
        double h = sign * std::min(dt, remaining - k * dt);
        // kick - drift - kick
        Vec g = H.grad_q(x.q);
        if (J) {
            Mat hv = H.hess_qq(x.q);
            // left-multiply by [[I,0],[-(h/2) Hess, I]]
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < 2 * d; ++j) {
                    double acc = 0;
                    for (int r = 0; r < d; ++r) acc += hv(i, r) * (*J)(r, j);
                    (*J)(d + i, j) -= 0.5 * h * acc;
                }
        }
        for (int i = 0; i < d; ++i) x.p[i] -= 0.5 * h * g[i];
        for (int i = 0; i < d; ++i) x.q[i] += h * x.p[i];
        x.q = space.wrap_q(x.q);
        if (J) {
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < 2 * d; ++j) (*J)(i, j) += h * (*J)(d + i, j);
        }
        g = H.grad_q(x.q);
        if (J) {
            Mat hv = H.hess_qq(x.q);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < 2 * d; ++j) {
                    double acc = 0;
                    for (int r = 0; r < d; ++r) acc += hv(i, r) * (*J)(r, j);
                    (*J)(d + i, j) -= 0.5 * h * acc;
                }
        }
        for (int i = 0; i < d; ++i) x.p[i] -= 0.5 * h * g[i];
        t = std::min((k + 1) * dt, remaining);
        check_safety(x, safety_box, t_offset + sign * t);
        record(t);
    }
    return x;
}

IntegrateResult integrate(const MechanicalSystem& sys, const ControlSchedule& sched,
                          const PhasePoint& x0, double dt, const IntegrateOptions& opts) {
    sys.validate();
    sched.validate(sys.m());
    if (dt <= 0) throw input_error("integrate: dt must be positive");
    if (x0.dim() != sys.space.d) throw input_error("integrate: x0 dimension mismatch");
    check_safety(x0, opts.safety_box, 0);

    IntegrateResult out;
    PhasePoint x = x0;
    x.q = sys.space.wrap_q(x.q);
    double t = 0;
    Trajectory* traj = opts.record ? &out.trajectory : nullptr;
    for (const auto& seg : sched.segments) {
        HamHandle H = frozen_hamiltonian(sys, seg.u);
        x = strang_flow(sys.space, H, seg.tau, dt, x, nullptr, traj, opts.safety_box, t);
        t += seg.tau;
    }
    out.endpoint = std::move(x);
    return out;
}

// ---------------------------------------------------------------------------
// Stage application

namespace {

struct RotationLocal {
    Vec dq, dp;
    double s2; // |dq|^2 + w^2 |dp|^2
};

RotationLocal rotation_local(const RotationStage& st, const SpaceSpec& space, const PhasePoint& x) {
    RotationLocal loc;
    loc.dq = space.q_diff(x.q, st.center.q);
    loc.dp = vsub(x.p, st.center.p);
    loc.s2 = vdot(loc.dq, loc.dq) + st.width * st.width * vdot(loc.dp, loc.dp);
    return loc;
}

PhasePoint rotation_exact(const RotationStage& st, const SpaceSpec& space, const RotationLocal& loc) {
    const double c = std::cos(st.time / st.width), s = std::sin(st.time / st.width);
    const int d = space.d;
    Vec q(d), p(d);
    for (int i = 0; i < d; ++i) {
        q[i] = st.center.q[i] + loc.dq[i] * c + st.width * loc.dp[i] * s;
        p[i] = st.center.p[i] - loc.dq[i] / st.width * s + loc.dp[i] * c;
    }
    return PhasePoint(space.wrap_q(std::move(q)), std::move(p));
}

// Cutoff Hamiltonian of the rotation stage: chi(s) * (|dp|^2/2 + |dq|^2/(2w^2))
// with s the conserved elliptic radius, so level sets stay invariant even in
// the collar.
void rotation_grad(const RotationStage& st, const SpaceSpec& space, const PhasePoint& x,
                   Vec& grad_q, Vec& grad_p) {
    const int d = space.d;
    RotationLocal loc = rotation_local(st, space, x);
    double s = std::sqrt(loc.s2);
    RadialCutoff cut{st.cutoff.r1, st.cutoff.r2};
    double chi = cut.value(s);
    double w2 = st.width * st.width;
    double quad = 0.5 * vdot(loc.dp, loc.dp) + 0.5 * vdot(loc.dq, loc.dq) / w2;
    grad_q.assign(d, 0.0);
    grad_p.assign(d, 0.0);
    if (chi == 0 && s >= st.cutoff.r2) return;
    double dchi = (s > 0) ? cut.deriv(s) : 0.0;
    for (int i = 0; i < d; ++i) {
        double ds_dq = (s > 0) ? loc.dq[i] / s : 0.0;
        double ds_dp = (s > 0) ? w2 * loc.dp[i] / s : 0.0;
        grad_q[i] = dchi * ds_dq * quad + chi * loc.dq[i] / w2;
        grad_p[i] = dchi * ds_dp * quad + chi * loc.dp[i];
    }
}

PhasePoint rk4_hamiltonian(const SpaceSpec& space,
                           const std::function<void(const PhasePoint&, Vec&, Vec&)>& grad,
                           PhasePoint x, double time, double dt, double safety_box) {
    long steps = std::max(1l, static_cast<long>(std::ceil(std::fabs(time) / dt)));
    double h = time / static_cast<double>(steps);
    const int d = space.d;
    Vec gq(d), gp(d);
    auto field = [&](const PhasePoint& y, Vec& kq, Vec& kp) {
        grad(y, gq, gp);
        kq = gp;              // qdot = grad_p H
        kp = vscale(-1, gq);  // pdot = -grad_q H
    };
    for (long s = 0; s < steps; ++s) {
        Vec k1q(d), k1p(d), k2q(d), k2p(d), k3q(d), k3p(d), k4q(d), k4p(d);
        field(x, k1q, k1p);
        PhasePoint x2(vadd(x.q, vscale(h / 2, k1q)), vadd(x.p, vscale(h / 2, k1p)));
        field(x2, k2q, k2p);
        PhasePoint x3(vadd(x.q, vscale(h / 2, k2q)), vadd(x.p, vscale(h / 2, k2p)));
        field(x3, k3q, k3p);
        PhasePoint x4(vadd(x.q, vscale(h, k3q)), vadd(x.p, vscale(h, k3p)));
        field(x4, k4q, k4p);
        for (int i = 0; i < d; ++i) {
            x.q[i] += h / 6 * (k1q[i] + 2 * k2q[i] + 2 * k3q[i] + k4q[i]);
            x.p[i] += h / 6 * (k1p[i] + 2 * k2p[i] + 2 * k3p[i] + k4p[i]);
        }
        check_safety(x, safety_box, h * (s + 1));
    }
    x.q = space.wrap_q(x.q);
    return x;
}

Mat fd_tangent(const SpaceSpec& space, const std::function<PhasePoint(const PhasePoint&)>& f,
               const PhasePoint& x, double eps = 1e-6) {
    const int d = space.d;
    Mat J(2 * d, 2 * d);
    for (int j = 0; j < 2 * d; ++j) {
        PhasePoint xp = x, xm = x;
        if (j < d) {
            xp.q[j] += eps;
            xm.q[j] -= eps;
        } else {
            xp.p[j - d] += eps;
            xm.p[j - d] -= eps;
        }
        PhasePoint fp = f(xp), fm = f(xm);
        Vec dq = space.q_diff(fp.q, fm.q);
        for (int i = 0; i < d; ++i) J(i, j) = dq[i] / (2 * eps);
        for (int i = 0; i < d; ++i) J(d + i, j) = (fp.p[i] - fm.p[i]) / (2 * eps);
    }
    return J;
}

struct StageApply {
    const SpaceSpec& space;
    double safety_box;
    bool* certified; // may be null

    PhasePoint operator()(const NumericStage& st, const PhasePoint& x) const {
        return strang_flow(space, st.H, st.duration, st.dt, x, nullptr, nullptr, safety_box);
    }
    PhasePoint operator()(const VerticalShearStage& st, const PhasePoint& x) const {
        Vec g = st.f.grad(x.q);
        PhasePoint y = x;
        for (int i = 0; i < space.d; ++i) y.p[i] -= st.s * g[i];
        return y;
    }
    PhasePoint operator()(const HorizontalShearStage& st, const PhasePoint& x) const {
        Vec g = st.g.grad(x.p);
        PhasePoint y = x;
        for (int i = 0; i < space.d; ++i) y.q[i] += st.s * g[i];
        y.q = space.wrap_q(y.q);
        return y;
    }
    PhasePoint operator()(const RotationStage& st, const PhasePoint& x) const {
        RotationLocal loc = rotation_local(st, space, x);
        double s = std::sqrt(loc.s2);
        if (s < st.cutoff.r1) return rotation_exact(st, space, loc);
        if (s >= st.cutoff.r2) return x;
        if (certified) *certified = false;
        auto grad = [&](const PhasePoint& y, Vec& gq, Vec& gp) { rotation_grad(st, space, y, gq, gp); };
        double dt = st.width / 200.0;
        return rk4_hamiltonian(space, grad, x, st.time, dt, safety_box);
    }
    PhasePoint operator()(const DilationStage& st, const PhasePoint& x) const {
        PhasePoint y = x;
        for (int i = 0; i < space.d; ++i) {
            y.q[i] = st.s * x.q[i];
            y.p[i] = x.p[i] / st.s;
        }
        return y;
    }
    PhasePoint operator()(const SymmetryStage&, const PhasePoint& x) const {
        PhasePoint y = x;
        for (double& v : y.p) v = -v;
        return y;
    }
    PhasePoint operator()(const LocalizedShearStage& st, const PhasePoint& x) const {
        // Supports are pairwise disjoint: at most one profile acts.
        for (const auto& prof : st.profiles) {
            if (prof.bump.outside_support(x)) continue;
            PhasePoint probe = x;
            if (st.sign < 0) {
                LocalizedProfile inv = prof;
                inv.coeff = vscale(-1, prof.coeff);
                if (inv.certified(probe)) return exact_shift(inv, probe);
                if (certified) *certified = false;
                auto grad = [&](const PhasePoint& y, Vec& gq, Vec& gp) { inv.grad(y, gq, gp); };
                return rk4_hamiltonian(space, grad, x, 1.0, st.dt, safety_box);
            }
            if (prof.certified(probe)) return exact_shift(prof, probe);
            if (certified) *certified = false;
            auto grad = [&](const PhasePoint& y, Vec& gq, Vec& gp) { prof.grad(y, gq, gp); };
            return rk4_hamiltonian(space, grad, x, 1.0, st.dt, safety_box);
        }
        return x;
    }

    static PhasePoint exact_shift(const LocalizedProfile& prof, PhasePoint x) {
        if (prof.base == LocalizedProfile::Base::vertical) {
            for (std::size_t i = 0; i < prof.coeff.size(); ++i) x.p[i] -= prof.coeff[i];
        } else {
            for (std::size_t i = 0; i < prof.coeff.size(); ++i) x.q[i] += prof.coeff[i];
            x.q = prof.bump.space.wrap_q(x.q);
        }
        return x;
    }
};

} // namespace

FlowMap FlowMap::then(const FlowMap& next) const {
    FlowMap r = *this;
    r.stages.insert(r.stages.end(), next.stages.begin(), next.stages.end());
    return r;
}

PhasePoint FlowMap::apply(const PhasePoint& x) const { return apply_checked(x).x; }

StageResult FlowMap::apply_checked(const PhasePoint& x) const {
    StageResult r{x, true};
    r.x.q = space.wrap_q(r.x.q);
    StageApply ap{space, safety_box, &r.certified};
    for (const auto& st : stages)
        r.x = std::visit([&](const auto& s) { return ap(s, r.x); }, st);
    return r;
}

Mat FlowMap::tangent(const PhasePoint& x0) const {
    const int d = space.d;
    Mat J = Mat::identity(2 * d);
    PhasePoint x = x0;
    x.q = space.wrap_q(x.q);
    StageApply ap{space, safety_box, nullptr};
    for (const auto& st : stages) {
        if (const auto* num = std::get_if<NumericStage>(&st)) {
            Mat Jst = Mat::identity(2 * d);
            x = strang_flow(space, num->H, num->duration, num->dt, x, &Jst, nullptr, safety_box);
            J = Jst.mul(J);
            continue;
        }
        Mat Jst = Mat::identity(2 * d);
        if (const auto* v = std::get_if<VerticalShearStage>(&st)) {
            Mat H = v->f.hess(x.q);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) Jst(d + i, j) = -v->s * H(i, j);
        } else if (const auto* hs = std::get_if<HorizontalShearStage>(&st)) {
            Mat H = hs->g.hess(x.p);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) Jst(i, d + j) = hs->s * H(i, j);
        } else if (const auto* rot = std::get_if<RotationStage>(&st)) {
            RotationLocal loc = rotation_local(*rot, space, x);
            double s = std::sqrt(loc.s2);
            if (s < rot->cutoff.r1) {
                double c = std::cos(rot->time / rot->width), sn = std::sin(rot->time / rot->width);
                for (int i = 0; i < d; ++i) {
                    Jst(i, i) = c;
                    Jst(i, d + i) = rot->width * sn;
                    Jst(d + i, i) = -sn / rot->width;
                    Jst(d + i, d + i) = c;
                }
            } else if (s >= rot->cutoff.r2) {
                // identity
            } else {
                FlowMap single(space);
                single.safety_box = safety_box;
                single.stages.push_back(st);
                Jst = fd_tangent(space, [&](const PhasePoint& y) { return single.apply(y); }, x);
            }
        } else if (const auto* dil = std::get_if<DilationStage>(&st)) {
            for (int i = 0; i < d; ++i) {
                Jst(i, i) = dil->s;
                Jst(d + i, d + i) = 1.0 / dil->s;
            }
        } else if (std::get_if<SymmetryStage>(&st)) {
            for (int i = 0; i < d; ++i) Jst(d + i, d + i) = -1.0;
        } else if (const auto* ls = std::get_if<LocalizedShearStage>(&st)) {
            // Certified points are pure translations (identity Jacobian);
            // finite differences in the collar.
            bool in_collar = false;
            for (const auto& prof : ls->profiles) {
                if (prof.bump.outside_support(x)) continue;
                LocalizedProfile eff = prof;
                if (ls->sign < 0) eff.coeff = vscale(-1, prof.coeff);
                if (!eff.certified(x)) in_collar = true;
                break;
            }
            if (in_collar) {
                FlowMap single(space);
                single.safety_box = safety_box;
                single.stages.push_back(st);
                Jst = fd_tangent(space, [&](const PhasePoint& y) { return single.apply(y); }, x);
            }
        }
        J = Jst.mul(J);
        x = std::visit([&](const auto& s) { return ap(s, x); }, st);
    }
    return J;
}

bool FlowMap::hamiltonian() const {
    for (const auto& st : stages)
        if (std::holds_alternative<SymmetryStage>(st)) return false;
    return true;
}

FlowMap FlowMap::inverse() const {
    FlowMap r(space);
    r.safety_box = safety_box;
    for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
        const FlowStage& st = *it;
        if (const auto* num = std::get_if<NumericStage>(&st)) {
            NumericStage inv = *num;
            inv.duration = -inv.duration;
            r.stages.push_back(inv);
        } else if (const auto* v = std::get_if<VerticalShearStage>(&st)) {
            r.stages.push_back(VerticalShearStage{v->f, -v->s});
        } else if (const auto* hs = std::get_if<HorizontalShearStage>(&st)) {
            r.stages.push_back(HorizontalShearStage{hs->g, -hs->s});
        } else if (const auto* rot = std::get_if<RotationStage>(&st)) {
            RotationStage inv = *rot;
            inv.time = -inv.time;
            r.stages.push_back(inv);
        } else if (const auto* dil = std::get_if<DilationStage>(&st)) {
            r.stages.push_back(DilationStage{1.0 / dil->s});
        } else if (std::get_if<SymmetryStage>(&st)) {
            r.stages.push_back(SymmetryStage{});
        } else if (const auto* ls = std::get_if<LocalizedShearStage>(&st)) {
            LocalizedShearStage inv = *ls;
            inv.sign = -inv.sign;
            r.stages.push_back(inv);
        }
    }
    return r;
}

FlowStage make_vertical_shear(const ScalarField& f, double s) {
    if (f.symbolic() && f.expr()->depends_on_p())
        throw input_error("vertical_shear: f must depend on q only");
    return VerticalShearStage{f, s};
}

FlowStage make_horizontal_shear(const ScalarField& g, double s) {
    if (g.symbolic() && g.expr()->depends_on_q())
        throw input_error("horizontal_shear: g must depend on p only");
    return HorizontalShearStage{g, s};
}

FlowStage make_harmonic_rotation(PhasePoint center, double w, double t, CutoffSpec cutoff) {
    if (w <= 0) throw input_error("harmonic_rotation: width must be positive");
    cutoff.validate();
    return RotationStage{std::move(center), w, t, cutoff};
}

FlowStage make_dilation(const SpaceSpec& space, double s) {
    if (space.torus())
        throw unsupported_error("dilation: p.q is not globally defined on the torus");
    if (s <= 0) throw input_error("dilation: scale must be positive");
    return DilationStage{s};
}

FlowStage make_symmetry() { return SymmetryStage{}; }

PhasePoint stage_apply_numeric(const FlowStage& st, const SpaceSpec& space, const PhasePoint& x,
                               double dt, double safety_box) {
    if (const auto* rot = std::get_if<RotationStage>(&st)) {
        auto grad = [&](const PhasePoint& y, Vec& gq, Vec& gp) { rotation_grad(*rot, space, y, gq, gp); };
        return rk4_hamiltonian(space, grad, x, rot->time, dt, safety_box);
    }
    if (const auto* ls = std::get_if<LocalizedShearStage>(&st)) {
        PhasePoint y = x;
        for (const auto& prof : ls->profiles) {
            if (prof.bump.outside_support(y)) continue;
            LocalizedProfile eff = prof;
            if (ls->sign < 0) eff.coeff = vscale(-1, prof.coeff);
            auto grad = [&](const PhasePoint& z, Vec& gq, Vec& gp) { eff.grad(z, gq, gp); };
            return rk4_hamiltonian(space, grad, y, 1.0, dt, safety_box);
        }
        return y;
    }
    StageApply ap{space, safety_box, nullptr};
    return std::visit([&](const auto& s) { return ap(s, x); }, st);
}

double c0_distance(const FlowMap& a, const FlowMap& b, const PhaseBox& K, int samples) {
    if (a.space.d != b.space.d || a.space.kind != b.space.kind)
        throw input_error("c0_distance: flows on different spaces");
    double worst = 0;
    const int dim = K.dim2();
    for (int i = 0; i < samples; ++i) {
        Vec u = halton_point(i, dim);
        PhasePoint x = PhasePoint::from_flat(K.sample(u));
        PhasePoint ya = a.apply(x);
        PhasePoint yb = b.apply(x);
        worst = std::max(worst, sup_distance(ya, yb, a.space));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json stage_json(const FlowStage& st) {
    nlohmann::json j;
    if (const auto* num = std::get_if<NumericStage>(&st)) {
        j["stage"] = "numeric";
        j["duration"] = num->duration;
        j["dt"] = num->dt;
        j["hamiltonian"] =
            num->H.symbolic() ? nlohmann::json(num->H.symbolic()->str()) : nlohmann::json("blackbox");
    } else if (const auto* v = std::get_if<VerticalShearStage>(&st)) {
        j["stage"] = "vertical_shear";
        j["f"] = v->f.name();
        j["s"] = v->s;
    } else if (const auto* hs = std::get_if<HorizontalShearStage>(&st)) {
        j["stage"] = "horizontal_shear";
        j["g"] = hs->g.name();
        j["s"] = hs->s;
    } else if (const auto* rot = std::get_if<RotationStage>(&st)) {
        j["stage"] = "harmonic_rotation";
        j["center_q"] = rot->center.q;
        j["center_p"] = rot->center.p;
        j["width"] = rot->width;
        j["time"] = rot->time;
        j["r1"] = rot->cutoff.r1;
        j["r2"] = rot->cutoff.r2;
    } else if (const auto* dil = std::get_if<DilationStage>(&st)) {
        j["stage"] = "dilation";
        j["s"] = dil->s;
    } else if (std::get_if<SymmetryStage>(&st)) {
        j["stage"] = "symmetry";
    } else if (const auto* ls = std::get_if<LocalizedShearStage>(&st)) {
        j["stage"] = "localized_shear";
        j["sign"] = ls->sign;
        auto profs = nlohmann::json::array();
        for (const auto& p : ls->profiles) {
            nlohmann::json pj;
            pj["base"] = p.base == LocalizedProfile::Base::vertical ? "vertical" : "horizontal";
            pj["coeff"] = p.coeff;
            pj["center_q"] = p.bump.center.q;
            pj["center_p"] = p.bump.center.p;
            pj["plateau_half"] = p.bump.plateau_half;
            pj["support_half"] = p.bump.support_half;
            profs.push_back(pj);
        }
        j["profiles"] = profs;
    }
    return j;
}

} // namespace

std::string FlowMap::to_json() const {
    nlohmann::json j;
    j["space"] = {{"kind", space.kind_name()}, {"d", space.d}};
    auto arr = nlohmann::json::array();
    for (const auto& st : stages) arr.push_back(stage_json(st));
    j["stages"] = arr;
    return j.dump(2);
}

} // namespace hamflow
