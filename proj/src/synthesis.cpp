#include "hamflow/synthesis.hpp"

#include <cmath>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

class SynthNode {
public:
    virtual ~SynthNode() = default;
    virtual void emit(FlowMap& fm) const = 0;
    virtual void emit_schedule(ControlSchedule& cs, const MechanicalSystem* sys) const = 0;
    virtual const MechanicalSystem* schedule_system() const = 0; // null when not pure
    virtual double time() const = 0;
    virtual SynthPtr scaled(double lambda) const = 0;
    virtual SynthPtr inverted() const = 0;
    virtual SpaceSpec space() const = 0;
};

namespace {

struct KickNode final : SynthNode {
    SystemPtr sys;
    int j;
    double s, sigma, dt;
    bool exact;

    KickNode(SystemPtr sy, int jj, double ss, double sg, double dtt, bool ex)
        : sys(std::move(sy)), j(jj), s(ss), sigma(sg), dt(dtt), exact(ex) {}

    void emit(FlowMap& fm) const override {
        if (exact) {
            fm.stages.push_back(make_vertical_shear(sys->controls[j], s));
            return;
        }
        Vec u(sys->m(), 0.0);
        u[j] = s / sigma;
        double step = dt > 0 ? dt : sigma / 32;
        fm.stages.push_back(NumericStage{frozen_hamiltonian(*sys, u), sigma, step});
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem*) const override {
        if (exact) throw input_error("schedule: exact kick has no schedule segment");
        Vec u(sys->m(), 0.0);
        u[j] = s / sigma;
        cs.segments.push_back({sigma, std::move(u)});
    }
    const MechanicalSystem* schedule_system() const override { return exact ? nullptr : sys.get(); }
    double time() const override { return exact ? 0.0 : sigma; }
    SynthPtr scaled(double lambda) const override {
        return std::make_shared<KickNode>(sys, j, lambda * s, sigma, dt, exact);
    }
    SynthPtr inverted() const override {
        return std::make_shared<KickNode>(sys, j, -s, sigma, dt, exact);
    }
    SpaceSpec space() const override { return sys->space; }
};

struct DriftNode final : SynthNode {
    SystemPtr sys;
    double tau, dt;

    DriftNode(SystemPtr sy, double t, double step) : sys(std::move(sy)), tau(t), dt(step) {}

    void emit(FlowMap& fm) const override {
        fm.stages.push_back(NumericStage{frozen_hamiltonian(*sys, Vec(sys->m(), 0.0)), tau, dt});
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem*) const override {
        if (tau < 0) throw unsupported_error("schedule: backward drift is not a segment");
        cs.segments.push_back({tau, Vec(sys->m(), 0.0)});
    }
    const MechanicalSystem* schedule_system() const override {
        return tau >= 0 ? sys.get() : nullptr;
    }
    double time() const override { return std::fabs(tau); }
    SynthPtr scaled(double lambda) const override {
        double t = lambda * tau;
        if (t < 0 && sys->space.torus())
            throw unsupported_error("backward drift on the torus is only available at density level");
        return std::make_shared<DriftNode>(sys, t, dt);
    }
    SynthPtr inverted() const override { return scaled(-1.0); }
    SpaceSpec space() const override { return sys->space; }
};

struct StageNode final : SynthNode {
    SystemPtr sys; // for the space and schedule bookkeeping
    FlowStage st;

    StageNode(SystemPtr sy, FlowStage s) : sys(std::move(sy)), st(std::move(s)) {}

    void emit(FlowMap& fm) const override { fm.stages.push_back(st); }
    void emit_schedule(ControlSchedule&, const MechanicalSystem*) const override {
        throw input_error("schedule: exact stages have no schedule segments");
    }
    const MechanicalSystem* schedule_system() const override { return nullptr; }
    double time() const override { return 0.0; } // admitted primitive, schedule-time limit 0
    SynthPtr scaled(double lambda) const override {
        FlowStage t = st;
        if (auto* v = std::get_if<VerticalShearStage>(&t)) {
            v->s *= lambda;
        } else if (auto* hs = std::get_if<HorizontalShearStage>(&t)) {
            hs->s *= lambda;
        } else if (auto* rot = std::get_if<RotationStage>(&t)) {
            rot->time *= lambda;
        } else if (auto* dil = std::get_if<DilationStage>(&t)) {
            dil->s = std::pow(dil->s, lambda);
        } else {
            throw unsupported_error("scaled: stage kind cannot be rescaled");
        }
        return std::make_shared<StageNode>(sys, std::move(t));
    }
    SynthPtr inverted() const override { return scaled(-1.0); }
    SpaceSpec space() const override { return sys->space; }
};

struct SeqNode final : SynthNode {
    std::vector<SynthPtr> parts; // applied in order

    explicit SeqNode(std::vector<SynthPtr> p) : parts(std::move(p)) {}

    void emit(FlowMap& fm) const override {
        for (const auto& p : parts) p->emit(fm);
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem* sys) const override {
        for (const auto& p : parts) p->emit_schedule(cs, sys);
    }
    const MechanicalSystem* schedule_system() const override {
        const MechanicalSystem* sys = nullptr;
        for (const auto& p : parts) {
            const MechanicalSystem* s = p->schedule_system();
            if (!s) return nullptr;
            if (sys && s != sys) return nullptr;
            sys = s;
        }
        return sys;
    }
    double time() const override {
        double t = 0;
        for (const auto& p : parts) t += p->time();
        return t;
    }
    SynthPtr scaled(double) const override {
        throw unsupported_error("scaled: generic composition has no generator rescaling");
    }
    SynthPtr inverted() const override {
        std::vector<SynthPtr> inv;
        for (auto it = parts.rbegin(); it != parts.rend(); ++it) inv.push_back((*it)->inverted());
        return std::make_shared<SeqNode>(std::move(inv));
    }
    SpaceSpec space() const override { return parts.at(0)->space(); }
};

// Conjugation with phi applied first (time order [phi; mid; phi^{-1}]),
// which is the flow of mid's generator composed with phi; rescaling acts on
// the middle only.
struct ConjNode final : SynthNode {
    SynthPtr phi, mid;

    ConjNode(SynthPtr f, SynthPtr m) : phi(std::move(f)), mid(std::move(m)) {}

    void emit(FlowMap& fm) const override {
        phi->emit(fm);
        mid->emit(fm);
        phi->inverted()->emit(fm);
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem* sys) const override {
        phi->emit_schedule(cs, sys);
        mid->emit_schedule(cs, sys);
        phi->inverted()->emit_schedule(cs, sys);
    }
    const MechanicalSystem* schedule_system() const override {
        const MechanicalSystem* a = phi->schedule_system();
        const MechanicalSystem* b = mid->schedule_system();
        if (!a || !b || a != b) return nullptr;
        return a;
    }
    double time() const override { return 2 * phi->time() + mid->time(); }
    SynthPtr scaled(double lambda) const override {
        return std::make_shared<ConjNode>(phi, mid->scaled(lambda));
    }
    SynthPtr inverted() const override {
        return std::make_shared<ConjNode>(phi, mid->inverted());
    }
    SpaceSpec space() const override { return mid->space(); }
};

// Oscillator arc e^{theta (|p|^2+|q|^2)/2} on the auxiliary system; period
// 2pi makes any rescaling a forward arc.
struct OscNode final : SynthNode {
    SystemPtr sys; // oscillator_system(d)
    double theta, dt;
    bool exact;

    OscNode(SystemPtr sy, double th, double step, bool ex)
        : sys(std::move(sy)), theta(th), dt(step), exact(ex) {}

    static double wrap_arc(double t) {
        double r = std::fmod(t, 2 * kPi);
        if (r < 0) r += 2 * kPi;
        return r;
    }

    void emit(FlowMap& fm) const override {
        if (exact) {
            // Globally valid rotation: the quadratic is exact everywhere, so
            // certify with an enormous plateau.
            PhasePoint center(Vec(sys->space.d, 0.0), Vec(sys->space.d, 0.0));
            fm.stages.push_back(RotationStage{center, 1.0, theta, CutoffSpec{1e12, 2e12}});
            return;
        }
        Vec u(sys->m(), 1.0);
        fm.stages.push_back(NumericStage{frozen_hamiltonian(*sys, u), theta, dt});
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem*) const override {
        if (exact) throw input_error("schedule: exact oscillator arc has no segment");
        cs.segments.push_back({theta, Vec(sys->m(), 1.0)});
    }
    const MechanicalSystem* schedule_system() const override { return exact ? nullptr : sys.get(); }
    double time() const override { return exact ? 0.0 : theta; }
    SynthPtr scaled(double lambda) const override {
        return std::make_shared<OscNode>(sys, wrap_arc(lambda * theta), dt, exact);
    }
    SynthPtr inverted() const override { return scaled(-1.0); }
    SpaceSpec space() const override { return sys->space; }
};

// e^{s |p|^2/2} on R^d for any sign of s: forward free flight when s >= 0;
// otherwise kick / oscillator arc / kick with sin(theta) = -s per unit chunk.
struct DriftPowNode final : SynthNode {
    int d;
    double s;
    ReverseDriftOptions opts;
    SystemPtr osc;

    DriftPowNode(int dim, double ss, ReverseDriftOptions o)
        : d(dim), s(ss), opts(o), osc(std::make_shared<MechanicalSystem>(oscillator_system(dim))) {}

    void emit(FlowMap& fm) const override {
        SpaceSpec sp(SpaceKind::euclidean, d);
        if (s >= 0) {
            if (opts.exact_drift) {
                fm.stages.push_back(
                    make_horizontal_shear(ScalarField::from_expr_p(HamExpr::kinetic(d)), s));
            } else {
                fm.stages.push_back(
                    NumericStage{frozen_hamiltonian(*osc, Vec(1, 0.0)), s, opts.dt});
            }
            return;
        }
        double left = -s;
        while (left > 1e-15) {
            double chunk = std::min(1.0, left);
            left -= chunk;
            double theta = 2 * kPi - std::asin(chunk);
            double a = (1.0 - std::sqrt(1.0 - chunk * chunk)) / chunk;
            HamExpr q2 = HamExpr::zero(d);
            for (int i = 0; i < d; ++i) {
                std::vector<int> qe(d, 0);
                qe[i] = 2;
                q2.add_term(ExprTerm{Rational(1, 2), qe, std::vector<int>(d, 0), std::nullopt});
            }
            ScalarField v = ScalarField::from_expr_q(q2);
            fm.stages.push_back(make_vertical_shear(v, a));
            OscNode(osc, theta, opts.dt, opts.exact_osc).emit(fm);
            fm.stages.push_back(make_vertical_shear(v, a));
        }
    }
    void emit_schedule(ControlSchedule& cs, const MechanicalSystem* sys) const override {
        if (s >= 0) {
            cs.segments.push_back({s, Vec(1, 0.0)});
            return;
        }
        (void)sys;
        throw input_error("schedule: backward drift uses exact kicks; request flow() instead");
    }
    const MechanicalSystem* schedule_system() const override { return s >= 0 ? osc.get() : nullptr; }
    double time() const override {
        if (s >= 0) return s;
        return std::ceil(-s - 1e-12) * 2 * kPi; // oscillator arcs dominate
    }
    SynthPtr scaled(double lambda) const override {
        return std::make_shared<DriftPowNode>(d, lambda * s, opts);
    }
    SynthPtr inverted() const override { return scaled(-1.0); }
    SpaceSpec space() const override { return SpaceSpec(SpaceKind::euclidean, d); }
};

} // namespace

double SynthesisResult::total_time() const { return node->time(); }

bool SynthesisResult::pure_schedule() const { return node->schedule_system() != nullptr; }

FlowMap SynthesisResult::flow() const {
    FlowMap fm(node->space());
    node->emit(fm);
    return fm;
}

ControlSchedule SynthesisResult::schedule() const {
    const MechanicalSystem* sys = node->schedule_system();
    if (!sys) throw input_error("schedule: result is not a pure schedule on one system");
    ControlSchedule cs;
    node->emit_schedule(cs, sys);
    return cs;
}

const MechanicalSystem& SynthesisResult::system() const {
    const MechanicalSystem* sys = node->schedule_system();
    if (!sys) throw input_error("system: result is not a pure schedule on one system");
    return *sys;
}

SynthesisResult SynthesisResult::scaled(double lambda) const {
    SynthesisResult r;
    r.node = node->scaled(lambda);
    if (predicted) {
        auto c = Rational::from_double_exact(lambda);
        if (c) r.predicted = predicted->scaled(*c);
    }
    r.label = label + " scaled";
    return r;
}

SynthesisResult SynthesisResult::inverted() const {
    SynthesisResult r;
    r.node = node->inverted();
    if (predicted) r.predicted = -*predicted;
    r.label = label + " inverted";
    return r;
}

SynthesisResult potential_kick(const SystemPtr& sys, int j, double s, double sigma, double dt,
                               bool exact) {
    if (j < 0 || j >= sys->m()) throw input_error("potential_kick: control index out of range");
    if (sigma <= 0) throw input_error("potential_kick: sigma must be positive");
    SynthesisResult r;
    r.node = std::make_shared<KickNode>(sys, j, s, sigma, dt, exact);
    if (sys->controls[j].symbolic()) {
        auto c = Rational::from_double_exact(s);
        if (c) r.predicted = sys->controls[j].expr()->scaled(*c);
    }
    r.label = "kick " + sys->controls[j].name();
    return r;
}

SynthesisResult drift_segment(const SystemPtr& sys, double tau, double dt) {
    SynthesisResult r;
    r.node = std::make_shared<DriftNode>(sys, tau, dt);
    auto c = Rational::from_double_exact(tau);
    if (c) {
        HamExpr H0 = HamExpr::kinetic(sys->space.d);
        if (sys->V0.symbolic()) H0 = H0 + *sys->V0.expr();
        if (sys->V0.symbolic() || sys->V0.is_zero()) r.predicted = H0.scaled(*c);
    }
    r.label = "drift";
    return r;
}

SynthesisResult exact_stage(const SystemPtr& sys, FlowStage st, std::string label,
                            std::optional<HamExpr> generator) {
    SynthesisResult r;
    r.node = std::make_shared<StageNode>(sys, std::move(st));
    r.predicted = std::move(generator);
    r.label = std::move(label);
    return r;
}

namespace {

// The constant function has null contribution to the Hamiltonian vector field.
HamExpr drop_constants(const HamExpr& h) {
    HamExpr out = HamExpr::zero(h.dim());
    for (const auto& t : h.terms()) {
        bool constant = !t.trig;
        for (int i = 0; i < h.dim() && constant; ++i)
            if (t.qexp[i] || t.pexp[i]) constant = false;
        if (!constant) out.add_term(t);
    }
    return out;
}

// h composed with an affine symplectic map: q -> q + cq, p -> p + B q + cp.
// Exact only when the result stays in the expression class (trig factors bar
// q-shifts).
std::optional<HamExpr> substitute_affine(const HamExpr& h, const std::vector<Rational>& cq,
                                         const std::vector<std::vector<Rational>>& B,
                                         const std::vector<Rational>& cp) {
    const int d = h.dim();
    bool shift_q = false;
    for (const auto& c : cq)
        if (!c.is_zero()) shift_q = true;
    for (const auto& t : h.terms())
        if (t.trig && shift_q) return std::nullopt;

    HamExpr out = HamExpr::zero(d);
    for (const auto& t : h.terms()) {
        HamExpr term = HamExpr::constant(d, t.coeff);
        for (int i = 0; i < d; ++i)
            for (int e = 0; e < t.qexp[i]; ++e)
                term = term * (HamExpr::q(d, i) + HamExpr::constant(d, cq[i]));
        for (int i = 0; i < d; ++i) {
            if (t.pexp[i] == 0) continue;
            HamExpr pi = HamExpr::p(d, i) + HamExpr::constant(d, cp[i]);
            for (int k = 0; k < d; ++k)
                if (!B[i][k].is_zero()) pi = pi + HamExpr::q(d, k).scaled(B[i][k]);
            for (int e = 0; e < t.pexp[i]; ++e) term = term * pi;
        }
        if (t.trig)
            term = term * HamExpr::trig(d, Rational(1), t.trig->freq, t.trig->phase);
        out = out + term;
    }
    // Constants have no effect on the Hamiltonian vector field.
    HamExpr cleaned = HamExpr::zero(d);
    for (const auto& t : out.terms()) {
        bool constant = !t.trig;
        for (int i = 0; i < d && constant; ++i)
            if (t.qexp[i] || t.pexp[i]) constant = false;
        if (!constant) cleaned.add_term(t);
    }
    return cleaned;
}

// Affine action of an exact inner element on phase space, when recognizable.
struct AffineAction {
    std::vector<Rational> cq, cp;
    std::vector<std::vector<Rational>> B;
};

std::optional<AffineAction> affine_of(const SynthesisResult& inner) {
    if (!inner.predicted) return std::nullopt;
    const HamExpr& f = *inner.predicted;
    const int d = f.dim();
    AffineAction a;
    a.cq.assign(d, Rational(0));
    a.cp.assign(d, Rational(0));
    a.B.assign(d, std::vector<Rational>(d, Rational(0)));
    // Supported inner generators: potentials with constant or linear gradient
    // (linear forms and quadratics in q), and momentum-linear forms.
    for (const auto& t : f.terms()) {
        if (t.trig) return std::nullopt;
        int qdeg = 0, pdeg = 0;
        for (int i = 0; i < d; ++i) {
            qdeg += t.qexp[i];
            pdeg += t.pexp[i];
        }
        if (pdeg == 0 && qdeg == 1) {
            // c * q_i: kick p_i by -c
            for (int i = 0; i < d; ++i)
                if (t.qexp[i]) a.cp[i] = a.cp[i] - t.coeff;
        } else if (pdeg == 0 && qdeg == 2) {
            // quadratic potential: p -> p - grad
            for (int i = 0; i < d; ++i) {
                if (t.qexp[i] == 2) a.B[i][i] = a.B[i][i] - t.coeff * Rational(2);
                for (int k = 0; k < d; ++k)
                    if (i != k && t.qexp[i] == 1 && t.qexp[k] == 1) a.B[i][k] = a.B[i][k] - t.coeff;
            }
        } else if (qdeg == 0 && pdeg == 1) {
            // c * p_i: q_i shifts by c
            for (int i = 0; i < d; ++i)
                if (t.pexp[i]) a.cq[i] = a.cq[i] + t.coeff;
        } else {
            return std::nullopt;
        }
    }
    return a;
}

} // namespace

SynthesisResult conjugate(const SynthesisResult& inner, const SynthesisResult& mid) {
    SynthesisResult r;
    r.node = std::make_shared<ConjNode>(inner.node, mid.node);
    r.label = "conj(" + inner.label + ", " + mid.label + ")";
    if (mid.predicted) {
        if (auto aff = affine_of(inner))
            r.predicted = substitute_affine(*mid.predicted, aff->cq, aff->B, aff->cp);
    }
    return r;
}

SynthesisResult lie_product(const SynthesisResult& f, const SynthesisResult& g, int n) {
    if (n < 1) throw input_error("lie_product: n must be >= 1");
    std::vector<SynthPtr> parts;
    SynthPtr fn = f.node->scaled(1.0 / n);
    SynthPtr gn = g.node->scaled(1.0 / n);
    for (int k = 0; k < n; ++k) {
        parts.push_back(fn);
        parts.push_back(gn);
    }
    SynthesisResult r;
    r.node = std::make_shared<SeqNode>(std::move(parts));
    if (f.predicted && g.predicted) r.predicted = *f.predicted + *g.predicted;
    r.label = "lie_product(" + f.label + ", " + g.label + ")";
    return r;
}

SynthesisResult bracket_schedule(const SynthesisResult& f, const SynthesisResult& g, double tau,
                                 bool cancel, int cancel_n) {
    if (tau <= 0) throw input_error("bracket_schedule: tau must be positive");
    SynthesisResult conj;
    conj.node = std::make_shared<ConjNode>(f.node->scaled(tau), g.node->scaled(1.0 / tau));
    conj.label = "bracket(" + f.label + ", " + g.label + ")";
    std::optional<HamExpr> fg;
    if (f.predicted && g.predicted)
        fg = drop_constants(poisson_bracket(*f.predicted, *g.predicted));
    if (!cancel) {
        if (fg && g.predicted) {
            auto c = Rational::from_double_exact(1.0 / tau);
            if (c) conj.predicted = g.predicted->scaled(*c) + *fg;
        }
        return conj;
    }
    SynthesisResult counter;
    counter.node = g.node->scaled(-1.0 / tau);
    SynthesisResult r = lie_product(conj, counter, cancel_n);
    r.predicted = fg;
    r.label = "bracket(" + f.label + ", " + g.label + ") cancelled";
    return r;
}

SynthesisResult drift_power(int d, double s, const ReverseDriftOptions& opts) {
    if (d < 1) throw input_error("drift_power: d must be >= 1");
    SynthesisResult r;
    r.node = std::make_shared<DriftPowNode>(d, s, opts);
    auto c = Rational::from_double_exact(s);
    if (c) r.predicted = HamExpr::kinetic(d).scaled(*c);
    r.label = "drift_power";
    return r;
}

SynthesisResult reverse_drift_euclidean(int d, double w, double tau,
                                        const ReverseDriftOptions& opts) {
    if (d < 1) throw input_error("reverse_drift_euclidean: d must be >= 1");
    SystemPtr osc = std::make_shared<MechanicalSystem>(oscillator_system(d));
    SpaceSpec sp(SpaceKind::euclidean, d);
    SynthesisResult r;
    if (w >= 0) {
        if (tau <= 0) throw input_error("reverse_drift_euclidean: tau must be positive");
        // D_{1/sqrt(tau)} e^{tau w drift} D_{sqrt(tau)} = e^{w drift}
        std::vector<SynthPtr> parts;
        parts.push_back(std::make_shared<StageNode>(osc, make_dilation(sp, std::sqrt(tau))));
        parts.push_back(std::make_shared<DriftPowNode>(d, tau * w, opts));
        parts.push_back(std::make_shared<StageNode>(osc, make_dilation(sp, 1.0 / std::sqrt(tau))));
        r.node = std::make_shared<SeqNode>(std::move(parts));
    } else {
        r.node = std::make_shared<DriftPowNode>(d, w, opts);
    }
    auto c = Rational::from_double_exact(w);
    if (c) r.predicted = HamExpr::kinetic(d).scaled(*c);
    r.label = "reverse_drift";
    return r;
}

DensityReversalPlan reverse_drift_density_torus(const Mesh& mesh,
                                                const std::vector<CubeIndex>& cubes, double tau,
                                                const CompileConfig& config) {
    if (!mesh.space().torus())
        throw unsupported_error("reverse_drift_density_torus: torus space required");
    if (tau < 0) throw input_error("reverse_drift_density_torus: tau must be nonnegative");
    CompileResult sym = emulate_symmetry(mesh, cubes, config);
    DensityReversalPlan plan;
    plan.flow = FlowMap(mesh.space());
    plan.flow.safety_box = std::max(1e3, 100 * mesh.p_box());
    for (const auto& st : sym.seq.flow.stages) plan.flow.stages.push_back(st);
    if (tau > 0)
        plan.flow.stages.push_back(
            make_horizontal_shear(ScalarField::from_expr_p(HamExpr::kinetic(mesh.space().d)), tau));
    for (const auto& st : sym.seq.flow.stages) plan.flow.stages.push_back(st);
    plan.rotation_time = 2 * sym.seq.rotation_time;
    plan.note = "density-level reversal: S drift S realized by cube rotations; "
                "valid for densities carried by the listed cubes, not pointwise";
    return plan;
}

SynthesisError synthesis_error(const SynthesisResult& result, const FlowMap& target,
                               const PhaseBox& K, int samples) {
    SynthesisError e;
    e.c0 = c0_distance(result.flow(), target, K, samples);
    e.total_time = result.total_time();
    return e;
}

} // namespace hamflow
