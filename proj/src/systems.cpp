#include "hamflow/systems.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

ScalarField ScalarField::from_expr_q(HamExpr e) {
    if (e.depends_on_p()) throw input_error("ScalarField: potential must depend on q only");
    ScalarField f;
    f.d_ = e.dim();
    f.name_ = e.str();
    f.expr_ = std::move(e);
    f.expr_in_p_ = false;
    return f;
}

ScalarField ScalarField::from_expr_p(HamExpr e) {
    if (e.depends_on_q()) throw input_error("ScalarField: momentum function must depend on p only");
    ScalarField f;
    f.d_ = e.dim();
    f.name_ = e.str();
    f.expr_ = std::move(e);
    f.expr_in_p_ = true;
    return f;
}

ScalarField ScalarField::blackbox(std::string name, int d, std::function<double(const Vec&)> value,
                                  std::function<Vec(const Vec&)> grad, double grad_lipschitz,
                                  std::function<Mat(const Vec&)> hess) {
    ScalarField f;
    f.d_ = d;
    f.name_ = std::move(name);
    f.value_ = std::move(value);
    f.grad_ = std::move(grad);
    f.hess_ = std::move(hess);
    f.lipschitz_ = grad_lipschitz;
    return f;
}

ScalarField ScalarField::zero(int d) {
    ScalarField f;
    f.d_ = d;
    return f;
}

ScalarField ScalarField::gaussian(int d) {
    auto val = [](const Vec& q) { return std::exp(-0.5 * vdot(q, q)); };
    auto grad = [](const Vec& q) {
        double g = std::exp(-0.5 * vdot(q, q));
        Vec r(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) r[i] = -q[i] * g;
        return r;
    };
    auto hess = [](const Vec& q) {
        double g = std::exp(-0.5 * vdot(q, q));
        int d = static_cast<int>(q.size());
        Mat h(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) h(i, j) = g * (q[i] * q[j] - (i == j ? 1.0 : 0.0));
        return h;
    };
    // |grad^2 e^{-|q|^2/2}| is bounded by 1.
    return blackbox("exp(-|q|^2/2)", d, val, grad, 1.0, hess);
}

bool ScalarField::is_zero() const {
    if (expr_) return expr_->is_zero();
    return !value_;
}

double ScalarField::value(const Vec& x) const {
    if (expr_) {
        Vec zeros(d_, 0.0);
        return expr_in_p_ ? expr_->eval(zeros, x) : expr_->eval(x, zeros);
    }
    return value_ ? value_(x) : 0.0;
}

Vec ScalarField::grad(const Vec& x) const {
    if (expr_) {
        Vec zeros(d_, 0.0);
        double v;
        Vec gq, gp;
        if (expr_in_p_) {
            expr_->eval_with_grads(zeros, x, v, gq, gp);
            return gp;
        }
        expr_->eval_with_grads(x, zeros, v, gq, gp);
        return gq;
    }
    return grad_ ? grad_(x) : Vec(x.size(), 0.0);
}

Mat ScalarField::hess(const Vec& x) const {
    if (expr_) {
        Mat h(d_, d_);
        for (int i = 0; i < d_; ++i) {
            HamExpr di = expr_in_p_ ? expr_->partial_p(i) : expr_->partial_q(i);
            Vec zeros(d_, 0.0);
            double v;
            Vec gq, gp;
            if (expr_in_p_) {
                di.eval_with_grads(zeros, x, v, gq, gp);
                for (int j = 0; j < d_; ++j) h(i, j) = gp[j];
            } else {
                di.eval_with_grads(x, zeros, v, gq, gp);
                for (int j = 0; j < d_; ++j) h(i, j) = gq[j];
            }
        }
        return h;
    }
    if (hess_) return hess_(x);
    // central differences of the gradient
    const double eps = 1e-6;
    Mat h(d_, d_);
    Vec xp = x, xm = x;
    for (int j = 0; j < d_; ++j) {
        xp[j] += eps;
        xm[j] -= eps;
        Vec gp = grad(xp), gm = grad(xm);
        for (int i = 0; i < d_; ++i) h(i, j) = (gp[i] - gm[i]) / (2 * eps);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return h;
}

ScalarField combine_fields(const std::vector<const ScalarField*>& fields, const Vec& coeffs) {
    if (fields.size() != coeffs.size()) throw input_error("combine_fields: size mismatch");
    if (fields.empty()) throw input_error("combine_fields: empty");
    const int d = fields[0]->dim();

    bool symbolic = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i]->dim() != d) throw input_error("combine_fields: dimension mismatch");
        if (coeffs[i] != 0.0 && !fields[i]->symbolic()) symbolic = false;
        if (!Rational::from_double_exact(coeffs[i])) symbolic = false;
    }
    if (symbolic) {
        // All expression-backed fields here are q-fields (potentials).
        HamExpr sum = HamExpr::zero(d);
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (coeffs[i] == 0.0 || fields[i]->is_zero()) continue;
            sum = sum + fields[i]->expr()->scaled(*Rational::from_double_exact(coeffs[i]));
        }
        return ScalarField::from_expr_q(std::move(sum));
    }

    std::vector<ScalarField> owned;
    owned.reserve(fields.size());
    for (auto* f : fields) owned.push_back(*f);
    Vec c = coeffs;
    double lip = 0;
    for (std::size_t i = 0; i < owned.size(); ++i) lip += std::fabs(c[i]) * owned[i].grad_lipschitz();
    auto val = [owned, c](const Vec& x) {
        double s = 0;
        for (std::size_t i = 0; i < owned.size(); ++i)
            if (c[i] != 0.0) s += c[i] * owned[i].value(x);
        return s;
    };
    auto grd = [owned, c](const Vec& x) {
        Vec s(x.size(), 0.0);
        for (std::size_t i = 0; i < owned.size(); ++i) {
            if (c[i] == 0.0) continue;
            Vec g = owned[i].grad(x);
            for (std::size_t k = 0; k < s.size(); ++k) s[k] += c[i] * g[k];
        }
        return s;
    };
    auto hss = [owned, c](const Vec& x) {
        int d = static_cast<int>(x.size());
        Mat s(d, d);
        for (std::size_t i = 0; i < owned.size(); ++i) {
            if (c[i] == 0.0) continue;
            Mat h = owned[i].hess(x);
            for (std::size_t k = 0; k < s.a.size(); ++k) s.a[k] += c[i] * h.a[k];
        }
        return s;
    };
    return ScalarField::blackbox("combination", d, val, grd, lip, hss);
}

void MechanicalSystem::validate() const {
    if (space.d < 1) throw input_error("MechanicalSystem: d must be >= 1");
    if (!V0.is_zero() && V0.dim() != space.d) throw input_error("MechanicalSystem: V0 dimension");
    for (const auto& c : controls)
        if (c.dim() != space.d) throw input_error("MechanicalSystem: control dimension");
    if (space.torus()) {
        if (V0.symbolic() && V0.expr()->has_q_monomials())
            throw input_error("MechanicalSystem: torus potential has q-monomials");
        for (const auto& c : controls)
            if (c.symbolic() && c.expr()->has_q_monomials())
                throw input_error("MechanicalSystem: torus control has q-monomials");
    }
}

MechanicalSystem euclidean_preset(int d, ScalarField V0) {
    if (d < 1) throw input_error("euclidean_preset: d must be >= 1");
    MechanicalSystem sys;
    sys.space = SpaceSpec(SpaceKind::euclidean, d);
    sys.V0 = V0.is_zero() ? ScalarField::zero(d) : std::move(V0);
    for (int j = 0; j < d; ++j) sys.controls.push_back(ScalarField::from_expr_q(HamExpr::q(d, j)));
    sys.controls.push_back(ScalarField::gaussian(d));
    sys.validate();
    return sys;
}

MechanicalSystem torus_preset(int d, ScalarField V0) {
    if (d < 1) throw input_error("torus_preset: d must be >= 1");
    MechanicalSystem sys;
    sys.space = SpaceSpec(SpaceKind::torus, d);
    sys.V0 = V0.is_zero() ? ScalarField::zero(d) : std::move(V0);
    for (int j = 0; j < d; ++j) {
        std::vector<int> k(d, 0);
        if (j < d - 1)
            k[j] = 1;
        else
            k.assign(d, 1);
        sys.controls.push_back(
            ScalarField::from_expr_q(HamExpr::trig(d, Rational(1), k, TrigPhase::cosine)));
        sys.controls.push_back(
            ScalarField::from_expr_q(HamExpr::trig(d, Rational(1), k, TrigPhase::sine)));
    }
    sys.validate();
    return sys;
}

MechanicalSystem oscillator_system(int d) {
    MechanicalSystem sys;
    sys.space = SpaceSpec(SpaceKind::euclidean, d);
    sys.V0 = ScalarField::zero(d);
    HamExpr q2 = HamExpr::zero(d);
    for (int i = 0; i < d; ++i) {
        std::vector<int> qe(d, 0);
        qe[i] = 2;
        q2.add_term(ExprTerm{Rational(1, 2), qe, std::vector<int>(d, 0), std::nullopt});
    }
    sys.controls.push_back(ScalarField::from_expr_q(std::move(q2)));
    sys.validate();
    return sys;
}

double ControlSchedule::total_duration() const {
    double t = 0;
    for (const auto& s : segments) t += s.tau;
    return t;
}

void ControlSchedule::validate(int m) const {
    for (const auto& s : segments) {
        if (s.tau <= 0) throw input_error("ControlSchedule: durations must be positive");
        if (static_cast<int>(s.u.size()) != m)
            throw input_error("ControlSchedule: control vector length mismatch");
    }
}

ControlSchedule ControlSchedule::then(const ControlSchedule& next) const {
    ControlSchedule r = *this;
    r.segments.insert(r.segments.end(), next.segments.begin(), next.segments.end());
    return r;
}

std::string schedule_to_csv(const ControlSchedule& s) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& seg : s.segments) {
        os << seg.tau;
        for (double u : seg.u) os << "," << u;
        os << "\n";
    }
    return os.str();
}

ControlSchedule schedule_from_csv(const std::string& text) {
    ControlSchedule s;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw input_error("schedule csv: bad number '" + cell + "'");
            }
        }
        if (row.size() < 2) throw input_error("schedule csv: rows are tau,u_1..u_m");
        ControlSchedule::Segment seg;
        seg.tau = row[0];
        seg.u.assign(row.begin() + 1, row.end());
        s.segments.push_back(std::move(seg));
    }
    return s;
}

HamHandle::HamHandle(SpaceSpec space, ScalarField W) : space_(space), W_(std::move(W)) {
    if (W_.symbolic()) {
        symbolic_ = HamExpr::kinetic(space_.d) + *W_.expr();
    } else if (W_.is_zero()) {
        symbolic_ = HamExpr::kinetic(space_.d);
    }
}

double HamHandle::value(const PhasePoint& x) const {
    return 0.5 * vdot(x.p, x.p) + W_.value(x.q);
}

HamHandle frozen_hamiltonian(const MechanicalSystem& sys, const Vec& u) {
    if (static_cast<int>(u.size()) != sys.m())
        throw input_error("frozen_hamiltonian: control vector length mismatch");
    std::vector<const ScalarField*> fields;
    Vec coeffs;
    fields.push_back(&sys.V0);
    coeffs.push_back(sys.V0.is_zero() ? 0.0 : 1.0);
    for (int j = 0; j < sys.m(); ++j) {
        fields.push_back(&sys.controls[j]);
        coeffs.push_back(u[j]);
    }
    return HamHandle(sys.space, combine_fields(fields, coeffs));
}

namespace {

nlohmann::json field_to_json(const ScalarField& f) {
    if (f.is_zero()) return 0;
    if (f.symbolic()) return f.expr()->str();
    if (f.name() == "exp(-|q|^2/2)") return nlohmann::json{{"builtin", "gaussian"}};
    throw input_error("system json: black-box potential '" + f.name() + "' is not serializable");
}

ScalarField field_from_json(const nlohmann::json& j, int d) {
    if (j.is_number() && j.get<double>() == 0.0) return ScalarField::zero(d);
    if (j.is_string()) return ScalarField::from_expr_q(HamExpr::parse(j.get<std::string>(), d));
    if (j.is_object() && j.contains("builtin")) {
        std::string b = j.at("builtin").get<std::string>();
        if (b == "gaussian") return ScalarField::gaussian(d);
        throw input_error("system json: unknown builtin '" + b + "'");
    }
    throw input_error("system json: potential must be 0, an expression string, or a builtin");
}

} // namespace

std::string system_to_json(const MechanicalSystem& sys) {
    nlohmann::json j;
    j["space"] = {{"kind", sys.space.kind_name()}, {"d", sys.space.d}};
    j["V0"] = field_to_json(sys.V0);
    auto controls = nlohmann::json::array();
    for (const auto& c : sys.controls) controls.push_back(field_to_json(c));
    j["controls"] = controls;
    return j.dump(2);
}

MechanicalSystem system_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    const auto& sp = j.at("space");
    int d = sp.at("d").get<int>();
    SpaceKind kind = sp.at("kind").get<std::string>() == "torus" ? SpaceKind::torus
                                                                 : SpaceKind::euclidean;
    // Presets by name, or explicit potential lists.
    if (j.contains("preset")) {
        std::string preset = j.at("preset").get<std::string>();
        ScalarField V0 = j.contains("V0") ? field_from_json(j.at("V0"), d) : ScalarField::zero(d);
        if (preset == "euclidean") return euclidean_preset(d, std::move(V0));
        if (preset == "torus") return torus_preset(d, std::move(V0));
        if (preset == "oscillator") return oscillator_system(d);
        throw input_error("system json: unknown preset '" + preset + "'");
    }
    MechanicalSystem sys;
    sys.space = SpaceSpec(kind, d);
    sys.V0 = j.contains("V0") ? field_from_json(j.at("V0"), d) : ScalarField::zero(d);
    if (j.contains("controls"))
        for (const auto& c : j.at("controls")) sys.controls.push_back(field_from_json(c, d));
    sys.validate();
    return sys;
}

} // namespace hamflow
