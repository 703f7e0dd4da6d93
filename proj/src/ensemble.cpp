#include "hamflow/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hamflow/bump.hpp"
#include "hamflow/errors.hpp"

namespace hamflow {

void EnsembleState::validate() const {
    for (const auto& x : points)
        if (x.dim() != space.d || static_cast<int>(x.p.size()) != space.d)
            throw input_error("EnsembleState: point dimension mismatch");
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if (sup_distance(points[i], points[j], space) < 1e-12)
                throw input_error("EnsembleState: points must be pairwise distinct");
}

namespace {

double position_margin(const EnsembleState& ens, double delta) {
    double margin = 1e300;
    for (std::size_t i = 0; i < ens.points.size(); ++i)
        for (std::size_t j = i + 1; j < ens.points.size(); ++j) {
            Vec qi = ens.points[i].q, qj = ens.points[j].q;
            for (int k = 0; k < ens.space.d; ++k) {
                qi[k] += delta * ens.points[i].p[k];
                qj[k] += delta * ens.points[j].p[k];
            }
            Vec dq = ens.space.q_diff(ens.space.wrap_q(qi), ens.space.wrap_q(qj));
            margin = std::min(margin, sup_norm(dq));
        }
    return ens.points.size() < 2 ? 1e300 : margin;
}

} // namespace

SeparateResult separate(const EnsembleState& ens, double delta_max) {
    ens.validate();
    if (delta_max <= 0) throw input_error("separate: delta_max must be positive");
    const double floor = 1e-9;
    int K = 8;
    for (int refinement = 0; refinement < 20; ++refinement) {
        for (int k = 0; k <= K; ++k) {
            double delta = delta_max * k / K;
            double m = position_margin(ens, delta);
            if (m > floor) return SeparateResult{delta, m};
        }
        K *= 2;
    }
    throw input_error("separate: no admissible drift found (degenerate ensemble)");
}

ScalarField ensemble_interpolant(const SpaceSpec& space, const std::vector<Vec>& positions,
                                 const std::vector<Vec>& gradients) {
    if (positions.size() != gradients.size())
        throw input_error("interpolant: positions and gradients must pair up");
    if (positions.empty()) throw input_error("interpolant: empty node list");
    const int d = space.d;
    double min_dist = 1e300;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (static_cast<int>(positions[i].size()) != d)
            throw input_error("interpolant: position dimension mismatch");
        for (std::size_t j = i + 1; j < positions.size(); ++j) {
            Vec dq = space.q_diff(positions[i], positions[j]);
            double dist = sup_norm(dq);
            if (dist < 1e-12) throw input_error("interpolant: coincident positions");
            min_dist = std::min(min_dist, dist);
        }
    }
    double r = positions.size() == 1 ? 1.0 : min_dist / 3.0;
    if (space.torus()) r = std::min(r, 1.0); // keep bumps inside a chart
    const double plateau = 0.5 * r, support = r;

    auto nodes = positions;
    auto grads = gradients;
    double lip = 0;
    for (const auto& a : grads) lip = std::max(lip, 8.0 * sup_norm(a) / r);

    auto value = [space, nodes, grads, plateau, support, d](const Vec& q) {
        double s = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            Vec dq = space.q_diff(q, nodes[i]);
            double b = 1;
            for (int k = 0; k < d; ++k)
                b *= smooth_step((std::fabs(dq[k]) - plateau) / (support - plateau));
            if (b != 0) s += b * vdot(grads[i], dq);
        }
        return s;
    };
    auto grad = [space, nodes, grads, plateau, support, d](const Vec& q) {
        Vec g(d, 0.0);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            Vec dq = space.q_diff(q, nodes[i]);
            Vec f(d), df(d);
            for (int k = 0; k < d; ++k) {
                double t = (std::fabs(dq[k]) - plateau) / (support - plateau);
                f[k] = smooth_step(t);
                df[k] = smooth_step_deriv(t) / (support - plateau) * (dq[k] >= 0 ? 1.0 : -1.0);
            }
            double b = 1;
            for (int k = 0; k < d; ++k) b *= f[k];
            if (b == 0) {
                bool edge = false;
                for (int k = 0; k < d; ++k)
                    if (f[k] == 0) edge = true;
                if (edge) continue;
            }
            double lin = vdot(grads[i], dq);
            for (int k = 0; k < d; ++k) {
                double dbk = df[k];
                for (int m = 0; m < d; ++m)
                    if (m != k) dbk *= f[m];
                g[k] += dbk * lin + b * grads[i][k];
            }
        }
        return g;
    };
    return ScalarField::blackbox("interpolant", d, value, grad, lip);
}

SteeringPlan steer(const EnsembleState& start, const EnsembleState& target, double tau,
                   double delta_max) {
    start.validate();
    target.validate();
    if (start.space.d != target.space.d || start.space.kind != target.space.kind)
        throw input_error("steer: ensembles on different spaces");
    if (start.size() != target.size()) throw input_error("steer: ensemble sizes differ");
    if (tau <= 0) throw input_error("steer: tau must be positive");
    const SpaceSpec space = start.space;
    const int d = space.d;
    const int N = start.size();

    SteeringPlan plan;
    plan.tau = tau;
    plan.flow = FlowMap(space);
    plan.flow.safety_box = 1e6;

    plan.delta1 = separate(start, delta_max).delta;
    // Target positions must be distinct after flowing backward by delta2.
    EnsembleState reversed = target;
    for (auto& x : reversed.points)
        for (double& v : x.p) v = -v;
    plan.delta2 = separate(reversed, delta_max).delta;

    std::vector<Vec> Q(N), Qbar(N);
    for (int i = 0; i < N; ++i) {
        Vec qi = start.points[i].q;
        for (int k = 0; k < d; ++k) qi[k] += plan.delta1 * start.points[i].p[k];
        Q[i] = space.wrap_q(qi);
        Vec qb = target.points[i].q;
        for (int k = 0; k < d; ++k) qb[k] -= plan.delta2 * target.points[i].p[k];
        Qbar[i] = space.wrap_q(qb);
    }

    // Minimal representative of qbar - q; ties at pi resolved downward.
    plan.hat_p.resize(N);
    for (int i = 0; i < N; ++i) {
        Vec hat = space.q_diff(Qbar[i], Q[i]);
        if (space.torus())
            for (double& v : hat)
                if (std::fabs(v - M_PI) < 1e-15) v = -M_PI;
        plan.hat_p[i] = hat;
    }

    std::vector<Vec> f_grad(N), g_grad(N);
    for (int i = 0; i < N; ++i) {
        f_grad[i].resize(d);
        g_grad[i].resize(d);
        for (int k = 0; k < d; ++k) {
            f_grad[i][k] = start.points[i].p[k] - plan.hat_p[i][k] / tau;
            g_grad[i][k] = -target.points[i].p[k] + plan.hat_p[i][k] / tau;
        }
    }
    ScalarField f_tau = ensemble_interpolant(space, Q, f_grad);
    ScalarField g_tau = ensemble_interpolant(space, Qbar, g_grad);

    ScalarField kinetic = ScalarField::from_expr_p(HamExpr::kinetic(d));
    if (plan.delta1 > 0) plan.flow.push(make_horizontal_shear(kinetic, plan.delta1));
    plan.flow.push(make_vertical_shear(f_tau, 1.0));
    plan.flow.push(make_horizontal_shear(kinetic, tau));
    plan.flow.push(make_vertical_shear(g_tau, 1.0));
    if (plan.delta2 > 0) plan.flow.push(make_horizontal_shear(kinetic, plan.delta2));
    return plan;
}

LieRankReport lie_rank_check(const MechanicalSystem& sys, const EnsembleState& gamma,
                             const std::vector<Vec>& probes_in) {
    gamma.validate();
    const SpaceSpec space = sys.space;
    const int d = space.d;
    const int N = gamma.size();

    std::vector<Vec> probes = probes_in;
    if (probes.empty())
        for (int k = 0; k < d; ++k) {
            Vec e(d, 0.0);
            e[k] = 1.0;
            probes.push_back(e);
        }
    if (static_cast<int>(probes.size()) != d)
        throw input_error("lie_rank_check: need d probe vectors");

    LieRankReport rep;
    rep.dimension = 2 * d * N;

    // Positions must be distinct; pre-drift otherwise.
    EnsembleState work = gamma;
    double margin = position_margin(work, 0.0);
    if (margin < 1e-9) {
        SeparateResult s = separate(gamma, 0.05);
        rep.separation_delta = s.delta;
        for (auto& x : work.points) {
            for (int k = 0; k < d; ++k) x.q[k] += s.delta * x.p[k];
            x.q = space.wrap_q(x.q);
        }
    }
    std::vector<Vec> positions(N);
    for (int i = 0; i < N; ++i) positions[i] = work.points[i].q;

    Mat frame(2 * d * N, 2 * d * N);
    int row = 0;
    const double fd = 1e-5;
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < d; ++k) {
            // f localized at point i with gradient probe_k there.
            std::vector<Vec> grads(N, Vec(d, 0.0));
            grads[i] = probes[k];
            ScalarField f = ensemble_interpolant(space, positions, grads);
            // Momentum direction: (f)^{(N)} vector field = (0, -grad f(q^j))_j.
            for (int j = 0; j < N; ++j) {
                Vec g = f.grad(positions[j]);
                for (int a = 0; a < d; ++a) frame(row, j * 2 * d + d + a) = -g[a];
            }
            ++row;
            // Position direction: bracket with the lifted drift,
            // (-grad f(q^j), Hess f(q^j) p^j)_j with vanishing Hessian on the
            // plateaus; assembled numerically.
            for (int j = 0; j < N; ++j) {
                Vec g = f.grad(positions[j]);
                for (int a = 0; a < d; ++a) frame(row, j * 2 * d + a) = -g[a];
                Vec hp(d, 0.0);
                for (int b = 0; b < d; ++b) {
                    Vec qp = positions[j], qm = positions[j];
                    qp[b] += fd;
                    qm[b] -= fd;
                    Vec gp = f.grad(qp), gm = f.grad(qm);
                    for (int a = 0; a < d; ++a)
                        hp[a] += (gp[a] - gm[a]) / (2 * fd) * work.points[j].p[b];
                }
                for (int a = 0; a < d; ++a) frame(row, j * 2 * d + d + a) += hp[a];
            }
            ++row;
        }

    rep.singular_values = singular_values(frame);
    rep.smallest = rep.singular_values.empty() ? 0.0 : rep.singular_values.back();
    rep.full_rank = rep.smallest > 1e-9;
    return rep;
}

std::string SteeringPlan::to_json() const {
    nlohmann::json j = nlohmann::json::parse(flow.to_json());
    j["delta1"] = delta1;
    j["tau"] = tau;
    j["delta2"] = delta2;
    j["total_time"] = total_time();
    j["hat_p"] = hat_p;
    return j.dump(2);
}

std::string LieRankReport::to_json() const {
    nlohmann::json j;
    j["dimension"] = dimension;
    j["singular_values"] = singular_values;
    j["smallest"] = smallest;
    j["full_rank"] = full_rank;
    j["separation_delta"] = separation_delta;
    return j.dump(2);
}

std::string ensemble_to_json(const EnsembleState& e) {
    nlohmann::json j;
    j["kind"] = e.space.kind_name();
    j["d"] = e.space.d;
    auto pts = nlohmann::json::array();
    for (const auto& x : e.points) pts.push_back({{"q", x.q}, {"p", x.p}});
    j["points"] = pts;
    return j.dump(2);
}

EnsembleState ensemble_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EnsembleState e;
    e.space = SpaceSpec(j.at("kind").get<std::string>() == "torus" ? SpaceKind::torus
                                                                   : SpaceKind::euclidean,
                        j.at("d").get<int>());
    for (const auto& pt : j.at("points"))
        e.points.push_back(PhasePoint(pt.at("q").get<Vec>(), pt.at("p").get<Vec>()));
    e.validate();
    return e;
}

} // namespace hamflow
