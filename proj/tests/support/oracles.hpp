#pragma once

// Test-only oracles.  Everything here is deliberately independent of the
// implementation paths it checks: brute force, finite differences, closed
// forms.

#include <cmath>
#include <functional>
#include <vector>

#include "hamflow/ham_expr.hpp"
#include "hamflow/linalg.hpp"
#include "hamflow/phase_geometry.hpp"

namespace oracles {

using hamflow::HamExpr;
using hamflow::PhasePoint;
using hamflow::Rng;
using hamflow::Vec;

// Minimize the sup distance over explicit integer wrap shifts.
inline double torus_sup_distance_bruteforce(const PhasePoint& x, const PhasePoint& y) {
    const int d = x.dim();
    double best = 1e300;
    std::vector<int> shift(d, -2);
    while (true) {
        double m = 0;
        for (int i = 0; i < d; ++i)
            m = std::max(m, std::fabs(x.q[i] - y.q[i] + hamflow::two_pi * shift[i]));
        for (std::size_t i = 0; i < x.p.size(); ++i)
            m = std::max(m, std::fabs(x.p[i] - y.p[i]));
        best = std::min(best, m);
        int axis = 0;
        while (axis < d && ++shift[axis] > 2) shift[axis++] = -2;
        if (axis == d) break;
    }
    return best;
}

// Central finite-difference Poisson bracket of two scalar callables.
inline double fd_poisson_bracket(const std::function<double(const Vec&, const Vec&)>& f,
                                 const std::function<double(const Vec&, const Vec&)>& g,
                                 const Vec& q, const Vec& p, double eps = 1e-5) {
    const int d = static_cast<int>(q.size());
    double sum = 0;
    Vec qp = q, qm = q, pp = p, pm = p;
    for (int j = 0; j < d; ++j) {
        pp[j] += eps;
        pm[j] -= eps;
        double df_dp = (f(q, pp) - f(q, pm)) / (2 * eps);
        double dg_dp = (g(q, pp) - g(q, pm)) / (2 * eps);
        pp[j] = p[j];
        pm[j] = p[j];
        qp[j] += eps;
        qm[j] -= eps;
        double df_dq = (f(qp, p) - f(qm, p)) / (2 * eps);
        double dg_dq = (g(qp, p) - g(qm, p)) / (2 * eps);
        qp[j] = q[j];
        qm[j] = q[j];
        sum += df_dp * dg_dq - df_dq * dg_dp;
    }
    return sum;
}

// Volume of the intersection of two axis-aligned boxes.
inline double box_overlap_volume(const Vec& lo1, const Vec& hi1, const Vec& lo2, const Vec& hi2) {
    double v = 1;
    for (std::size_t i = 0; i < lo1.size(); ++i) {
        double w = std::min(hi1[i], hi2[i]) - std::max(lo1[i], lo2[i]);
        if (w <= 0) return 0;
        v *= w;
    }
    return v;
}

// Random low-degree expression.  Trig-only in q when torus_safe.
inline HamExpr random_expr(Rng& rng, int d, int max_terms, bool torus_safe = false,
                           int max_deg = 2) {
    HamExpr e = HamExpr::zero(d);
    int terms = 1 + rng.uniform_int(0, max_terms - 1);
    for (int t = 0; t < terms; ++t) {
        hamflow::ExprTerm term;
        term.coeff = hamflow::Rational(rng.uniform_int(-3, 3), 1 + rng.uniform_int(0, 2));
        if (term.coeff.is_zero()) term.coeff = hamflow::Rational(1, 2);
        term.qexp.assign(d, 0);
        term.pexp.assign(d, 0);
        for (int i = 0; i < d; ++i) {
            if (!torus_safe) term.qexp[i] = rng.uniform_int(0, max_deg);
            term.pexp[i] = rng.uniform_int(0, max_deg);
        }
        if (rng.uniform() < 0.5) {
            std::vector<int> k(d, 0);
            for (int i = 0; i < d; ++i) k[i] = rng.uniform_int(-2, 2);
            term.trig = hamflow::TrigFactor{
                k, rng.uniform() < 0.5 ? hamflow::TrigPhase::cosine : hamflow::TrigPhase::sine};
        }
        e.add_term(term);
    }
    return e;
}

inline PhasePoint random_point(Rng& rng, int d, double radius = 1.0) {
    Vec q(d), p(d);
    for (int i = 0; i < d; ++i) {
        q[i] = rng.uniform(-radius, radius);
        p[i] = rng.uniform(-radius, radius);
    }
    return PhasePoint(std::move(q), std::move(p));
}

} // namespace oracles
