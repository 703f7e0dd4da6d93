#pragma once

#include <cmath>

#include "hamflow/linalg.hpp"
#include "hamflow/phase_geometry.hpp"

namespace hamflow {

// Smooth monotone step built from the e^{-1/t} glue: 1 for t <= 0, 0 for t >= 1.
inline double smooth_step(double t) {
    if (t <= 0) return 1.0;
    if (t >= 1) return 0.0;
    double e0 = std::exp(-1.0 / (1.0 - t));
    double e1 = std::exp(-1.0 / t);
    return e0 / (e0 + e1);
}

inline double smooth_step_deriv(double t) {
    if (t <= 0 || t >= 1) return 0.0;
    double a = 1.0 - t;
    double e0 = std::exp(-1.0 / a); // numerator piece
    double e1 = std::exp(-1.0 / t);
    double de0 = e0 * (-1.0 / (a * a));
    double de1 = e1 * (1.0 / (t * t));
    double s = e0 + e1;
    return (de0 * s - e0 * (de0 + de1)) / (s * s);
}

// Radial profile: 1 on [0, r1], 0 beyond r2, smooth in between.
struct RadialCutoff {
    double r1 = 0, r2 = 0;

    double value(double s) const { return smooth_step((s - r1) / (r2 - r1)); }
    double deriv(double s) const {
        return smooth_step_deriv((s - r1) / (r2 - r1)) / (r2 - r1);
    }
};

// Tensor-product bump on phase space: equals 1 on the plateau box, 0 outside
// the support box, smooth in between.  Boxes are centered sup-norm boxes with
// per-coordinate half-widths; q-differences wrap on the torus.
struct BoxBump {
    SpaceSpec space;
    PhasePoint center;
    Vec plateau_half; // length 2d, q then p
    Vec support_half; // length 2d, componentwise > plateau_half

    Vec local(const PhasePoint& x) const {
        Vec dq = space.q_diff(x.q, center.q);
        Vec r(2 * space.d);
        for (int i = 0; i < space.d; ++i) r[i] = dq[i];
        for (int i = 0; i < space.d; ++i) r[space.d + i] = x.p[i] - center.p[i];
        return r;
    }

    bool in_plateau(const PhasePoint& x) const {
        Vec r = local(x);
        for (int i = 0; i < 2 * space.d; ++i)
            if (std::fabs(r[i]) > plateau_half[i]) return false;
        return true;
    }

    bool outside_support(const PhasePoint& x) const {
        Vec r = local(x);
        for (int i = 0; i < 2 * space.d; ++i)
            if (std::fabs(r[i]) >= support_half[i]) return true;
        return false;
    }

    double value(const PhasePoint& x) const {
        Vec r = local(x);
        double v = 1;
        for (int i = 0; i < 2 * space.d; ++i) {
            double w = support_half[i] - plateau_half[i];
            v *= smooth_step((std::fabs(r[i]) - plateau_half[i]) / w);
            if (v == 0) return 0;
        }
        return v;
    }

    // Gradient in flattened (q, p) coordinates.
    void value_grad(const PhasePoint& x, double& v, Vec& grad) const {
        Vec r = local(x);
        const int n = 2 * space.d;
        Vec f(n), df(n);
        for (int i = 0; i < n; ++i) {
            double w = support_half[i] - plateau_half[i];
            double t = (std::fabs(r[i]) - plateau_half[i]) / w;
            f[i] = smooth_step(t);
            df[i] = smooth_step_deriv(t) / w * (r[i] >= 0 ? 1.0 : -1.0);
        }
        v = 1;
        for (int i = 0; i < n; ++i) v *= f[i];
        grad.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double g = df[i];
            for (int j = 0; j < n; ++j)
                if (j != i) g *= f[j];
            grad[i] = g;
        }
    }
};

} // namespace hamflow
