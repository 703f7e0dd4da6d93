#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "hamflow/errors.hpp"

namespace hamflow {

using Vec = std::vector<double>;

inline Vec vadd(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw input_error("vadd: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec vsub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw input_error("vsub: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec vscale(double s, const Vec& a) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
}

inline double vdot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw input_error("vdot: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sup_norm(const Vec& a) {
    double m = 0;
    for (double x : a) m = std::max(m, std::fabs(x));
    return m;
}

inline double norm2(const Vec& a) { return std::sqrt(vdot(a, a)); }

// Dense row-major matrix, sized for tangent maps (2d x 2d, d small) and the
// ensemble rank checks.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    Mat mul(const Mat& o) const {
        if (cols != o.rows) throw input_error("Mat::mul: shape mismatch");
        Mat r(rows, o.cols);
        for (int i = 0; i < rows; ++i)
            for (int k = 0; k < cols; ++k) {
                double aik = (*this)(i, k);
                if (aik == 0.0) continue;
                for (int j = 0; j < o.cols; ++j) r(i, j) += aik * o(k, j);
            }
        return r;
    }

    Vec mul(const Vec& v) const {
        if (cols != static_cast<int>(v.size())) throw input_error("Mat::mul: vec mismatch");
        Vec r(rows, 0.0);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) r[i] += (*this)(i, j) * v[j];
        return r;
    }

    Mat transpose() const {
        Mat r(cols, rows);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) r(j, i) = (*this)(i, j);
        return r;
    }

    // LU with partial pivoting.
    double det() const {
        if (rows != cols) throw input_error("Mat::det: not square");
        Mat lu = *this;
        const int n = rows;
        double d = 1.0;
        for (int k = 0; k < n; ++k) {
            int piv = k;
            for (int i = k + 1; i < n; ++i)
                if (std::fabs(lu(i, k)) > std::fabs(lu(piv, k))) piv = i;
            if (lu(piv, k) == 0.0) return 0.0;
            if (piv != k) {
                for (int j = 0; j < n; ++j) std::swap(lu(piv, j), lu(k, j));
                d = -d;
            }
            d *= lu(k, k);
            for (int i = k + 1; i < n; ++i) {
                double f = lu(i, k) / lu(k, k);
                for (int j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
            }
        }
        return d;
    }

    double max_abs() const {
        double m = 0;
        for (double x : a) m = std::max(m, std::fabs(x));
        return m;
    }
};

// Standard symplectic matrix Omega = [[0, I], [-I, 0]] in (q, p) block order.
inline Mat symplectic_form(int d) {
    Mat o(2 * d, 2 * d);
    for (int i = 0; i < d; ++i) {
        o(i, d + i) = 1.0;
        o(d + i, i) = -1.0;
    }
    return o;
}

// Singular values by one-sided Jacobi, descending.  Plenty for the tiny
// (2dN x 2dN) rank matrices this project ever builds.
inline std::vector<double> singular_values(Mat m) {
    if (m.rows < m.cols) m = m.transpose();
    const int n = m.cols;
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (int i = 0; i < m.rows; ++i) {
                    alpha += m(i, p) * m(i, p);
                    beta += m(i, q) * m(i, q);
                    gamma += m(i, p) * m(i, q);
                }
                off = std::max(off, std::fabs(gamma) / std::sqrt(alpha * beta + 1e-300));
                if (std::fabs(gamma) < 1e-15 * std::sqrt(alpha * beta) + 1e-300) continue;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
                for (int i = 0; i < m.rows; ++i) {
                    double mp = m(i, p), mq = m(i, q);
                    m(i, p) = c * mp - s * mq;
                    m(i, q) = s * mp + c * mq;
                }
            }
        if (off < 1e-14) break;
    }
    std::vector<double> sv(n);
    for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int i = 0; i < m.rows; ++i) s += m(i, j) * m(i, j);
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

// SplitMix64: tiny, seedable, identical across platforms.  All randomized
// tests and CLI sampling go through this so reports are reproducible.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { return (next() >> 11) * 0x1.0p-53; } // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) { // inclusive
        return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }
};

// Halton sequence point (index >= 0) in [0,1)^dim; deterministic
// low-discrepancy sampling for c0 distances.
inline Vec halton_point(long index, int dim) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    Vec x(dim);
    for (int j = 0; j < dim; ++j) {
        int b = primes[j % 12];
        double f = 1.0, r = 0.0;
        long i = index + 1;
        while (i > 0) {
            f /= b;
            r += f * (i % b);
            i /= b;
        }
        x[j] = r;
    }
    return x;
}

} // namespace hamflow
