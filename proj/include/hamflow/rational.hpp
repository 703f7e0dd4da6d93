#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>

#include "hamflow/errors.hpp"

namespace hamflow {

// Exact rational coefficient for the symbolic layer.  Keeps bracket algebra
// decidable: antisymmetry, Jacobi and the monomial identities cancel to a
// syntactic zero instead of a 1e-17 residue.
struct Rational {
    long long num = 0;
    long long den = 1; // > 0, gcd(|num|, den) == 1

    Rational() = default;
    Rational(long long n) : num(n), den(1) {}
    Rational(long long n, long long d) { *this = make(n, d); }

    static Rational make(long long n, long long d) {
        if (d == 0) throw input_error("Rational: zero denominator");
        if (d < 0) { n = -n; d = -d; }
        long long g = std::gcd(n < 0 ? -n : n, d);
        if (g > 1) { n /= g; d /= g; }
        Rational r;
        r.num = n;
        r.den = d;
        return r;
    }

    static Rational reduce128(__int128 n, __int128 d) {
        if (d == 0) throw input_error("Rational: zero denominator");
        if (d < 0) { n = -n; d = -d; }
        __int128 an = n < 0 ? -n : n;
        // binary gcd on __int128
        __int128 g = gcd128(an, d);
        if (g > 1) { n /= g; d /= g; }
        const __int128 lim = static_cast<__int128>(INT64_MAX);
        if (n > lim || n < -lim || d > lim)
            throw coefficient_overflow("rational coefficient out of range");
        Rational r;
        r.num = static_cast<long long>(n);
        r.den = static_cast<long long>(d);
        return r;
    }

    static __int128 gcd128(__int128 a, __int128 b) {
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a < 0 ? -a : a;
    }

    // Exact conversion of a finite double (every finite double is dyadic).
    // Returns nullopt when the exact form does not fit in int64.
    static std::optional<Rational> from_double_exact(double x) {
        if (!std::isfinite(x)) return std::nullopt;
        if (x == 0.0) return Rational(0);
        int e = 0;
        double m = std::frexp(x, &e); // x = m * 2^e, |m| in [0.5, 1)
        long long mant = static_cast<long long>(std::ldexp(m, 53));
        e -= 53;
        while (mant != 0 && (mant % 2) == 0) { mant /= 2; ++e; }
        if (e >= 0) {
            if (e > 62) return std::nullopt;
            __int128 n = static_cast<__int128>(mant) << e;
            if (n > INT64_MAX || n < -static_cast<__int128>(INT64_MAX)) return std::nullopt;
            return make(static_cast<long long>(n), 1);
        }
        if (-e > 62) return std::nullopt;
        return make(mant, 1ll << (-e));
    }

    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool is_zero() const { return num == 0; }

    Rational operator-() const { return make(-num, den); }

    friend Rational operator+(const Rational& a, const Rational& b) {
        return reduce128(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                         static_cast<__int128>(a.den) * b.den);
    }
    friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return reduce128(static_cast<__int128>(a.num) * b.num,
                         static_cast<__int128>(a.den) * b.den);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num == 0) throw input_error("Rational: divide by zero");
        return reduce128(static_cast<__int128>(a.num) * b.den,
                         static_cast<__int128>(a.den) * b.num);
    }
    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }
};

} // namespace hamflow
