#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hamflow/linalg.hpp"
#include "hamflow/phase_geometry.hpp"
#include "hamflow/rational.hpp"

namespace hamflow {

enum class TrigPhase { cosine, sine };

// One trigonometric factor cos(k.q) or sin(k.q), k integer.  Canonical form
// requires the first nonzero entry of k to be positive (cos is even, sin odd).
struct TrigFactor {
    std::vector<int> freq; // length d
    TrigPhase phase = TrigPhase::cosine;

    bool operator==(const TrigFactor&) const = default;
};

// c * q^alpha * p^beta * trig.  Product-to-sum reduction during
// canonicalization keeps at most one trig factor per term.
struct ExprTerm {
    Rational coeff;
    std::vector<int> qexp, pexp; // length d each
    std::optional<TrigFactor> trig;
};

// Exact Hamiltonians: finite sums of polynomial-times-trigonometric terms,
// closed under sums, products, partial derivatives and Poisson brackets.
class HamExpr {
public:
    HamExpr() = default;
    explicit HamExpr(int d) : d_(d) {}

    static HamExpr zero(int d) { return HamExpr(d); }
    static HamExpr constant(int d, Rational c);
    static HamExpr q(int d, int i);                     // coordinate q_{i+1}, 0-based i
    static HamExpr p(int d, int i);
    static HamExpr monomial(int d, Rational c, std::vector<int> qexp, std::vector<int> pexp);
    static HamExpr trig(int d, Rational c, std::vector<int> freq, TrigPhase phase);
    static HamExpr kinetic(int d);                      // |p|^2 / 2

    int dim() const { return d_; }
    const std::vector<ExprTerm>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    bool depends_on_p() const;
    bool depends_on_q() const;
    bool has_q_monomials() const; // any term with nonzero qexp (ill-defined on the torus)

    HamExpr operator-() const;
    friend HamExpr operator+(const HamExpr& a, const HamExpr& b);
    friend HamExpr operator-(const HamExpr& a, const HamExpr& b);
    friend HamExpr operator*(const HamExpr& a, const HamExpr& b);
    HamExpr scaled(const Rational& s) const;
    bool operator==(const HamExpr& o) const { return d_ == o.d_ && same_terms(o); }

    HamExpr partial_q(int i) const;
    HamExpr partial_p(int i) const;

    double eval(const Vec& q, const Vec& p) const;
    double eval(const PhasePoint& x) const { return eval(x.q, x.p); }

    // Value and both gradients in one pass.
    void eval_with_grads(const Vec& q, const Vec& p, double& value, Vec& grad_q, Vec& grad_p) const;

    std::string str() const;

    // Literal syntax, e.g. "0.5*p1^2 + cos(q1) - 2*sin(q1+q2)".
    static HamExpr parse(const std::string& text, int d);

    // Internal: append a term and re-canonicalize.
    void add_term(ExprTerm t);

private:
    bool same_terms(const HamExpr& o) const;
    void canonicalize();

    int d_ = 0;
    std::vector<ExprTerm> terms_;
};

// {f, g} = sum_j d_{p_j} f d_{q_j} g - d_{q_j} f d_{p_j} g, the convention for
// which the induced field of H is (grad_p H, -grad_q H), matching
// qdot = grad_p H, pdot = -grad_q H.
HamExpr poisson_bracket(const HamExpr& f, const HamExpr& g);

// m-fold nested bracket {f, {f, ... {f, g}}}; ad^0 = g.
HamExpr ad_power(const HamExpr& f, const HamExpr& g, int m);

struct GradEval {
    double value;
    Vec grad_q, grad_p;
};
GradEval grad_eval(const HamExpr& f, const PhasePoint& x);

// |grad_q f|^2 as an expression (used by the torus generation chains).
HamExpr grad_square_q(const HamExpr& f);

} // namespace hamflow
