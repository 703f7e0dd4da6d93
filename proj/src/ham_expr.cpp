#include "hamflow/ham_expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

bool all_zero(const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int x) { return x == 0; });
}

// Canonical trig representative.  Returns false when the whole term vanishes
// (sin of the zero form); drops the factor when it degenerates to cos(0)=1.
bool canonicalize_trig(ExprTerm& t) {
    if (!t.trig) return true;
    TrigFactor& tr = *t.trig;
    if (all_zero(tr.freq)) {
        if (tr.phase == TrigPhase::sine) return false;
        t.trig.reset();
        return true;
    }
    for (int v : tr.freq) {
        if (v > 0) break;
        if (v < 0) {
            for (int& w : tr.freq) w = -w;
            if (tr.phase == TrigPhase::sine) t.coeff = -t.coeff;
            break;
        }
    }
    return true;
}

// Ordering key for merging: exponents then trig signature.
int compare_sig(const ExprTerm& a, const ExprTerm& b) {
    if (a.qexp != b.qexp) return a.qexp < b.qexp ? -1 : 1;
    if (a.pexp != b.pexp) return a.pexp < b.pexp ? -1 : 1;
    bool at = a.trig.has_value(), bt = b.trig.has_value();
    if (at != bt) return at < bt ? -1 : 1;
    if (!at) return 0;
    if (a.trig->freq != b.trig->freq) return a.trig->freq < b.trig->freq ? -1 : 1;
    if (a.trig->phase != b.trig->phase)
        return static_cast<int>(a.trig->phase) < static_cast<int>(b.trig->phase) ? -1 : 1;
    return 0;
}

std::vector<int> add_exp(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

std::vector<int> sub_freq(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

} // namespace

HamExpr HamExpr::constant(int d, Rational c) {
    HamExpr e(d);
    e.add_term(ExprTerm{c, std::vector<int>(d, 0), std::vector<int>(d, 0), std::nullopt});
    return e;
}

HamExpr HamExpr::q(int d, int i) {
    std::vector<int> qe(d, 0), pe(d, 0);
    qe.at(i) = 1;
    return monomial(d, Rational(1), qe, pe);
}

HamExpr HamExpr::p(int d, int i) {
    std::vector<int> qe(d, 0), pe(d, 0);
    pe.at(i) = 1;
    return monomial(d, Rational(1), qe, pe);
}

HamExpr HamExpr::monomial(int d, Rational c, std::vector<int> qexp, std::vector<int> pexp) {
    if (static_cast<int>(qexp.size()) != d || static_cast<int>(pexp.size()) != d)
        throw input_error("HamExpr::monomial: exponent length mismatch");
    HamExpr e(d);
    e.add_term(ExprTerm{c, std::move(qexp), std::move(pexp), std::nullopt});
    return e;
}

HamExpr HamExpr::trig(int d, Rational c, std::vector<int> freq, TrigPhase phase) {
    if (static_cast<int>(freq.size()) != d) throw input_error("HamExpr::trig: frequency length mismatch");
    HamExpr e(d);
    e.add_term(ExprTerm{c, std::vector<int>(d, 0), std::vector<int>(d, 0), TrigFactor{std::move(freq), phase}});
    return e;
}

HamExpr HamExpr::kinetic(int d) {
    HamExpr e(d);
    for (int i = 0; i < d; ++i) {
        std::vector<int> pe(d, 0);
        pe[i] = 2;
        e.add_term(ExprTerm{Rational(1, 2), std::vector<int>(d, 0), pe, std::nullopt});
    }
    return e;
}

bool HamExpr::depends_on_p() const {
    for (const auto& t : terms_)
        if (!all_zero(t.pexp)) return true;
    return false;
}

bool HamExpr::depends_on_q() const {
    for (const auto& t : terms_) {
        if (!all_zero(t.qexp)) return true;
        if (t.trig) return true;
    }
    return false;
}

bool HamExpr::has_q_monomials() const {
    for (const auto& t : terms_)
        if (!all_zero(t.qexp)) return true;
    return false;
}

void HamExpr::add_term(ExprTerm t) {
    if (static_cast<int>(t.qexp.size()) != d_ || static_cast<int>(t.pexp.size()) != d_)
        throw input_error("HamExpr: term dimension mismatch");
    if (t.coeff.is_zero()) return;
    if (!canonicalize_trig(t)) return;
    terms_.push_back(std::move(t));
    canonicalize();
}

void HamExpr::canonicalize() {
    std::sort(terms_.begin(), terms_.end(),
              [](const ExprTerm& a, const ExprTerm& b) { return compare_sig(a, b) < 0; });
    std::vector<ExprTerm> merged;
    for (auto& t : terms_) {
        if (!merged.empty() && compare_sig(merged.back(), t) == 0)
            merged.back().coeff = merged.back().coeff + t.coeff;
        else
            merged.push_back(std::move(t));
    }
    terms_.clear();
    for (auto& t : merged)
        if (!t.coeff.is_zero()) terms_.push_back(std::move(t));
}

bool HamExpr::same_terms(const HamExpr& o) const {
    if (terms_.size() != o.terms_.size()) return false;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        if (compare_sig(terms_[i], o.terms_[i]) != 0) return false;
        if (terms_[i].coeff != o.terms_[i].coeff) return false;
    }
    return true;
}

HamExpr HamExpr::operator-() const { return scaled(Rational(-1)); }

HamExpr HamExpr::scaled(const Rational& s) const {
    HamExpr r(d_);
    if (s.is_zero()) return r;
    r.terms_ = terms_;
    for (auto& t : r.terms_) t.coeff = t.coeff * s;
    return r;
}

HamExpr operator+(const HamExpr& a, const HamExpr& b) {
    if (a.d_ != b.d_) throw input_error("HamExpr: dimension mismatch");
    HamExpr r(a.d_);
    r.terms_ = a.terms_;
    r.terms_.insert(r.terms_.end(), b.terms_.begin(), b.terms_.end());
    r.canonicalize();
    return r;
}

HamExpr operator-(const HamExpr& a, const HamExpr& b) { return a + (-b); }

HamExpr operator*(const HamExpr& a, const HamExpr& b) {
    if (a.d_ != b.d_) throw input_error("HamExpr: dimension mismatch");
    HamExpr r(a.d_);
    const Rational half(1, 2);
    for (const auto& ta : a.terms_)
        for (const auto& tb : b.terms_) {
            ExprTerm base;
            base.coeff = ta.coeff * tb.coeff;
            base.qexp = add_exp(ta.qexp, tb.qexp);
            base.pexp = add_exp(ta.pexp, tb.pexp);
            if (!ta.trig || !tb.trig) {
                base.trig = ta.trig ? ta.trig : tb.trig;
                r.terms_.push_back(std::move(base));
                continue;
            }
            // Product-to-sum so each term keeps a single factor:
            //   cos a cos b = (cos(a-b) + cos(a+b)) / 2
            //   sin a sin b = (cos(a-b) - cos(a+b)) / 2
            //   sin a cos b = (sin(a+b) + sin(a-b)) / 2
            //   cos a sin b = (sin(a+b) - sin(a-b)) / 2
            const auto& A = *ta.trig;
            const auto& B = *tb.trig;
            auto plus = add_exp(A.freq, B.freq);
            auto minus = sub_freq(A.freq, B.freq);
            ExprTerm t1 = base, t2 = base;
            t1.coeff = base.coeff * half;
            t2.coeff = base.coeff * half;
            if (A.phase == TrigPhase::cosine && B.phase == TrigPhase::cosine) {
                t1.trig = TrigFactor{minus, TrigPhase::cosine};
                t2.trig = TrigFactor{plus, TrigPhase::cosine};
            } else if (A.phase == TrigPhase::sine && B.phase == TrigPhase::sine) {
                t1.trig = TrigFactor{minus, TrigPhase::cosine};
                t2.trig = TrigFactor{plus, TrigPhase::cosine};
                t2.coeff = -t2.coeff;
            } else if (A.phase == TrigPhase::sine && B.phase == TrigPhase::cosine) {
                t1.trig = TrigFactor{plus, TrigPhase::sine};
                t2.trig = TrigFactor{minus, TrigPhase::sine};
            } else {
                t1.trig = TrigFactor{plus, TrigPhase::sine};
                t2.trig = TrigFactor{minus, TrigPhase::sine};
                t2.coeff = -t2.coeff;
            }
            if (canonicalize_trig(t1)) r.terms_.push_back(std::move(t1));
            if (canonicalize_trig(t2)) r.terms_.push_back(std::move(t2));
        }
    for (auto& t : r.terms_)
        if (t.trig) canonicalize_trig(t);
    r.canonicalize();
    return r;
}

HamExpr HamExpr::partial_q(int i) const {
    HamExpr r(d_);
    for (const auto& t : terms_) {
        if (t.qexp[i] > 0) {
            ExprTerm u = t;
            u.coeff = t.coeff * Rational(t.qexp[i]);
            u.qexp[i] -= 1;
            if (canonicalize_trig(u)) r.terms_.push_back(std::move(u));
        }
        if (t.trig && t.trig->freq[i] != 0) {
            ExprTerm u = t;
            int k = t.trig->freq[i];
            if (t.trig->phase == TrigPhase::cosine) {
                u.coeff = t.coeff * Rational(-k);
                u.trig->phase = TrigPhase::sine;
            } else {
                u.coeff = t.coeff * Rational(k);
                u.trig->phase = TrigPhase::cosine;
            }
            if (canonicalize_trig(u)) r.terms_.push_back(std::move(u));
        }
    }
    r.canonicalize();
    return r;
}

HamExpr HamExpr::partial_p(int i) const {
    HamExpr r(d_);
    for (const auto& t : terms_) {
        if (t.pexp[i] == 0) continue;
        ExprTerm u = t;
        u.coeff = t.coeff * Rational(t.pexp[i]);
        u.pexp[i] -= 1;
        r.terms_.push_back(std::move(u));
    }
    r.canonicalize();
    return r;
}

namespace {
double int_pow(double x, int n) {
    double r = 1;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
}
} // namespace

double HamExpr::eval(const Vec& q, const Vec& p) const {
    if (static_cast<int>(q.size()) != d_ || static_cast<int>(p.size()) != d_)
        throw input_error("HamExpr::eval: dimension mismatch");
    double s = 0;
    for (const auto& t : terms_) {
        double v = t.coeff.to_double();
        for (int i = 0; i < d_; ++i) {
            if (t.qexp[i]) v *= int_pow(q[i], t.qexp[i]);
            if (t.pexp[i]) v *= int_pow(p[i], t.pexp[i]);
        }
        if (t.trig) {
            double arg = 0;
            for (int i = 0; i < d_; ++i) arg += t.trig->freq[i] * q[i];
            v *= (t.trig->phase == TrigPhase::cosine) ? std::cos(arg) : std::sin(arg);
        }
        s += v;
    }
    return s;
}

void HamExpr::eval_with_grads(const Vec& q, const Vec& p, double& value, Vec& grad_q,
                              Vec& grad_p) const {
    value = 0;
    grad_q.assign(d_, 0.0);
    grad_p.assign(d_, 0.0);
    for (const auto& t : terms_) {
        double c = t.coeff.to_double();
        double poly = 1;
        for (int i = 0; i < d_; ++i) {
            if (t.qexp[i]) poly *= int_pow(q[i], t.qexp[i]);
            if (t.pexp[i]) poly *= int_pow(p[i], t.pexp[i]);
        }
        double trig = 1, dtrig = 0; // factor and its derivative wrt the argument
        double arg = 0;
        if (t.trig) {
            for (int i = 0; i < d_; ++i) arg += t.trig->freq[i] * q[i];
            if (t.trig->phase == TrigPhase::cosine) {
                trig = std::cos(arg);
                dtrig = -std::sin(arg);
            } else {
                trig = std::sin(arg);
                dtrig = std::cos(arg);
            }
        }
        value += c * poly * trig;
        for (int i = 0; i < d_; ++i) {
            if (t.qexp[i]) {
                double dpoly = c * Rational(t.qexp[i]).to_double() * int_pow(q[i], t.qexp[i] - 1);
                for (int j = 0; j < d_; ++j) {
                    if (j == i) continue;
                    if (t.qexp[j]) dpoly *= int_pow(q[j], t.qexp[j]);
                }
                for (int j = 0; j < d_; ++j)
                    if (t.pexp[j]) dpoly *= int_pow(p[j], t.pexp[j]);
                grad_q[i] += dpoly * trig;
            }
            if (t.trig && t.trig->freq[i] != 0)
                grad_q[i] += c * poly * dtrig * t.trig->freq[i];
            if (t.pexp[i]) {
                double dpoly = c * t.pexp[i] * int_pow(p[i], t.pexp[i] - 1);
                for (int j = 0; j < d_; ++j) {
                    if (t.qexp[j]) dpoly *= int_pow(q[j], t.qexp[j]);
                    if (j != i && t.pexp[j]) dpoly *= int_pow(p[j], t.pexp[j]);
                }
                grad_p[i] += dpoly * trig;
            }
        }
    }
}

std::string HamExpr::str() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& t : terms_) {
        std::string c = t.coeff.str();
        if (!first) os << (t.coeff.num < 0 ? " - " : " + ");
        else if (t.coeff.num < 0) os << "-";
        first = false;
        std::string mag = t.coeff.num < 0 ? Rational(-t.coeff.num, t.coeff.den).str() : c;
        std::vector<std::string> factors;
        for (int i = 0; i < d_; ++i) {
            if (t.qexp[i] == 1) factors.push_back("q" + std::to_string(i + 1));
            else if (t.qexp[i] > 1)
                factors.push_back("q" + std::to_string(i + 1) + "^" + std::to_string(t.qexp[i]));
        }
        for (int i = 0; i < d_; ++i) {
            if (t.pexp[i] == 1) factors.push_back("p" + std::to_string(i + 1));
            else if (t.pexp[i] > 1)
                factors.push_back("p" + std::to_string(i + 1) + "^" + std::to_string(t.pexp[i]));
        }
        if (t.trig) {
            std::ostringstream arg;
            bool afirst = true;
            for (int i = 0; i < d_; ++i) {
                int k = t.trig->freq[i];
                if (k == 0) continue;
                if (!afirst) arg << (k > 0 ? "+" : "-");
                else if (k < 0) arg << "-";
                afirst = false;
                int ak = std::abs(k);
                if (ak != 1) arg << ak << "*";
                arg << "q" << (i + 1);
            }
            factors.push_back(std::string(t.trig->phase == TrigPhase::cosine ? "cos" : "sin") +
                              "(" + arg.str() + ")");
        }
        if (factors.empty()) {
            os << mag;
        } else {
            if (mag != "1") os << mag << "*";
            for (std::size_t i = 0; i < factors.size(); ++i)
                os << (i ? "*" : "") << factors[i];
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;
    int d;

    explicit Parser(const std::string& text, int dim) : s(text), d(dim) {}

    void skip() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
        skip();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    char peek() {
        skip();
        return pos < s.size() ? s[pos] : '\0';
    }
    [[noreturn]] void fail(const std::string& msg) {
        throw input_error("parse error at position " + std::to_string(pos) + ": " + msg);
    }

    HamExpr parse_expr() {
        HamExpr r = HamExpr::zero(d);
        bool neg = eat('-');
        if (!neg) eat('+');
        r = parse_term();
        if (neg) r = -r;
        while (true) {
            char c = peek();
            if (c == '+') {
                ++pos;
                r = r + parse_term();
            } else if (c == '-') {
                ++pos;
                r = r - parse_term();
            } else
                break;
        }
        return r;
    }

    HamExpr parse_term() {
        HamExpr r = parse_factor();
        while (eat('*')) r = r * parse_factor();
        return r;
    }

    HamExpr parse_factor() {
        HamExpr base = parse_base();
        if (eat('^')) {
            int n = parse_int();
            if (n < 0) fail("negative exponent");
            HamExpr r = HamExpr::constant(d, Rational(1));
            for (int k = 0; k < n; ++k) r = r * base;
            return r;
        }
        return base;
    }

    HamExpr parse_base() {
        skip();
        if (pos >= s.size()) fail("unexpected end of input");
        char c = s[pos];
        if (c == '(') {
            ++pos;
            HamExpr e = parse_expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (c == '-') {
            ++pos;
            return -parse_base();
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return HamExpr::constant(d, parse_number());
        if (c == 'q' || c == 'p') {
            ++pos;
            int i = parse_int();
            if (i < 1 || i > d) fail("variable index out of range");
            return c == 'q' ? HamExpr::q(d, i - 1) : HamExpr::p(d, i - 1);
        }
        if (s.compare(pos, 4, "cos(") == 0 || s.compare(pos, 4, "sin(") == 0) {
            TrigPhase phase = s[pos] == 'c' ? TrigPhase::cosine : TrigPhase::sine;
            pos += 4;
            std::vector<int> freq = parse_linear_form();
            if (!eat(')')) fail("expected ')' after trig argument");
            return HamExpr::trig(d, Rational(1), std::move(freq), phase);
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    // Integer-coefficient linear form in q, e.g. "q1 + 2*q2 - q3".
    std::vector<int> parse_linear_form() {
        std::vector<int> freq(d, 0);
        bool first = true;
        while (true) {
            skip();
            int sign = 1;
            if (eat('-')) sign = -1;
            else if (eat('+')) sign = 1;
            else if (!first)
                break;
            skip();
            int coeff = 1;
            if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
                coeff = parse_int();
                eat('*');
            }
            skip();
            if (pos >= s.size() || s[pos] != 'q') fail("trig arguments are linear forms in q");
            ++pos;
            int i = parse_int();
            if (i < 1 || i > d) fail("variable index out of range");
            freq[i - 1] += sign * coeff;
            first = false;
            if (peek() == ')') break;
        }
        return freq;
    }

    int parse_int() {
        skip();
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) fail("expected integer");
        return std::stoi(s.substr(start, pos - start));
    }

    Rational parse_number() {
        skip();
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        long long intpart = (pos > start) ? std::stoll(s.substr(start, pos - start)) : 0;
        Rational r(intpart);
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            std::size_t fstart = pos;
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos == fstart) fail("expected digits after '.'");
            std::string frac = s.substr(fstart, pos - fstart);
            if (frac.size() > 15) fail("too many decimal digits");
            long long num = std::stoll(frac);
            long long den = 1;
            for (std::size_t k = 0; k < frac.size(); ++k) den *= 10;
            r = r + Rational(num, den);
        }
        return r;
    }
};

} // namespace

HamExpr HamExpr::parse(const std::string& text, int d) {
    Parser p(text, d);
    HamExpr e = p.parse_expr();
    p.skip();
    if (p.pos != text.size()) p.fail("trailing input");
    return e;
}

// ---------------------------------------------------------------------------
// Bracket calculus

HamExpr poisson_bracket(const HamExpr& f, const HamExpr& g) {
    if (f.dim() != g.dim()) throw input_error("poisson_bracket: dimension mismatch");
    HamExpr r = HamExpr::zero(f.dim());
    for (int j = 0; j < f.dim(); ++j)
        r = r + f.partial_p(j) * g.partial_q(j) - f.partial_q(j) * g.partial_p(j);
    return r;
}

HamExpr ad_power(const HamExpr& f, const HamExpr& g, int m) {
    if (m < 0) throw input_error("ad_power: m must be nonnegative");
    HamExpr r = g;
    for (int k = 0; k < m; ++k) r = poisson_bracket(f, r);
    return r;
}

GradEval grad_eval(const HamExpr& f, const PhasePoint& x) {
    GradEval out;
    f.eval_with_grads(x.q, x.p, out.value, out.grad_q, out.grad_p);
    return out;
}

HamExpr grad_square_q(const HamExpr& f) {
    HamExpr r = HamExpr::zero(f.dim());
    for (int j = 0; j < f.dim(); ++j) {
        HamExpr dj = f.partial_q(j);
        r = r + dj * dj;
    }
    return r;
}

} // namespace hamflow
