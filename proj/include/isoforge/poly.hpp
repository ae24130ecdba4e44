#pragma once

// Sparse bivariate polynomials in x, y with exact rational coefficients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "isoforge/rational.hpp"

namespace isoforge {

enum class Var { X, Y };

struct Monomial {
  unsigned x = 0;
  unsigned y = 0;

  unsigned total() const { return x + y; }
  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// Graded-lex, highest first: larger total degree, then larger x exponent.
struct GradedLexDescending {
  bool operator()(const Monomial& a, const Monomial& b) const {
    if (a.total() != b.total())
      return a.total() > b.total();
    return a.x > b.x;
  }
};

/// Total degree. std::nullopt stands for the degree of the zero polynomial (minus infinity).
using Degree = std::optional<unsigned>;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Poly {
 public:
  using TermMap = std::map<Monomial, Rational, GradedLexDescending>;

  Poly() = default;
  Poly(const Rational& c) { add_term({0, 0}, c); }  // NOLINT(google-explicit-constructor)
  Poly(long c) : Poly(Rational(c)) {}                // NOLINT(google-explicit-constructor)

  static Poly x() { return monomial(1, 1, 0); }
  static Poly y() { return monomial(1, 0, 1); }
  static Poly monomial(const Rational& c, unsigned i, unsigned j) {
    Poly p;
    p.add_term({i, j}, c);
    return p;
  }

  const TermMap& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const { return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.total() == 0); }

  Degree degree() const {
    if (terms_.empty())
      return std::nullopt;
    return terms_.begin()->first.total();
  }

  /// Largest exponent of the given variable over all terms (0 for the zero polynomial).
  unsigned degree_in(Var v) const {
    unsigned d = 0;
    for (const auto& [m, c] : terms_)
      d = std::max(d, v == Var::X ? m.x : m.y);
    return d;
  }

  Rational coefficient(unsigned i, unsigned j) const {
    auto it = terms_.find({i, j});
    return it == terms_.end() ? Rational(0) : it->second;
  }
  Rational constant_term() const { return coefficient(0, 0); }

  Monomial leading_monomial() const {
    if (terms_.empty())
      throw std::domain_error("zero polynomial has no leading monomial");
    return terms_.begin()->first;
  }
  const Rational& leading_coefficient() const {
    if (terms_.empty())
      throw std::domain_error("zero polynomial has no leading coefficient");
    return terms_.begin()->second;
  }

  /// Terms of total degree exactly d.
  Poly homogeneous_component(unsigned d) const {
    Poly out;
    for (const auto& [m, c] : terms_)
      if (m.total() == d)
        out.terms_.emplace_hint(out.terms_.end(), m, c);
    return out;
  }

  bool is_homogeneous() const {
    return terms_.empty() || terms_.begin()->first.total() == terms_.rbegin()->first.total();
  }

  void add_term(const Monomial& m, const Rational& c) {
    if (isoforge::is_zero(c))
      return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (isoforge::is_zero(it->second))
        terms_.erase(it);
    }
  }

  /// this += scale * p
  Poly& add_scaled(const Poly& p, const Rational& scale) {
    if (isoforge::is_zero(scale))
      return *this;
    for (const auto& [m, c] : p.terms_)
      add_term(m, c * scale);
    return *this;
  }

  Poly& operator+=(const Poly& o) {
    for (const auto& [m, c] : o.terms_)
      add_term(m, c);
    return *this;
  }
  Poly& operator-=(const Poly& o) {
    for (const auto& [m, c] : o.terms_)
      add_term(m, -c);
    return *this;
  }
  Poly& operator*=(const Rational& s) {
    if (isoforge::is_zero(s)) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_)
      c *= s;
    return *this;
  }

  Poly operator-() const {
    Poly out = *this;
    for (auto& [m, c] : out.terms_)
      c = -c;
    return out;
  }

  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, const Rational& s) { return a *= s; }
  friend Poly operator*(const Rational& s, Poly a) { return a *= s; }

  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly out;
    if (a.is_zero() || b.is_zero())
      return out;
    const Poly& big = a.size() >= b.size() ? a : b;
    const Poly& small = a.size() >= b.size() ? b : a;
    Rational prod;
    for (const auto& [ms, cs] : small.terms_) {
      for (const auto& [mb, cb] : big.terms_) {
        mpq_mul(prod.get_mpq_t(), cs.get_mpq_t(), cb.get_mpq_t());
        out.add_term({ms.x + mb.x, ms.y + mb.y}, prod);
      }
    }
    return out;
  }
  Poly& operator*=(const Poly& o) { return *this = *this * o; }

  Poly pow(unsigned n) const {
    Poly out(1);
    for (unsigned i = 0; i < n; ++i)
      out *= *this;
    return out;
  }

  friend bool operator==(const Poly& a, const Poly& b) { return a.terms_ == b.terms_; }

 private:
  TermMap terms_;
};

namespace detail {

template <typename T>
std::vector<T> power_table(const T& base, unsigned max_exp, const T& one) {
  std::vector<T> pw;
  pw.reserve(max_exp + 1);
  pw.push_back(one);
  for (unsigned i = 1; i <= max_exp; ++i)
    pw.push_back(pw.back() * base);
  return pw;
}

}  // namespace detail

/// outer(sub_x, sub_y), expanded exactly. Powers of sub_x are tabulated once;
/// the y-direction is folded in by Horner's rule so only deg_x + deg_y
/// polynomial products are formed.
inline Poly compose(const Poly& outer, const Poly& sub_x, const Poly& sub_y) {
  if (outer.is_zero())
    return {};
  const unsigned dx = outer.degree_in(Var::X);
  const unsigned dy = outer.degree_in(Var::Y);
  auto sx_pow = detail::power_table(sub_x, dx, Poly(1));

  // Coefficient of y^j in outer, as a polynomial evaluated at x = sub_x.
  std::vector<Poly> slices(dy + 1);
  for (const auto& [m, c] : outer.terms())
    slices[m.y].add_scaled(sx_pow[m.x], c);

  Poly acc = slices[dy];
  for (unsigned j = dy; j-- > 0;) {
    acc *= sub_y;
    acc += slices[j];
  }
  return acc;
}

inline Poly partial(const Poly& p, Var v) {
  Poly out;
  for (const auto& [m, c] : p.terms()) {
    unsigned e = v == Var::X ? m.x : m.y;
    if (e == 0)
      continue;
    Monomial d = v == Var::X ? Monomial{m.x - 1, m.y} : Monomial{m.x, m.y - 1};
    out.add_term(d, c * e);
  }
  return out;
}

inline Rational eval_exact(const Poly& p, const Rational& x, const Rational& y) {
  if (p.is_zero())
    return 0;
  auto xp = detail::power_table(x, p.degree_in(Var::X), Rational(1));
  auto yp = detail::power_table(y, p.degree_in(Var::Y), Rational(1));
  Rational sum = 0;
  for (const auto& [m, c] : p.terms())
    sum += c * xp[m.x] * yp[m.y];
  return sum;
}

/// Floating image of a polynomial, for repeated evaluation inside numerical
/// loops. Coefficients are rounded once at construction.
template <typename Real>
class BasicFloatPoly {
 public:
  BasicFloatPoly() = default;
  explicit BasicFloatPoly(const Poly& p) {
    terms_.reserve(p.size());
    for (const auto& [m, c] : p.terms()) {
      terms_.push_back({m.x, m.y, to_real(c)});
      max_x_ = std::max(max_x_, m.x);
      max_y_ = std::max(max_y_, m.y);
    }
  }

  Real operator()(Real x, Real y) const {
    Real xp[kMaxCached], yp[kMaxCached];
    if (max_x_ < kMaxCached && max_y_ < kMaxCached) {
      fill_powers(xp, x, max_x_);
      fill_powers(yp, y, max_y_);
      Real sum = 0;
      for (const auto& t : terms_)
        sum += t.c * xp[t.i] * yp[t.j];
      return sum;
    }
    Real sum = 0;
    for (const auto& t : terms_)
      sum += t.c * std::pow(x, Real(t.i)) * std::pow(y, Real(t.j));
    return sum;
  }

  /// Sum of |c| |x|^i |y|^j, the natural scale for rounding error in operator().
  Real magnitude(Real x, Real y) const {
    Real sum = 0;
    for (const auto& t : terms_)
      sum += std::abs(t.c) * std::pow(std::abs(x), Real(t.i)) * std::pow(std::abs(y), Real(t.j));
    return sum;
  }

  bool empty() const { return terms_.empty(); }

 private:
  static constexpr unsigned kMaxCached = 64;
  static void fill_powers(Real* out, Real v, unsigned n) {
    out[0] = 1;
    for (unsigned k = 1; k <= n; ++k)
      out[k] = out[k - 1] * v;
  }
  // Head plus rounded tail, so types wider than double get their extra bits.
  static Real to_real(const Rational& c) {
    double head = c.get_d();
    return Real(head) + Real(Rational(c - Rational(head)).get_d());
  }

  struct Term {
    unsigned i, j;
    Real c;
  };
  std::vector<Term> terms_;
  unsigned max_x_ = 0, max_y_ = 0;
};

using FloatPoly = BasicFloatPoly<double>;

inline double eval_float(const Poly& p, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw NumericError("eval_float: non-finite input");
  double v = FloatPoly(p)(x, y);
  if (!std::isfinite(v))
    throw NumericError("eval_float: evaluation overflowed to a non-finite value");
  return v;
}

// ---------------------------------------------------------------------------
// Text forms.
//
// Canonical: terms in graded-lex order, each "<coef>x^<i>y^<j>", joined by " + ".
// Coefficients print as "num/den" (integers without the denominator). The zero
// polynomial is "0". Example: "1x^2y^0 + -3/2x^0y^1".

inline std::string to_canonical_string(const Poly& p) {
  if (p.is_zero())
    return "0";
  std::string out;
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    if (!first)
      out += " + ";
    first = false;
    out += to_short_string(c) + "x^" + std::to_string(m.x) + "y^" + std::to_string(m.y);
  }
  return out;
}

/// Display form in ascending total degree, higher x power first within a
/// degree: "x + y^2", "-3/2*y + x^2".
inline std::string to_pretty_string(const Poly& p) {
  if (p.is_zero())
    return "0";
  std::vector<std::pair<Monomial, Rational>> terms(p.terms().begin(), p.terms().end());
  std::stable_sort(terms.begin(), terms.end(),
                   [](const auto& a, const auto& b) { return a.first.total() < b.first.total(); });
  std::string out;
  bool first = true;
  for (const auto& [m, c] : terms) {
    Rational mag = abs(c);
    if (first)
      out += sgn(c) < 0 ? "-" : "";
    else
      out += sgn(c) < 0 ? " - " : " + ";
    first = false;
    std::string vars;
    auto var = [&](char name, unsigned e) {
      if (e == 0)
        return;
      if (!vars.empty())
        vars += '*';
      vars += name;
      if (e > 1)
        vars += "^" + std::to_string(e);
    };
    var('x', m.x);
    var('y', m.y);
    if (vars.empty())
      out += to_short_string(mag);
    else if (mag == 1)
      out += vars;
    else
      out += to_short_string(mag) + "*" + vars;
  }
  return out;
}

inline std::ostream& operator<<(std::ostream& os, const Poly& p) { return os << to_pretty_string(p); }

/// Accepts the canonical form and the pretty form, e.g. "x + y^2", "-3/2*x*y^2 + 7",
/// "1x^2y^0 + -3/2x^0y^1".
inline Poly parse_poly(std::string_view text) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n'))
      ++pos;
  };
  auto read_digits = [&]() -> std::string {
    std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9')
      ++pos;
    return std::string(text.substr(start, pos - start));
  };
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("polynomial parse error at offset " + std::to_string(pos) + ": " + what);
  };

  Poly out;
  skip_ws();
  if (pos == text.size())
    throw fail("empty input");
  bool first_term = true;
  while (true) {
    skip_ws();
    if (pos == text.size())
      break;
    // Signs: "+", "-", or "+ -" runs between terms.
    int sign = 1;
    bool saw_sep = false;
    while (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
      if (text[pos] == '-')
        sign = -sign;
      saw_sep = true;
      ++pos;
      skip_ws();
    }
    if (!first_term && !saw_sep)
      throw fail("expected '+' or '-' between terms");
    first_term = false;

    Rational coef = 1;
    bool have_anything = false;
    std::string num = read_digits();
    if (!num.empty()) {
      have_anything = true;
      std::string den = "1";
      if (pos < text.size() && text[pos] == '/') {
        ++pos;
        den = read_digits();
        if (den.empty())
          throw fail("missing denominator");
      }
      coef = parse_rational(num + "/" + den);
    }
    Monomial m;
    while (true) {
      skip_ws();
      if (pos < text.size() && text[pos] == '*') {
        ++pos;
        skip_ws();
      }
      if (pos >= text.size() || (text[pos] != 'x' && text[pos] != 'y'))
        break;
      char v = text[pos++];
      unsigned e = 1;
      if (pos < text.size() && text[pos] == '^') {
        ++pos;
        std::string d = read_digits();
        if (d.empty())
          throw fail("missing exponent");
        e = static_cast<unsigned>(std::stoul(d));
      }
      (v == 'x' ? m.x : m.y) += e;
      have_anything = true;
    }
    if (!have_anything)
      throw fail("expected a term");
    out.add_term(m, sign * coef);
    skip_ws();
    if (pos < text.size() && text[pos] != '+' && text[pos] != '-')
      throw fail(std::string("unexpected character '") + text[pos] + "'");
  }
  return out;
}

}  // namespace isoforge
