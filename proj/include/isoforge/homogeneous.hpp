#pragma once

// Homogeneous forms in x, y and the gcd / radical / perfect-power machinery
// over the rationals. Every form is handled through its dehomogenization:
// strip the largest power of x, set x = 1, work with univariate polynomials
// in t = y/x, and rehomogenize.

#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "isoforge/poly.hpp"

namespace isoforge {

class HomogeneousPoly {
 public:
  HomogeneousPoly() = default;

  /// Throws std::invalid_argument if some term of p is not of total degree `degree`.
  HomogeneousPoly(Poly p, unsigned degree) : poly_(std::move(p)), degree_(degree) {
    for (const auto& [m, c] : poly_.terms())
      if (m.total() != degree_)
        throw std::invalid_argument("term x^" + std::to_string(m.x) + "y^" + std::to_string(m.y) +
                                    " does not have degree " + std::to_string(degree_));
  }

  /// Degree read off a nonzero homogeneous polynomial.
  static HomogeneousPoly of(Poly p) {
    if (p.is_zero())
      throw std::invalid_argument("cannot infer the degree of the zero form");
    unsigned d = *p.degree();
    return HomogeneousPoly(std::move(p), d);
  }

  const Poly& poly() const { return poly_; }
  unsigned degree() const { return degree_; }
  bool is_zero() const { return poly_.is_zero(); }

  friend bool operator==(const HomogeneousPoly&, const HomogeneousPoly&) = default;

 private:
  Poly poly_;
  unsigned degree_ = 0;
};

namespace uni {

/// Coefficients by ascending power; no trailing zeros. Empty is the zero polynomial.
using UniPoly = std::vector<Rational>;

inline void trim(UniPoly& p) {
  while (!p.empty() && is_zero(p.back()))
    p.pop_back();
}

inline UniPoly derivative(const UniPoly& p) {
  UniPoly d;
  for (std::size_t k = 1; k < p.size(); ++k)
    d.push_back(p[k] * static_cast<unsigned long>(k));
  trim(d);
  return d;
}

inline UniPoly monic(UniPoly p) {
  trim(p);
  if (p.empty())
    return p;
  Rational lc = p.back();
  for (auto& c : p)
    c /= lc;
  return p;
}

inline UniPoly sub(UniPoly a, const UniPoly& b) {
  if (a.size() < b.size())
    a.resize(b.size());
  for (std::size_t k = 0; k < b.size(); ++k)
    a[k] -= b[k];
  trim(a);
  return a;
}

inline UniPoly mul(const UniPoly& a, const UniPoly& b) {
  if (a.empty() || b.empty())
    return {};
  UniPoly out(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out[i + j] += a[i] * b[j];
  trim(out);
  return out;
}

/// Quotient and remainder of num / den, den nonzero.
inline std::pair<UniPoly, UniPoly> divmod(UniPoly num, const UniPoly& den) {
  if (den.empty())
    throw std::domain_error("univariate division by zero");
  trim(num);
  if (num.size() < den.size())
    return {{}, num};
  UniPoly q(num.size() - den.size() + 1);
  const Rational& lc = den.back();
  for (std::size_t k = num.size(); k-- >= den.size();) {
    Rational c = num[k] / lc;
    q[k - (den.size() - 1)] = c;
    if (is_zero(c))
      continue;
    for (std::size_t j = 0; j < den.size(); ++j)
      num[k - (den.size() - 1) + j] -= c * den[j];
  }
  trim(q);
  trim(num);
  return {q, num};
}

inline UniPoly exact_div(const UniPoly& num, const UniPoly& den) {
  auto [q, r] = divmod(num, den);
  if (!r.empty())
    throw std::logic_error("univariate division is not exact");
  return q;
}

/// Monic gcd; gcd(0, 0) = 0.
inline UniPoly gcd(UniPoly a, UniPoly b) {
  trim(a);
  trim(b);
  while (!b.empty()) {
    auto r = divmod(a, b).second;
    a = std::move(b);
    b = std::move(r);
  }
  return monic(std::move(a));
}

/// Yun's algorithm: f = lc(f) * prod_i factors[i-1]^i, each factor monic and
/// squarefree, pairwise coprime. Trailing constant factors are dropped.
inline std::vector<std::pair<UniPoly, unsigned>> squarefree_decomposition(const UniPoly& f) {
  std::vector<std::pair<UniPoly, unsigned>> out;
  UniPoly fm = monic(f);
  if (fm.size() <= 1)
    return out;
  UniPoly fp = derivative(fm);
  UniPoly a = gcd(fm, fp);
  UniPoly b = exact_div(fm, a);
  UniPoly c = exact_div(fp, a);
  UniPoly d = sub(c, derivative(b));
  for (unsigned i = 1; b.size() > 1; ++i) {
    UniPoly ai = gcd(b, d);
    b = exact_div(b, ai);
    c = exact_div(d, ai);
    d = sub(c, derivative(b));
    if (ai.size() > 1)
      out.emplace_back(std::move(ai), i);
  }
  return out;
}

}  // namespace uni

namespace detail {

/// p = x^x_power * x^deg(u) * u(y/x), where u has exact degree deg p - x_power.
struct Dehomogenized {
  unsigned x_power = 0;
  uni::UniPoly u;
};

inline Dehomogenized dehomogenize(const HomogeneousPoly& p) {
  Dehomogenized out;
  if (p.is_zero())
    return out;
  unsigned val = p.degree();
  for (const auto& [m, c] : p.poly().terms())
    val = std::min(val, m.x);
  out.x_power = val;
  out.u.assign(p.degree() - val + 1, Rational(0));
  for (const auto& [m, c] : p.poly().terms())
    out.u[m.y] = c;
  uni::trim(out.u);
  return out;
}

/// x^x_power * sum_k u_k x^(deg u - k) y^k
inline Poly rehomogenize(const uni::UniPoly& u, unsigned x_power) {
  Poly out;
  if (u.empty())
    return out;
  const unsigned e = static_cast<unsigned>(u.size() - 1);
  for (unsigned k = 0; k <= e; ++k)
    out.add_term({x_power + e - k, k}, u[k]);
  return out;
}

}  // namespace detail

/// Scales p so its graded-lex leading coefficient is 1.
inline Poly normalize_leading(const Poly& p) {
  if (p.is_zero())
    return p;
  return p * Rational(1 / p.leading_coefficient());
}

inline HomogeneousPoly gcd_homogeneous(const HomogeneousPoly& p, const HomogeneousPoly& q) {
  if (p.is_zero() || q.is_zero())
    throw std::invalid_argument("gcd_homogeneous requires nonzero forms");
  auto dp = detail::dehomogenize(p);
  auto dq = detail::dehomogenize(q);
  auto g = uni::gcd(dp.u, dq.u);
  return HomogeneousPoly::of(normalize_leading(detail::rehomogenize(g, std::min(dp.x_power, dq.x_power))));
}

/// Squarefree part of p, leading coefficient 1. Equal to p / gcd(p, dp) up to a constant.
inline HomogeneousPoly radical_homogeneous(const HomogeneousPoly& p) {
  if (p.is_zero())
    throw std::invalid_argument("radical_homogeneous requires a nonzero form");
  auto d = detail::dehomogenize(p);
  auto g = uni::gcd(d.u, uni::derivative(d.u));
  auto sqfree = uni::exact_div(uni::monic(d.u), g);
  return HomogeneousPoly::of(normalize_leading(detail::rehomogenize(sqfree, d.x_power > 0 ? 1 : 0)));
}

/// p = scale * base^exponent with base normalized and not itself a proper power
/// (exponent is maximal). Constants give base 1 and exponent 0.
struct PerfectPower {
  HomogeneousPoly base;
  unsigned exponent = 0;
  Rational scale;
};

inline PerfectPower perfect_power_root(const HomogeneousPoly& p) {
  if (p.is_zero())
    throw std::invalid_argument("perfect_power_root requires a nonzero form");
  if (p.degree() == 0)
    return {HomogeneousPoly(Poly(1), 0), 0, p.poly().constant_term()};

  auto d = detail::dehomogenize(p);
  auto factors = uni::squarefree_decomposition(d.u);
  unsigned e = d.x_power;
  for (const auto& [f, mult] : factors)
    e = std::gcd(e, mult);

  uni::UniPoly root{Rational(1)};
  for (const auto& [f, mult] : factors)
    for (unsigned k = 0; k < mult / e; ++k)
      root = uni::mul(root, f);
  Poly base = normalize_leading(detail::rehomogenize(root, d.x_power / e));
  Poly power = base.pow(e);
  Rational scale = p.poly().leading_coefficient() / power.leading_coefficient();
  if (power * scale != p.poly())
    throw std::logic_error("perfect_power_root: reconstruction mismatch");
  return {HomogeneousPoly::of(std::move(base)), e, scale};
}

}  // namespace isoforge
