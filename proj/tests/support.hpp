#pragma once

// Shared generators for the test suites.

#include <array>
#include <random>
#include <vector>

#include "isoforge/families.hpp"
#include "isoforge/homogeneous.hpp"
#include "isoforge/poly.hpp"

namespace isoforge::testing {

using Rng = std::mt19937_64;

/// num / den with num in [-bound, bound] and den in [1, bound].
inline Rational random_rational(Rng& rng, long bound, bool nonzero) {
  std::uniform_int_distribution<long> num(-bound, bound), den(1, bound);
  long n = 0;
  do {
    n = num(rng);
  } while (nonzero && n == 0);
  Rational r(n, den(rng));
  r.canonicalize();
  return r;
}

/// Default family parameter draw: numerators and denominators in [-9, 9].
inline Rational random_param(Rng& rng, bool nonzero) { return random_rational(rng, 9, nonzero); }

inline TriangularSpec random_triangular(Rng& rng, unsigned k, long bound = 9) {
  TriangularSpec s;
  s.k = k;
  for (unsigned i = 2; i <= k; ++i)
    s.c.push_back(random_rational(rng, bound, i == k));
  s.lambda = random_rational(rng, bound, false);
  return s;
}

inline QShearSpec random_qshear(Rng& rng, unsigned m, long bound = 9) {
  QShearSpec s;
  s.m = m;
  s.gamma = random_rational(rng, bound, true);
  for (unsigned i = 1; i <= m; ++i)
    s.beta.push_back(random_rational(rng, bound, i == m));
  s.lambda = random_rational(rng, bound, false);
  return s;
}

inline Poly random_poly(Rng& rng, unsigned max_degree, unsigned terms, long coef_bound) {
  std::uniform_int_distribution<unsigned> deg(0, max_degree);
  Poly p;
  for (unsigned t = 0; t < terms; ++t) {
    unsigned d = deg(rng);
    unsigned i = std::uniform_int_distribution<unsigned>(0, d)(rng);
    p.add_term({i, d - i}, random_rational(rng, coef_bound, true));
  }
  return p;
}

inline Poly random_form(Rng& rng, unsigned degree, long coef_bound) {
  Poly p;
  while (p.is_zero())
    for (unsigned i = 0; i <= degree; ++i)
      p.add_term({i, degree - i}, random_rational(rng, coef_bound, false));
  return p;
}

/// Brute-force oracle: a and b agree at `count` random rational points.
inline bool agree_at_random_points(const Poly& a, const Poly& b, Rng& rng, int count = 5) {
  for (int i = 0; i < count; ++i) {
    Rational x = random_rational(rng, 50, false), y = random_rational(rng, 50, false);
    if (eval_exact(a, x, y) != eval_exact(b, x, y))
      return false;
  }
  return true;
}

/// Row-major 2x2 rational matrix.
using Matrix2Q = std::array<Rational, 4>;

/// det = 1 matrix shear_x(s) * shear_y(t) * diag(r, 1/r) with s, t, r small
/// rationals, so entries stay of modest size.
inline Matrix2Q random_unimodular(Rng& rng) {
  Rational s = random_rational(rng, 2, false), t = random_rational(rng, 2, false), r = random_rational(rng, 2, true);
  return {(1 + s * t) * r, s / r, t * r, 1 / r};
}

inline Matrix2Q inverse_unimodular(const Matrix2Q& a) { return {a[3], -a[1], -a[2], a[0]}; }

/// h(A p)
inline Poly precompose_linear(const Poly& h, const Matrix2Q& a) {
  const Poly x = Poly::x(), y = Poly::y();
  return compose(h, x * a[0] + y * a[1], x * a[2] + y * a[3]);
}

}  // namespace isoforge::testing
