#pragma once

// Exact checks: unit Jacobian determinant, degeneracy witnesses for
// homogeneous pairs with vanishing Jacobian, the transport equation
// p_x + beta p_y = h, and a term-by-term trace of the Q-shear determinant.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "isoforge/families.hpp"
#include "isoforge/homogeneous.hpp"

namespace isoforge {

inline Poly jacobian_det(const PolyMap& f) {
  return partial(f.f1, Var::X) * partial(f.f2, Var::Y) - partial(f.f1, Var::Y) * partial(f.f2, Var::X);
}

inline bool check_unit_jacobian(const PolyMap& f) { return jacobian_det(f) == Poly(1); }

// ---------------------------------------------------------------------------
// Homogeneous degeneracy: det D(p, q) = 0 forces p = c_p r^m', q = c_q r^n'.

struct DegeneracyWitness {
  HomogeneousPoly r;
  Rational c_p;
  Rational c_q;
  unsigned m_prime = 0;
  unsigned n_prime = 0;

  bool reconstructs(const HomogeneousPoly& p, const HomogeneousPoly& q) const {
    return r.poly().pow(m_prime) * c_p == p.poly() && r.poly().pow(n_prime) * c_q == q.poly();
  }
};

/// det D(p, q) vanishes but the pair has no common rational base form.
struct WitnessOutsideRationalField : std::runtime_error {
  WitnessOutsideRationalField() : std::runtime_error("witness outside rational field") {}
};

/// Returns nothing when det D(p, q) is not identically zero. Otherwise r is the
/// normalized form of which p and q are both powers, taken with the largest
/// possible exponents (for squarefree r this is the radical of p).
inline std::optional<DegeneracyWitness> degeneracy_witness(const HomogeneousPoly& p, const HomogeneousPoly& q) {
  if (p.is_zero() || q.is_zero())
    throw std::invalid_argument("degeneracy_witness requires nonzero forms");
  if (!jacobian_det({p.poly(), q.poly()}).is_zero())
    return std::nullopt;

  PerfectPower pp = perfect_power_root(p);
  PerfectPower pq = perfect_power_root(q);
  HomogeneousPoly r;
  if (pp.exponent == 0)
    r = pq.base;
  else if (pq.exponent == 0 || pp.base == pq.base)
    r = pp.base;
  else
    throw WitnessOutsideRationalField();

  DegeneracyWitness w{r, pp.scale, pq.scale, pp.exponent, pq.exponent};
  if (!w.reconstructs(p, q))
    throw std::logic_error("degeneracy_witness: reconstruction mismatch");
  return w;
}

// ---------------------------------------------------------------------------
// Transport equation.

struct TransportProblem {
  Rational beta;
  HomogeneousPoly h;
};

/// The unique homogeneous p of degree deg h + 1 with p_x + beta p_y = h and
/// p(0, y) = 0. In u = x, v = y - beta x the operator becomes d/du, so:
/// shear h into (u, v), integrate in u from 0, shear back.
inline HomogeneousPoly solve_transport(const TransportProblem& prob) {
  const unsigned d = prob.h.degree() + 1;
  if (prob.h.is_zero())
    return HomogeneousPoly(Poly(), d);

  Poly sheared = compose(prob.h.poly(), Poly::x(), Poly::y() + Poly::x() * prob.beta);
  Poly integrated;
  for (const auto& [m, c] : sheared.terms())
    integrated.add_term({m.x + 1, m.y}, c / (m.x + 1));
  Poly p = compose(integrated, Poly::x(), Poly::y() - Poly::x() * prob.beta);

  Poly residual = partial(p, Var::X) + partial(p, Var::Y) * prob.beta - prob.h.poly();
  if (!residual.is_zero())
    throw std::logic_error("solve_transport: nonzero residual " + to_canonical_string(residual));
  if (!is_zero(p.coefficient(0, d)))
    throw std::logic_error("solve_transport: normalization p(0, y) = 0 violated");
  return HomogeneousPoly(std::move(p), d);
}

// ---------------------------------------------------------------------------
// Q-shear determinant, term by term. With S = sum i beta_i Q^(i-1):
//   f1_x = 1 + Q_x S,  f1_y = Q_y S,  f2_x = Q_x + lambda f1_x,  f2_y = Q_y + lambda f1_y
// and (Q_y = 1)
//   det = 1 + lambda S + Q_x S + lambda Q_x S^2 - S Q_x - lambda S - lambda Q_x S^2.

struct NamedPoly {
  std::string name;
  Poly poly;
};

struct CancellingPair {
  std::string first;
  std::string second;
  Poly sum;
};

struct CancellationTrace {
  QShearSpec spec;
  Poly q, q_x, q_y, s;
  std::vector<NamedPoly> terms;
  std::vector<CancellingPair> pairs;
  Poly total;            // sum of all named terms
  Poly product_form;     // f1_x f2_y - f1_y f2_x from the chain-rule entries
  Poly jacobian;         // jacobian_det of the assembled map

  bool pairs_cancel() const {
    for (const auto& p : pairs)
      if (!p.sum.is_zero())
        return false;
    return true;
  }
  bool total_is_one() const { return total == Poly(1); }
  bool consistent() const { return pairs_cancel() && total_is_one() && product_form == total && jacobian == total; }
};

inline CancellationTrace qshear_cancellation_trace(const QShearSpec& spec) {
  validate(spec, {.allow_degree_drop = true});
  CancellationTrace t;
  t.spec = spec;
  t.q = detail::quadratic_shear(spec.gamma);
  t.q_x = partial(t.q, Var::X);
  t.q_y = partial(t.q, Var::Y);

  Poly qpow(1);
  for (unsigned i = 1; i <= spec.m; ++i) {
    t.s.add_scaled(qpow, spec.beta[i - 1] * i);
    qpow *= t.q;
  }

  const Rational& lam = spec.lambda;
  const Poly s2 = t.s * t.s;
  t.terms = {
      {"1", Poly(1)},
      {"lambda*S", t.s * lam},
      {"Q_x*S", t.q_x * t.s},
      {"lambda*Q_x*S^2", t.q_x * s2 * lam},
      {"-S*Q_x", -(t.s * t.q_x)},
      {"-lambda*S", -(t.s * lam)},
      {"-lambda*Q_x*S^2", -(t.q_x * s2 * lam)},
  };
  auto term = [&](std::string_view name) -> const Poly& {
    for (const auto& nt : t.terms)
      if (nt.name == name)
        return nt.poly;
    throw std::logic_error("unknown term");
  };
  for (auto [a, b] : {std::pair{"lambda*S", "-lambda*S"}, std::pair{"Q_x*S", "-S*Q_x"},
                      std::pair{"lambda*Q_x*S^2", "-lambda*Q_x*S^2"}})
    t.pairs.push_back({a, b, term(a) + term(b)});

  for (const auto& nt : t.terms)
    t.total += nt.poly;

  const Poly f1x = Poly(1) + t.q_x * t.s;
  const Poly f1y = t.q_y * t.s;
  const Poly f2x = t.q_x + f1x * lam;
  const Poly f2y = t.q_y + f1y * lam;
  t.product_form = f1x * f2y - f1y * f2x;
  t.jacobian = jacobian_det(build_qshear(spec, {.allow_degree_drop = true}));
  return t;
}

inline nlohmann::json to_json(const CancellationTrace& t) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& nt : t.terms)
    terms.push_back({{"name", nt.name}, {"poly", to_canonical_string(nt.poly)}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : t.pairs)
    pairs.push_back({{"first", p.first}, {"second", p.second}, {"sum", to_canonical_string(p.sum)}});
  return {{"spec", to_json(FamilySpec(t.spec))},
          {"Q", to_canonical_string(t.q)},
          {"Q_x", to_canonical_string(t.q_x)},
          {"Q_y", to_canonical_string(t.q_y)},
          {"S", to_canonical_string(t.s)},
          {"terms", terms},
          {"pairs", pairs},
          {"total", to_canonical_string(t.total)},
          {"product_form", to_canonical_string(t.product_form)},
          {"jacobian_det", to_canonical_string(t.jacobian)},
          {"pairs_cancel", t.pairs_cancel()},
          {"total_is_one", t.total_is_one()}};
}

}  // namespace isoforge
