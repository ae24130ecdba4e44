#pragma once

// The two branches of trivial isochronous centers, H = (f1^2 + f2^2) / 2 with
// det Df = 1:
//
//   triangular:  f1 = x + sum_{i=2..k} c_i y^i,           f2 = y + lambda f1
//   Q-shear:     f1 = x + sum_{i=1..m} beta_i Q^i,        f2 = Q + lambda f1,
//                Q  = y + gamma x^2
//
// Triangular maps give system degree 2k - 1 (every odd degree >= 3); Q-shear
// maps give 4m - 1, so that branch only exists in degrees 3 mod 4, from 7 on.

#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "isoforge/poly.hpp"

namespace isoforge {

struct TriangularSpec {
  unsigned k = 2;
  std::vector<Rational> c;  // c[0] = c_2, ..., c[k-2] = c_k
  Rational lambda;
};

struct QShearSpec {
  unsigned m = 2;
  Rational gamma;
  std::vector<Rational> beta;  // beta[0] = beta_1, ..., beta[m-1] = beta_m
  Rational lambda;
};

using FamilySpec = std::variant<TriangularSpec, QShearSpec>;

/// Invalid family parameters. `field` names the offending JSON key.
struct SpecError : std::invalid_argument {
  SpecError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field(std::move(field)) {}
  std::string field;
};

struct BuildOptions {
  /// Accept c_k = 0 / beta_m = 0, where the map has lower degree than nominal.
  bool allow_degree_drop = false;
};

struct PolyMap {
  Poly f1;
  Poly f2;

  static PolyMap identity() { return {Poly::x(), Poly::y()}; }
  bool fixes_origin() const { return is_zero(f1.constant_term()) && is_zero(f2.constant_term()); }
  Degree degree() const {
    auto a = f1.degree(), b = f2.degree();
    if (!a)
      return b;
    if (!b)
      return a;
    return std::max(*a, *b);
  }
  friend bool operator==(const PolyMap&, const PolyMap&) = default;
};

/// outer o inner
inline PolyMap compose_maps(const PolyMap& outer, const PolyMap& inner) {
  return {compose(outer.f1, inner.f1, inner.f2), compose(outer.f2, inner.f1, inner.f2)};
}

struct Hamiltonian {
  Poly H;
  std::optional<PolyMap> source;
  /// Optional factorization of source, innermost first. Numerical code evaluates
  /// through it to avoid cancellation in the expanded polynomials.
  std::vector<PolyMap> factors;
};

inline void validate(const TriangularSpec& s, const BuildOptions& opt = {}) {
  if (s.k < 2)
    throw SpecError("k", "must be >= 2");
  if (s.c.size() != s.k - 1)
    throw SpecError("c", "expected " + std::to_string(s.k - 1) + " coefficients c_2..c_k, got " +
                             std::to_string(s.c.size()));
  if (!opt.allow_degree_drop && is_zero(s.c.back()))
    throw SpecError("c", "c_k must be nonzero, otherwise the system degree drops below 2k - 1");
}

inline void validate(const QShearSpec& s, const BuildOptions& opt = {}) {
  if (s.m < 2)
    throw SpecError("m", "must be >= 2");
  if (is_zero(s.gamma))
    throw SpecError("gamma", "must be nonzero (Q = y + gamma*x^2 requires gamma != 0)");
  if (s.beta.size() != s.m)
    throw SpecError("beta", "expected " + std::to_string(s.m) + " coefficients beta_1..beta_m, got " +
                                std::to_string(s.beta.size()));
  if (!opt.allow_degree_drop && is_zero(s.beta.back()))
    throw SpecError("beta", "beta_m must be nonzero, otherwise the system degree drops below 4m - 1");
}

inline void validate(const FamilySpec& s, const BuildOptions& opt = {}) {
  std::visit([&](const auto& v) { validate(v, opt); }, s);
}

/// System degree a valid spec is built to have: 2k - 1 or 4m - 1.
inline unsigned nominal_system_degree(const FamilySpec& s) {
  return std::visit(
      [](const auto& v) -> unsigned {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, TriangularSpec>)
          return 2 * v.k - 1;
        else
          return 4 * v.m - 1;
      },
      s);
}

namespace detail {

/// sum_i coeffs[i] * base^(first_power + i)
inline Poly power_series_in(const Poly& base, const std::vector<Rational>& coeffs, unsigned first_power) {
  Poly sum;
  Poly pw = base.pow(first_power);
  for (const auto& c : coeffs) {
    sum.add_scaled(pw, c);
    pw *= base;
  }
  return sum;
}

inline Poly quadratic_shear(const Rational& gamma) { return Poly::y() + Poly::monomial(gamma, 2, 0); }

}  // namespace detail

inline PolyMap build_triangular(const TriangularSpec& s, const BuildOptions& opt = {}) {
  validate(s, opt);
  Poly f1 = Poly::x() + detail::power_series_in(Poly::y(), s.c, 2);
  Poly f2 = Poly::y() + f1 * s.lambda;
  return {std::move(f1), std::move(f2)};
}

inline PolyMap build_qshear(const QShearSpec& s, const BuildOptions& opt = {}) {
  validate(s, opt);
  Poly q = detail::quadratic_shear(s.gamma);
  Poly f1 = Poly::x() + detail::power_series_in(q, s.beta, 1);
  Poly f2 = q + f1 * s.lambda;
  return {std::move(f1), std::move(f2)};
}

inline PolyMap build_family(const FamilySpec& s, const BuildOptions& opt = {}) {
  return std::visit(
      [&](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, TriangularSpec>)
          return build_triangular(v, opt);
        else
          return build_qshear(v, opt);
      },
      s);
}

inline Hamiltonian hamiltonian_of(const PolyMap& f) {
  if (!f.fixes_origin())
    throw std::invalid_argument("hamiltonian_of: map does not fix the origin");
  Poly h = (f.f1 * f.f1 + f.f2 * f.f2) * Rational(1, 2);
  return {std::move(h), f};
}

/// Elementary factors of a family map, innermost first:
///   triangular: T, L        Q-shear: S, T, L
/// with S(x, y) = (x, y + gamma x^2), T(u, v) = (u + g(v), v), L(u, v) = (u, v + lambda u).
inline std::vector<PolyMap> family_factors(const FamilySpec& spec, const BuildOptions& opt = {}) {
  validate(spec, opt);
  const PolyMap lambda_shear = std::visit(
      [](const auto& v) { return PolyMap{Poly::x(), Poly::y() + Poly::x() * v.lambda}; }, spec);
  if (const auto* t = std::get_if<TriangularSpec>(&spec))
    return {PolyMap{Poly::x() + detail::power_series_in(Poly::y(), t->c, 2), Poly::y()}, lambda_shear};
  const auto& q = std::get<QShearSpec>(spec);
  return {PolyMap{Poly::x(), detail::quadratic_shear(q.gamma)},
          PolyMap{Poly::x() + detail::power_series_in(Poly::y(), q.beta, 1), Poly::y()}, lambda_shear};
}

/// Hamiltonian of the family map, carrying its factorization.
inline Hamiltonian family_hamiltonian(const FamilySpec& spec, const BuildOptions& opt = {}) {
  Hamiltonian h = hamiltonian_of(build_family(spec, opt));
  h.factors = family_factors(spec, opt);
  return h;
}

/// (xdot, ydot) = (-H_y, H_x)
inline std::pair<Poly, Poly> vector_field(const Hamiltonian& h) {
  return {-partial(h.H, Var::Y), partial(h.H, Var::X)};
}

/// Largest total degree among the vector field components.
inline unsigned system_degree(const Hamiltonian& h) {
  if (h.H.is_constant())
    throw std::invalid_argument("system_degree: constant Hamiltonian has no vector field");
  auto [xd, yd] = vector_field(h);
  return std::max(xd.degree().value_or(0), yd.degree().value_or(0));
}

/// Polynomial inverse of the family map, assembled by undoing the elementary
/// factors of the construction in reverse order:
///   triangular: f = L o T,      Q-shear: f = L o T o S
/// with L(u, v) = (u, v + lambda u), T(u, v) = (u + g(v), v), S(x, y) = (x, y + gamma x^2).
/// Not checked against f; invert_map does that.
inline PolyMap family_inverse(const FamilySpec& spec) {
  const PolyMap undo_lambda = std::visit(
      [](const auto& v) { return PolyMap{Poly::x(), Poly::y() - Poly::x() * v.lambda}; }, spec);
  if (const auto* t = std::get_if<TriangularSpec>(&spec)) {
    PolyMap undo_power{Poly::x() - detail::power_series_in(Poly::y(), t->c, 2), Poly::y()};
    return compose_maps(undo_power, undo_lambda);
  }
  const auto& q = std::get<QShearSpec>(spec);
  PolyMap undo_power{Poly::x() - detail::power_series_in(Poly::y(), q.beta, 1), Poly::y()};
  PolyMap undo_shear{Poly::x(), Poly::y() - Poly::monomial(q.gamma, 2, 0)};
  return compose_maps(undo_shear, compose_maps(undo_power, undo_lambda));
}

/// Exact inverse of f = build_family(spec). Both g o f and f o g are checked
/// against the identity before returning.
inline PolyMap invert_map(const PolyMap& f, const FamilySpec& spec) {
  PolyMap g = family_inverse(spec);
  const PolyMap id = PolyMap::identity();
  if (compose_maps(g, f) != id)
    throw std::logic_error("invert_map: g o f is not the identity (map does not match its spec)");
  if (compose_maps(f, g) != id)
    throw std::logic_error("invert_map: f o g is not the identity (map does not match its spec)");
  return g;
}

struct BranchCatalogEntry {
  unsigned n = 3;
  bool triangular_available = true;
  unsigned triangular_k = 2;
  bool qshear_available = false;
  std::optional<unsigned> qshear_m;

  /// c_2..c_k plus lambda
  unsigned triangular_parameter_count() const { return triangular_k; }
  /// gamma, beta_1..beta_m, lambda
  std::optional<unsigned> qshear_parameter_count() const {
    if (!qshear_m)
      return std::nullopt;
    return *qshear_m + 2;
  }
  friend bool operator==(const BranchCatalogEntry&, const BranchCatalogEntry&) = default;
};

/// One entry per odd degree in [3, n_max].
inline std::vector<BranchCatalogEntry> branch_catalog(unsigned n_max) {
  if (n_max < 3 || n_max % 2 == 0)
    throw std::invalid_argument("branch_catalog: n_max must be odd and >= 3, got " + std::to_string(n_max));
  std::vector<BranchCatalogEntry> out;
  for (unsigned n = 3; n <= n_max; n += 2) {
    BranchCatalogEntry e;
    e.n = n;
    e.triangular_available = true;
    e.triangular_k = (n + 1) / 2;
    e.qshear_available = n % 4 == 3 && n >= 7;
    if (e.qshear_available)
      e.qshear_m = (n + 1) / 4;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON form:
//   {"branch":"triangular","k":3,"c":["1/2","-1/3"],"lambda":"2"}
//   {"branch":"qshear","m":2,"gamma":"1","beta":["1","1"],"lambda":"0"}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      ok = ok || key == a;
    if (!ok)
      throw SpecError(key, "unknown key");
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw SpecError(key, "missing");
  return *it;
}

inline Rational rational_field(const nlohmann::json& v, const std::string& field) {
  try {
    if (v.is_string())
      return parse_rational(v.get<std::string>());
    if (v.is_number_integer())
      return Rational(v.get<long>());
  } catch (const ParseError& e) {
    throw SpecError(field, e.what());
  }
  throw SpecError(field, "expected a rational string such as \"3/2\" or an integer");
}

inline unsigned count_field(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_integer() || v.get<long>() < 0)
    throw SpecError(key, "expected a nonnegative integer");
  return static_cast<unsigned>(v.get<long>());
}

inline std::vector<Rational> rational_list(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_array())
    throw SpecError(key, "expected an array of rationals");
  std::vector<Rational> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(rational_field(v[i], std::string(key) + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

/// Parses and validates. Throws SpecError naming the offending field.
inline FamilySpec family_spec_from_json(const nlohmann::json& j, const BuildOptions& opt = {}) {
  if (!j.is_object())
    throw SpecError("<root>", "expected a JSON object");
  const auto& branch = detail::require(j, "branch");
  if (!branch.is_string())
    throw SpecError("branch", "expected \"triangular\" or \"qshear\"");
  const auto name = branch.get<std::string>();
  FamilySpec spec;
  if (name == "triangular") {
    detail::reject_unknown_keys(j, {"branch", "k", "c", "lambda"});
    TriangularSpec t;
    t.k = detail::count_field(j, "k");
    t.c = detail::rational_list(j, "c");
    t.lambda = detail::rational_field(detail::require(j, "lambda"), "lambda");
    spec = std::move(t);
  } else if (name == "qshear") {
    detail::reject_unknown_keys(j, {"branch", "m", "gamma", "beta", "lambda"});
    QShearSpec q;
    q.m = detail::count_field(j, "m");
    q.gamma = detail::rational_field(detail::require(j, "gamma"), "gamma");
    q.beta = detail::rational_list(j, "beta");
    q.lambda = detail::rational_field(detail::require(j, "lambda"), "lambda");
    spec = std::move(q);
  } else {
    throw SpecError("branch", "expected \"triangular\" or \"qshear\", got \"" + name + "\"");
  }
  validate(spec, opt);
  return spec;
}

inline nlohmann::json to_json(const FamilySpec& spec) {
  auto list = [](const std::vector<Rational>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : v)
      a.push_back(to_short_string(r));
    return a;
  };
  if (const auto* t = std::get_if<TriangularSpec>(&spec))
    return {{"branch", "triangular"}, {"k", t->k}, {"c", list(t->c)}, {"lambda", to_short_string(t->lambda)}};
  const auto& q = std::get<QShearSpec>(spec);
  return {{"branch", "qshear"},
          {"m", q.m},
          {"gamma", to_short_string(q.gamma)},
          {"beta", list(q.beta)},
          {"lambda", to_short_string(q.lambda)}};
}

}  // namespace isoforge
