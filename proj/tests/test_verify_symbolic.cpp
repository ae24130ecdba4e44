#include <gtest/gtest.h>

#include "isoforge/verify_symbolic.hpp"
#include "support.hpp"

using namespace isoforge;
using isoforge::testing::Rng;

namespace {

const Poly X = Poly::x();
const Poly Y = Poly::y();

HomogeneousPoly form(const Poly& p) { return HomogeneousPoly::of(p); }

// Independent route for the transport equation: match coefficients of
// x^j y^(D-1-j) in p_x + beta p_y = h, which gives
//   (j + 1) a_(j+1) + beta (D - j) a_j = h_j,   a_0 = 0 (p(0, y) = 0).
Poly transport_by_recurrence(const Rational& beta, const HomogeneousPoly& h) {
  const unsigned D = h.degree() + 1;
  std::vector<Rational> a(D + 1, Rational(0));
  for (unsigned j = 0; j < D; ++j)
    a[j + 1] = (h.poly().coefficient(j, D - 1 - j) - beta * (D - j) * a[j]) / (j + 1);
  Poly p;
  for (unsigned i = 0; i <= D; ++i)
    p.add_term({i, D - i}, a[i]);
  return p;
}

}  // namespace

TEST(JacobianDet, Examples) {
  EXPECT_EQ(jacobian_det(PolyMap::identity()), Poly(1));
  EXPECT_EQ(jacobian_det(build_triangular({3, {Rational(1, 2), Rational(-1, 3)}, 2})), Poly(1));
  EXPECT_EQ(jacobian_det(build_qshear({2, 1, {1, 1}, 0})), Poly(1));
}

TEST(CheckUnitJacobian, Examples) {
  EXPECT_FALSE(check_unit_jacobian({X * Rational(2), Y}));
  EXPECT_EQ(jacobian_det({X * Rational(2), Y}), Poly(2));

  // (x + y^2, y + x): f1x = 1, f1y = 2y, f2x = 1, f2y = 1, so det = 1 - 2y.
  const PolyMap f{X + Y.pow(2), Y + X};
  EXPECT_EQ(jacobian_det(f), Poly(1) - Y * Rational(2));
  EXPECT_FALSE(check_unit_jacobian(f));

  EXPECT_TRUE(check_unit_jacobian({X, Y + X.pow(3)}));
}

TEST(JacobianDet, CompositionOfUnitMapsIsUnit) {
  Rng rng(41);
  for (int i = 0; i < 20; ++i) {
    auto a = build_triangular(isoforge::testing::random_triangular(rng, 2 + i % 3));
    auto b = build_qshear(isoforge::testing::random_qshear(rng, 2));
    ASSERT_TRUE(check_unit_jacobian(compose_maps(a, b)));
    ASSERT_TRUE(check_unit_jacobian(compose_maps(b, a)));
  }
}

TEST(DegeneracyWitness, Examples) {
  const Poly s = X + Y;
  auto w = degeneracy_witness(form(s.pow(2)), form(s.pow(3)));
  ASSERT_TRUE(w.has_value());
  EXPECT_EQ(w->r.poly(), s);
  EXPECT_EQ(w->m_prime, 2u);
  EXPECT_EQ(w->n_prime, 3u);
  EXPECT_EQ(w->c_p, 1);
  EXPECT_EQ(w->c_q, 1);
  EXPECT_EQ(w->r.poly().pow(2) * w->c_p, s.pow(2));
  EXPECT_EQ(w->r.poly().pow(3) * w->c_q, s.pow(3));

  // det D(x^2, y^2) = 4xy
  EXPECT_EQ(jacobian_det({X.pow(2), Y.pow(2)}), X * Y * Rational(4));
  EXPECT_FALSE(degeneracy_witness(form(X.pow(2)), form(Y.pow(2))).has_value());

  auto m = degeneracy_witness(form(X.pow(4) * Rational(3)), form(X.pow(2) * Rational(5)));
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->r.poly(), X);
  EXPECT_EQ(m->m_prime, 4u);
  EXPECT_EQ(m->n_prime, 2u);
  EXPECT_EQ(m->c_p, 3);
  EXPECT_EQ(m->c_q, 5);
}

TEST(DegeneracyWitness, NonSquarefreeBase) {
  // q = p^2 with p = x^2 y: the common base is x^2 y itself.
  const Poly p = X.pow(2) * Y;
  auto w = degeneracy_witness(form(p), form(p.pow(2) * Rational(-2)));
  ASSERT_TRUE(w.has_value());
  EXPECT_EQ(w->r.poly(), p);
  EXPECT_EQ(w->m_prime, 1u);
  EXPECT_EQ(w->n_prime, 2u);
  EXPECT_EQ(w->c_q, -2);
}

TEST(DegeneracyWitness, IrreducibleQuadraticBase) {
  const Poly r = X.pow(2) + Y.pow(2);
  auto w = degeneracy_witness(form(r.pow(3) * Rational(7, 2)), form(r * Rational(-1, 3)));
  ASSERT_TRUE(w.has_value());
  EXPECT_EQ(w->r.poly(), r);
  EXPECT_EQ(w->m_prime, 3u);
  EXPECT_EQ(w->n_prime, 1u);
  EXPECT_EQ(w->c_p, Rational(7, 2));
  EXPECT_EQ(w->c_q, Rational(-1, 3));
}

TEST(SolveTransport, Examples) {
  auto zero = solve_transport({1, HomogeneousPoly(Poly(), 3)});
  EXPECT_TRUE(zero.is_zero());
  EXPECT_EQ(zero.degree(), 4u);

  auto p = solve_transport({1, form(X + Y)});
  EXPECT_EQ(p.poly(), X * Y);
  // residual check: d/dx(xy) + d/dy(xy) = y + x
  EXPECT_EQ(partial(p.poly(), Var::X) + partial(p.poly(), Var::Y), X + Y);

  EXPECT_EQ(solve_transport({0, form(Y.pow(2))}).poly(), X * Y.pow(2));
}

TEST(SolveTransport, AgreesWithCoefficientRecurrence) {
  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    unsigned d = i % 9;
    Rational beta = isoforge::testing::random_rational(rng, 9, false);
    auto h = form(isoforge::testing::random_form(rng, d, 9));
    auto p = solve_transport({beta, h});
    ASSERT_EQ(p.degree(), d + 1);
    ASSERT_TRUE((partial(p.poly(), Var::X) + partial(p.poly(), Var::Y) * beta - h.poly()).is_zero());
    ASSERT_TRUE(is_zero(p.poly().coefficient(0, d + 1)));
    ASSERT_TRUE((p.poly() - transport_by_recurrence(beta, h)).is_zero());
  }
}

TEST(CancellationTrace, SepticExample) {
  auto t = qshear_cancellation_trace({2, 1, {1, 1}, 1});
  ASSERT_EQ(t.pairs.size(), 3u);
  for (const auto& p : t.pairs)
    EXPECT_TRUE(p.sum.is_zero()) << p.first << " + " << p.second;
  EXPECT_TRUE(t.total_is_one());
  EXPECT_TRUE(t.consistent());
  EXPECT_EQ(t.q_x, X * Rational(2));
  EXPECT_EQ(t.q_y, Poly(1));
  // S = beta_1 + 2 beta_2 Q
  EXPECT_EQ(t.s, Poly(1) + (Y + X.pow(2)) * Rational(2));
}

TEST(CancellationTrace, LambdaZeroKillsLambdaTerms) {
  auto t = qshear_cancellation_trace({2, 3, {2, -1}, 0});
  for (const auto& nt : t.terms)
    if (nt.name.find("lambda") != std::string::npos)
      EXPECT_TRUE(nt.poly.is_zero()) << nt.name;
  EXPECT_TRUE(t.total_is_one());
}

TEST(CancellationTrace, MatchesJacobianForRandomSpecs) {
  Rng rng(43);
  for (int i = 0; i < 12; ++i) {
    auto spec = isoforge::testing::random_qshear(rng, 2 + i % 4);
    auto t = qshear_cancellation_trace(spec);
    ASSERT_TRUE(t.consistent());
    ASSERT_EQ(t.total, jacobian_det(build_qshear(spec)));
  }
  auto t5 = qshear_cancellation_trace(isoforge::testing::random_qshear(rng, 5));
  EXPECT_EQ(t5.total, Poly(1));
}

TEST(CancellationTrace, JsonReport) {
  auto j = to_json(qshear_cancellation_trace({2, 1, {1, 1}, 1}));
  EXPECT_EQ(j["terms"].size(), 7u);
  EXPECT_EQ(j["total"], "1x^0y^0");
  EXPECT_EQ(j["Q"], "1x^2y^0 + 1x^0y^1");
  EXPECT_TRUE(j["pairs_cancel"].get<bool>());
  for (const auto& p : j["pairs"])
    EXPECT_EQ(p["sum"], "0");
}
