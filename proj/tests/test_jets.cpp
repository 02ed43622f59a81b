#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"

using namespace cwe;

namespace {

template <int K>
Jet<K> random_jet(std::mt19937_64& rng, double base_lo = -1.0, double base_hi = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Jet<K> a;
  for (int i = 1; i < Jet<K>::size; ++i) a[i] = u(rng);
  a[0] = std::uniform_real_distribution<double>(base_lo, base_hi)(rng);
  return a;
}

template <int K>
double max_diff(const Jet<K>& a, const Jet<K>& b) {
  double m = 0.0;
  for (int i = 0; i < Jet<K>::size; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::array<Jet<4>, 4> seeds(const std::array<double, 4>& x) {
  return {jet_variable<4>(0, x[0]), jet_variable<4>(1, x[1]), jet_variable<4>(2, x[2]), jet_variable<4>(3, x[3])};
}

}  // namespace

TEST(Jet, SizeIsBinomial) {
  EXPECT_EQ(Jet<0>::size, 1);
  EXPECT_EQ(Jet<2>::size, 15);
  EXPECT_EQ(Jet<4>::size, 70);
  EXPECT_EQ(Jet<6>::size, 210);
}

TEST(Jet, VariableSeed) {
  const auto a = jet_variable<3>(0, 2.0);
  EXPECT_EQ(a.value(), 2.0);
  EXPECT_EQ(jet_partial(a, {1, 0, 0, 0}), 1.0);
  int nonzero = 0;
  for (double c : a.coeffs()) nonzero += c != 0.0;
  EXPECT_EQ(nonzero, 2);

  const auto b = jet_variable<2>(3, 0.0);
  EXPECT_EQ(b.coeffs().size(), 15u);
  nonzero = 0;
  for (double c : b.coeffs()) nonzero += c != 0.0;
  EXPECT_EQ(nonzero, 1);
  EXPECT_THROW(jet_variable<2>(4, 0.0), jet_error);
  EXPECT_THROW(jet_variable<2>(-1, 0.0), jet_error);
}

TEST(Jet, ElementaryFunctionSpotValues) {
  const auto x = jet_variable<5>(0, 0.0);
  EXPECT_NEAR(exp(x).coeff({5, 0, 0, 0}), 1.0 / 120.0, 1e-16);
  EXPECT_NEAR(jet_partial(sin(jet_variable<3>(0, 0.0)), {1, 0, 0, 0}), 1.0, 1e-16);
  const auto r = recip(Jet<3>(2.0));
  EXPECT_EQ(r.value(), 0.5);
  for (int i = 1; i < Jet<3>::size; ++i) EXPECT_EQ(r[i], 0.0);
}

TEST(Jet, ConstantHasNoDerivatives) {
  const Jet<4> c(3.7);
  EXPECT_EQ(jet_partial(c, {0, 1, 0, 0}), 0.0);
  EXPECT_EQ(jet_partial(c, {2, 1, 0, 1}), 0.0);
  const auto sq = jet_variable<4>(0, 1.3) * jet_variable<4>(0, 1.3);
  EXPECT_NEAR(jet_partial(sq, {2, 0, 0, 0}), 2.0, 1e-15);
}

TEST(Jet, MixedPartialOfSinMatchesCentralDifferences) {
  // d1 d2 sin(x y) at (0.3, -0.7) against a 4-point stencil
  const double x0 = 0.3, y0 = -0.7, h = 1e-4;
  const auto s = sin(jet_variable<3>(0, x0) * jet_variable<3>(1, y0));
  auto f = [](double x, double y) { return std::sin(x * y); };
  const double fd = (f(x0 + h, y0 + h) - f(x0 + h, y0 - h) - f(x0 - h, y0 + h) + f(x0 - h, y0 - h)) / (4 * h * h);
  EXPECT_NEAR(jet_partial(s, {1, 1, 0, 0}), fd, 1e-7);
  EXPECT_NEAR(sin(jet_variable<3>(0, 0.0) * jet_variable<3>(1, 0.0)).coeff({1, 1, 0, 0}), 1.0, 1e-16);
}

TEST(Jet, MixedPartialPinnedValue) {
  // d1 d2 sin(t1 + 2 t2) = -2 sin(t1 + 2 t2) = -2 at (pi/2, 0)
  const double pi = std::numbers::pi;
  const auto s = sin(jet_variable<3>(0, pi / 2) + 2.0 * jet_variable<3>(1, 0.0));
  EXPECT_NEAR(jet_partial(s, {1, 1, 0, 0}), -2.0, 1e-14);
  EXPECT_NEAR(jet_partial(s, {0, 2, 0, 0}), -4.0, 1e-14);
}

TEST(Jet, PartialRejectsTooHighOrder) {
  const auto a = jet_variable<2>(0, 1.0);
  EXPECT_THROW(jet_partial(a, {2, 1, 0, 0}), jet_error);
  EXPECT_THROW(jet_partial(a, {-1, 0, 0, 0}), jet_error);
}

TEST(Jet, DomainErrorsNameTheFunction) {
  try {
    log(Jet<2>(-1.0));
    FAIL() << "log of a negative base value must throw";
  } catch (const jet_error& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
  EXPECT_THROW(sqrt(Jet<2>(-0.5)), jet_error);
  EXPECT_THROW(recip(Jet<2>(0.0)), jet_error);
}

TEST(Jet, PolynomialCoefficientsAreExact) {
  // p = 3 t1^2 t2 - t3 t4^3 + 2 t1 t2 t3 t4 + 5, all partials from the monomial rule
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::array<double, 4> x{u(rng), u(rng), u(rng), u(rng)};
    const auto t = seeds(x);
    const Jet<4> p = 3.0 * t[0] * t[0] * t[1] - t[2] * t[3] * t[3] * t[3] + 2.0 * t[0] * t[1] * t[2] * t[3] + 5.0;
    EXPECT_NEAR(p.value(),
                3 * x[0] * x[0] * x[1] - x[2] * std::pow(x[3], 3) + 2 * x[0] * x[1] * x[2] * x[3] + 5, 1e-12);
    EXPECT_NEAR(jet_partial(p, {2, 1, 0, 0}), 6.0, 1e-12);
    EXPECT_NEAR(jet_partial(p, {1, 1, 0, 0}), 6 * x[0] + 2 * x[2] * x[3], 1e-12);
    EXPECT_NEAR(jet_partial(p, {0, 0, 1, 3}), -6.0, 1e-12);
    EXPECT_NEAR(jet_partial(p, {0, 0, 0, 2}), -6 * x[2] * x[3], 1e-12);
    EXPECT_NEAR(jet_partial(p, {1, 1, 1, 1}), 2.0, 1e-12);
    EXPECT_NEAR(jet_partial(p, {3, 0, 0, 0}), 0.0, 1e-12);
  }
}

TEST(JetProperty, LeibnizRuleForDerivatives) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_jet<4>(rng), b = random_jet<4>(rng);
    const int axis = trial % 4;
    const Jet<3> lhs = derivative(a * b, axis);
    const Jet<3> rhs = derivative(a, axis) * truncate<3>(b) + truncate<3>(a) * derivative(b, axis);
    ASSERT_LT(max_diff(lhs, rhs), 1e-10 * (1.0 + max_abs(lhs)));
  }
}

TEST(JetProperty, QuotientAndInverseFunctions) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_jet<4>(rng, 0.5, 2.0), b = random_jet<4>(rng, 0.5, 2.0);
    ASSERT_LT(max_diff((a * b) / b, a), 1e-10 * (1.0 + max_abs(a)));
    ASSERT_LT(max_diff(exp(log(a)), a), 1e-10 * (1.0 + max_abs(a)));
    ASSERT_LT(max_diff(sqrt(a) * sqrt(a), a), 1e-10 * (1.0 + max_abs(a)));
    ASSERT_LT(max_diff(pow(a, 1.5) * recip(sqrt(a)), a), 1e-10 * (1.0 + max_abs(a)));
  }
}

TEST(JetProperty, ChainRuleForSinOfProduct) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_jet<4>(rng);
    const int axis = trial % 4;
    const Jet<3> lhs = derivative(sin(a), axis);
    const Jet<3> rhs = cos(truncate<3>(a)) * derivative(a, axis);
    ASSERT_LT(max_diff(lhs, rhs), 1e-10 * (1.0 + max_abs(lhs)));
  }
}

TEST(JetProperty, ExpAlongOneAxis) {
  for (double x0 : {-1.3, 0.0, 0.4, 2.0}) {
    const auto e = exp(jet_variable<6>(2, x0));
    for (int k = 0; k <= 6; ++k) EXPECT_NEAR(jet_partial(e, {0, 0, k, 0}), std::exp(x0), 1e-12 * std::exp(x0));
  }
}

TEST(JetProperty, SinSquaredPlusCosSquared) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_jet<6>(rng);
    const auto s = sin(a), c = cos(a);
    ASSERT_LT(max_diff(s * s + c * c, Jet<6>(1.0)), 1e-10);
  }
}

TEST(JetMatrix, InverseAndDeterminant) {
  std::mt19937_64 rng(5);
  JetMatrix<3> m(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = random_jet<3>(rng) + (i == j ? 3.0 : 0.0);
  const auto p = matmul(m, inverse(m));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_LT(max_diff(p(i, j), Jet<3>(i == j ? 1.0 : 0.0)), 1e-12);
  const auto d = determinant(m);
  const Eigen::MatrixXd v = to_eigen(m);
  EXPECT_NEAR(d.value(), v.determinant(), 1e-12);
}

TEST(JetMatrix, DenseCommutatorMatchesSparse) {
  std::mt19937_64 rng(6);
  JetMatrix<3> a(6, 6), b(6, 6);
  for (auto& x : a.data()) x = random_jet<3>(rng);
  for (auto& x : b.data()) x = random_jet<3>(rng);
  EXPECT_LT(max_abs(dense_commutator(a, b) - commutator(a, b)), 1e-12);
}
