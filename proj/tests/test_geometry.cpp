#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cwe/riemannian.hpp"
#include "cwe/surfaces.hpp"
#include "cwe/tractor.hpp"
#include "cwe/verify.hpp"

using namespace cwe;

namespace {

constexpr double kPi = std::numbers::pi;

ImmersionSpec trig_torus() {
  std::vector<DisplacementTerm> terms(2);
  terms[0].axis = 8;
  terms[0].coeff = 0.1;
  terms[0].k = {1, 1, 0, 0};
  terms[1].axis = 4;
  terms[1].coeff = 0.05;
  terms[1].k = {0, 0, 1, 1};
  terms[1].fn = {TrigKind::cos, TrigKind::cos, TrigKind::cos, TrigKind::sin};
  return ImmersionSpec::trig_graph_torus({1.0, 1.1, 0.9, 1.2}, 9, terms);
}

AmbientScale tilted(int n) {
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[i] = 0.02 * (i + 1) * (i % 2 ? -1.0 : 1.0);
  return AmbientScale::linear(a);
}

double area(const ImmersionSpec& spec, int resolution) {
  return integrate(make_atlas(spec, resolution), [&](const std::array<double, 4>& t) {
    const auto x = eval_jets<1>(spec, t);
    Eigen::MatrixXd J(spec.n, 4);
    for (int a = 0; a < spec.n; ++a)
      for (int i = 0; i < 4; ++i) J(a, i) = x[a][1 + i];
    return std::sqrt((J.transpose() * J).determinant());
  });
}

template <int K>
double h_norm2(const GeometryPointData<K>& d) {
  double s = 0.0;
  for (const auto& h : d.ex.H) s += h.value() * h.value();
  return d.ff.G.value() * s;
}

template <int K>
double iio_max(const GeometryPointData<K>& d) {
  double m = 0.0;
  for (const auto& v : d.ex.IIo) m = std::max(m, max_abs(v));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Immersions and quadrature

TEST(Spec, ValidationRejectsBadParameters) {
  EXPECT_THROW(ImmersionSpec::round_sphere(1.0, 4), std::invalid_argument);
  EXPECT_THROW(ImmersionSpec::round_sphere(-1.0, 5), std::invalid_argument);
  EXPECT_THROW(ImmersionSpec::product_torus({1, 1, 1, 1}, 7), std::invalid_argument);
  EXPECT_THROW(ImmersionSpec::product_torus({1, 0, 1, 1}, 8), std::invalid_argument);
  DisplacementTerm t;
  t.axis = 9;
  EXPECT_THROW(ImmersionSpec::trig_graph_torus({1, 1, 1, 1}, 9, {t}), std::invalid_argument);
}

TEST(Spec, ResolutionMustResolveFourierDegree) {
  const auto s = trig_torus();
  EXPECT_EQ(s.fourier_degree(), 2);
  EXPECT_THROW(check_resolution(s, 7), std::invalid_argument);
  EXPECT_NO_THROW(check_resolution(s, 8));
  EXPECT_NO_THROW(check_resolution(ImmersionSpec::round_sphere(1, 5), 2));
}

TEST(Quadrature, GaussLegendreIsExactForPolynomials) {
  std::vector<double> x, w;
  gauss_legendre(6, 0.0, 2.0, x, w);
  double s0 = 0.0, s11 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s0 += w[i];
    s11 += w[i] * std::pow(x[i], 11);
  }
  EXPECT_NEAR(s0, 2.0, 1e-14);
  EXPECT_NEAR(s11, std::pow(2.0, 12) / 12.0, 1e-10);
}

TEST(Quadrature, TrapezoidIsExactForLowModes) {
  std::vector<double> x, w;
  trapezoid_periodic(8, 0.0, 2 * kPi, x, w);
  for (int k = 1; k < 4; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::cos(k * x[i]) * std::cos(k * x[i]);
    EXPECT_NEAR(s, kPi, 1e-13) << "mode " << k;
  }
}

TEST(Quadrature, SphereVolume) {
  for (double r : {1.0, 2.0}) {
    const auto s = ImmersionSpec::round_sphere(r, 5);
    EXPECT_NEAR(area(s, 16), 8.0 * kPi * kPi / 3.0 * std::pow(r, 4), 1e-10 * std::pow(r, 4));
  }
}

TEST(Quadrature, ProductTorusVolume) {
  const auto s = ImmersionSpec::product_torus({1.0, 1.1, 0.9, 1.2}, 8);
  EXPECT_NEAR(area(s, 4), std::pow(2 * kPi, 4) * 1.0 * 1.1 * 0.9 * 1.2, 1e-10);
}

TEST(Quadrature, ThreadCountDoesNotChangeTheSum) {
  const auto s = trig_torus();
  const Atlas atlas = make_atlas(s, 8);
  auto f = [&](const std::array<double, 4>& t) { return eval_point(s, t)[8] * eval_point(s, t)[8] + 1.0; };
  IntegrateOptions one, four;
  four.threads = 4;
  four.block = 97;
  one.block = 97;
  EXPECT_EQ(integrate(atlas, f, one), integrate(atlas, f, four));
}

TEST(Immersion, PointsLieOnTheModelSurfaces) {
  const auto sphere = ImmersionSpec::round_sphere(2.0, 6);
  const auto torus = ImmersionSpec::product_torus({1.0, 1.1, 0.9, 1.2}, 8);
  for (const auto& t : random_chart_points(sphere, 20, 3)) {
    const auto x = eval_point(sphere, t);
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    EXPECT_NEAR(r2, 4.0, 1e-13);
    EXPECT_EQ(x[5], 0.0);
  }
  for (const auto& t : random_chart_points(torus, 20, 4)) {
    const auto x = eval_point(torus, t);
    EXPECT_NEAR(x[2] * x[2] + x[3] * x[3], 1.21, 1e-13);
    EXPECT_NEAR(x[6] * x[6] + x[7] * x[7], 1.44, 1e-13);
  }
}

TEST(Immersion, RandomPointsAreReproducible) {
  const auto s = trig_torus();
  EXPECT_EQ(random_chart_points(s, 10, 42), random_chart_points(s, 10, 42));
  EXPECT_NE(random_chart_points(s, 10, 42), random_chart_points(s, 10, 43));
}

TEST(Immersion, DisplacementJetsMatchFiniteDifferences) {
  const auto s = trig_torus();
  const std::array<double, 4> t{0.3, 1.7, 2.2, 4.1};
  const auto x = eval_jets<2>(s, t);
  const double h = 1e-5;
  for (int i = 0; i < 4; ++i) {
    auto tp = t, tm = t;
    tp[i] += h;
    tm[i] -= h;
    const auto xp = eval_point(s, tp), xm = eval_point(s, tm);
    for (int a = 0; a < s.n; ++a) EXPECT_NEAR(x[a][1 + i], (xp[a] - xm[a]) / (2 * h), 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Riemannian data

TEST(Riemannian, RoundSphereCurvature) {
  for (double r : {1.0, 2.0}) {
    const auto s = ImmersionSpec::round_sphere(r, 6);
    for (const auto& t : random_chart_points(s, 5, 7)) {
      const auto d = compute_geometry<4>(s, t);
      EXPECT_NEAR(d.curv.scalar.value(), 12.0 / (r * r), 1e-10);
      EXPECT_NEAR(d.curv.jtrace.value(), 2.0 / (r * r), 1e-10);
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k)
          EXPECT_NEAR(d.curv.p[j * 4 + k].value(), d.ff.g(j, k).value() / (2 * r * r), 1e-10);
      EXPECT_NEAR(h_norm2(d), 1.0 / (r * r), 1e-12);
      EXPECT_LT(iio_max(d), 1e-10);
    }
  }
}

TEST(Riemannian, ProductTorusIsFlat) {
  const std::array<double, 4> radii{1.0, 1.1, 0.9, 1.2};
  const auto s = ImmersionSpec::product_torus(radii, 8);
  double h2 = 0.0;
  for (double r : radii) h2 += 1.0 / (16.0 * r * r);
  for (const auto& t : random_chart_points(s, 5, 8)) {
    const auto d = compute_geometry<4>(s, t);
    for (const auto& R : d.curv.R) EXPECT_LT(max_abs(R), 1e-12);
    EXPECT_NEAR(h_norm2(d), h2, 1e-12);
    EXPECT_GT(iio_max(d), 0.01);
  }
}

TEST(Riemannian, CurvatureSymmetries) {
  auto s = trig_torus();
  s.scale = tilted(s.n);
  for (const auto& t : random_chart_points(s, 4, 9)) {
    const auto d = compute_geometry<4>(s, t);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          EXPECT_LT(max_abs(d.curv.Gamma[k * 16 + i * 4 + j] - d.curv.Gamma[k * 16 + j * 4 + i]), 1e-12);
          for (int l = 0; l < 4; ++l) {
            EXPECT_LT(max_abs(d.curv.R[riem_index(k, l, i, j)] + d.curv.R[riem_index(k, l, j, i)]), 1e-10);
            const double bianchi = d.curv.R[riem_index(k, l, i, j)].value() +
                                   d.curv.R[riem_index(k, i, j, l)].value() +
                                   d.curv.R[riem_index(k, j, l, i)].value();
            EXPECT_NEAR(bianchi, 0.0, 1e-10);
          }
        }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_LT(max_abs(d.curv.Ric[i * 4 + j] - d.curv.Ric[j * 4 + i]), 1e-10);
  }
}

TEST(Riemannian, TraceFreePartIsTraceFree) {
  auto s = trig_torus();
  s.scale = tilted(s.n);
  for (const auto& t : random_chart_points(s, 4, 10)) {
    const auto d = compute_geometry<4>(s, t);
    for (int a = 0; a < s.n; ++a) {
      double tr = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) tr += d.ff.ginv(i, j).value() * d.ex.IIo[sym_index(i, j) * s.n + a].value();
      EXPECT_NEAR(tr, 0.0, 1e-12);
    }
  }
}

TEST(Riemannian, SecondFundamentalFormIsNormal) {
  const auto s = trig_torus();
  for (const auto& t : random_chart_points(s, 4, 11)) {
    const auto d = compute_geometry<4>(s, t);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          double dot = 0.0;
          for (int a = 0; a < s.n; ++a) dot += d.ex.II[sym_index(i, j) * s.n + a].value() * d.ff.Pi(a, k).value();
          EXPECT_NEAR(dot, 0.0, 1e-12);
        }
  }
}

TEST(Riemannian, UmbilicityIsScaleIndependent) {
  auto s = ImmersionSpec::round_sphere(1.0, 6);
  s.scale = tilted(6);
  for (const auto& t : random_chart_points(s, 5, 12)) EXPECT_LT(iio_max(compute_geometry<4>(s, t)), 1e-10);
  s.scale = AmbientScale::cosine({CosineTerm{0.05, {1, 0, 0, 0, 0, 0}, 0.0}});
  for (const auto& t : random_chart_points(s, 5, 13)) EXPECT_LT(iio_max(compute_geometry<4>(s, t)), 1e-10);
}

TEST(Riemannian, ContractedCodazzi) {
  auto s = trig_torus();
  s.scale = tilted(s.n);
  for (const auto& t : random_chart_points(s, 4, 14)) EXPECT_LT(contracted_codazzi_residual(compute_geometry<5>(s, t)), 1e-8);
}

// ---------------------------------------------------------------------------
// Tractors

TEST(Tractor, MetricHasLorentzianSignature) {
  const Jet<2> G(1.7);
  const auto h = tractor_metric(G, 6);
  const auto hi = tractor_metric_inverse(Jet<2>(1.0 / 1.7), 6);
  const auto id = matmul(h, hi);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(id(i, j).value(), i == j ? 1.0 : 0.0, 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(values(h)));
  int neg = 0;
  for (int i = 0; i < 8; ++i) neg += es.eigenvalues()[i] < 0.0;
  EXPECT_EQ(neg, 1);
}

TEST(Tractor, ProjectorsAreComplementaryIdempotents) {
  auto s = trig_torus();
  s.scale = tilted(s.n);
  for (const auto& t : random_chart_points(s, 4, 15)) {
    const auto d = compute_geometry<4>(s, t);
    const auto a = tractor_projectors<2>(d);
    const auto b = tractor_projectors_from_injector<2>(d);
    EXPECT_LT(max_abs(a.N - b.N), 1e-11);
    EXPECT_LT(max_abs(matmul(a.N, a.N) - a.N), 1e-11);
    EXPECT_LT(max_abs(matmul(a.Pi, a.N)), 1e-11);
    double tr = 0.0;
    for (int i = 0; i < s.n + 2; ++i) tr += a.N(i, i).value();
    EXPECT_NEAR(tr, s.n - 4, 1e-11);
    // N is self-adjoint for the tractor metric
    const auto adj = tractor_adjoint(a.N, truncate<2>(d.ff.G), truncate<2>(d.ff.Ginv));
    EXPECT_LT(max_abs(adj - a.N), 1e-11);
  }
}

TEST(Tractor, SecondFundamentalFormRoutesAgree) {
  for (const auto& scale : {AmbientScale::zero(), tilted(9)}) {
    auto s = trig_torus();
    s.scale = scale;
    for (const auto& t : random_chart_points(s, 6, 16))
      EXPECT_LT(sff_route_difference(compute_geometry<5>(s, t)), 1e-9) << format_point(t);
  }
}

TEST(Tractor, SphereHasVanishingTractorSff) {
  auto s = ImmersionSpec::round_sphere(1.5, 6);
  s.scale = tilted(6);
  for (const auto& t : random_chart_points(s, 4, 17)) {
    const auto L = tractor_sff_split(compute_geometry<5>(s, t));
    for (const auto& Lj : L) EXPECT_LT(max_abs(Lj), 1e-9);
  }
}

TEST(Tractor, TorusHasNonzeroTractorSff) {
  const auto s = trig_torus();
  const auto L = tractor_sff_split(compute_geometry<5>(s, {0.1, 0.2, 0.3, 0.4}));
  double m = 0.0;
  for (const auto& Lj : L) m = std::max(m, max_abs(Lj));
  EXPECT_GT(m, 0.1);
}

TEST(Tractor, PointwiseBatteryPasses) {
  for (const auto& scale : {AmbientScale::zero(), tilted(9)}) {
    auto s = trig_torus();
    s.scale = scale;
    BatteryOptions opt;
    opt.relations = false;
    const auto r = pointwise_battery(s, random_chart_points(s, 5, 18), opt);
    EXPECT_EQ(r.nodes, 5u);
    EXPECT_LT(r.codazzi.value, 1e-8);
    EXPECT_LT(r.gauss.value, 1e-8);
    EXPECT_LT(r.ricci.value, 1e-8);
    EXPECT_LT(r.normal_projector.value, 1e-9);
    EXPECT_LT(r.checked_projector.value, 1e-9);
    EXPECT_LT(r.fialkow.value, 1e-8);
    EXPECT_LT(r.contorsion.value, 1e-8);
  }
}

TEST(Tractor, FlippedSchoutenIsDetected) {
  auto s = trig_torus();
  s.scale = tilted(9);
  BatteryOptions opt;
  opt.flip_schouten = true;
  opt.relations = false;
  const auto r = pointwise_battery(s, random_chart_points(s, 3, 19), opt);
  EXPECT_GT(std::max({r.codazzi.value, r.gauss.value, r.fialkow.value}), 1e-4);
}

TEST(Tractor, WorstKeepsNaN) {
  Worst w;
  w.add(1.0, {});
  w.add(std::nan(""), {1, 2, 3, 4});
  w.add(5.0, {});
  EXPECT_TRUE(std::isnan(w.value));
  EXPECT_EQ(w.theta[3], 4.0);
}
