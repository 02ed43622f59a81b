#pragma once

// Pointwise Riemannian data of an immersion in the working scale
// exp(2 omega) * flat, evaluated in jet arithmetic at one chart point.
//
// Orders, for an immersion jet of order K:
//   x, omega, Upsilon, ambient Schouten           K
//   Pi, induced metric and inverse                 K-1
//   intrinsic Christoffels, II, H, trace-free II   K-2
//   Riemann, Ricci, Schouten p, j, Weyl            K-3

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"
#include "cwe/scale.hpp"
#include "cwe/surfaces.hpp"

namespace cwe {

inline constexpr int sym_index(int i, int j) { return i * 4 + j; }
inline constexpr int riem_index(int k, int l, int i, int j) { return ((k * 4 + l) * 4 + i) * 4 + j; }

template <int K>
struct FirstFundamental {
  Jet<K> G;              // exp(2 omega)
  Jet<K> Ginv;           // exp(-2 omega)
  JetMatrix<K - 1> Pi;   // n x 4, Pi(a, i) = d_i x^a
  JetMatrix<K - 1> flat_gram;  // 4 x 4, Pi_i . Pi_j in the flat metric
  JetMatrix<K - 1> g;    // 4 x 4
  JetMatrix<K - 1> ginv;
  double sqrt_det = 0.0;
  double cond = 0.0;
};

template <int K>
struct Extrinsic {
  std::vector<Jet<K - 2>> A;    // [sym_index(i,j) * n + a], ambient covariant d_i Pi_j
  std::vector<Jet<K - 2>> II;   // [sym_index(i,j) * n + a]
  std::vector<Jet<K - 2>> H;    // n
  std::vector<Jet<K - 2>> IIo;  // [sym_index(i,j) * n + a]
};

template <int K>
struct IntrinsicCurv {
  std::array<Jet<K - 2>, 64> Gamma;  // Gamma^k_ij at [k*16 + i*4 + j]
  std::array<Jet<K - 3>, 256> R;     // R^k_{l i j} at riem_index(k,l,i,j)
  std::array<Jet<K - 3>, 16> Ric;    // r_jl
  Jet<K - 3> scalar;
  std::array<Jet<K - 3>, 16> p;      // intrinsic Schouten p_jk
  Jet<K - 3> jtrace;                 // g^{jk} p_jk
};

struct GeometryOptions {
  bool flip_schouten = false;  // debug mutation: negate the ambient Schouten tensor
  bool check_regularity = true;
};

class geometry_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything known about the immersion at one chart point.
template <int K>
struct GeometryPointData {
  static_assert(K >= 3, "geometry needs jet order >= 3");
  static constexpr int order = K;
  int n = 0;
  std::array<double, 4> theta{};
  std::vector<Jet<K>> x;
  ScaleJets<K> scale;
  JetMatrix<K - 2> P;  // ambient Schouten P_ab of the working scale, along the immersion
  FirstFundamental<K> ff;
  IntrinsicCurv<K> curv;
  Extrinsic<K> ex;
};

/// P_ab = -d_a Upsilon_b + Upsilon_a Upsilon_b - |Upsilon|^2 delta_ab / 2 at order M.
template <int M, int K>
JetMatrix<M> ambient_schouten(const AmbientScale& scale, const std::vector<Jet<K>>& x, const ScaleJets<K>& s,
                              bool flip = false) {
  const int n = static_cast<int>(x.size());
  JetMatrix<M> P = scale_hessian<M>(scale, x);
  const std::vector<Jet<M>> ups = truncate<M>(s.ups);
  Jet<M> u2;
  for (int a = 0; a < n; ++a)
    if (!is_zero(ups[a])) u2.add_product(ups[a], ups[a]);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      Jet<M> v = -P(a, b);
      if (!is_zero(ups[a]) && !is_zero(ups[b])) v.add_product(ups[a], ups[b]);
      if (a == b) v -= 0.5 * u2;
      if (flip) v = -v;
      P(a, b) = v;
      P(b, a) = v;
    }
  return P;
}

template <int K>
void first_fundamental(const std::vector<Jet<K>>& x, const ScaleJets<K>& s, FirstFundamental<K>& ff) {
  const int n = static_cast<int>(x.size());
  ff.G = exp(2.0 * s.omega);
  ff.Ginv = exp(-2.0 * s.omega);
  ff.Pi = JetMatrix<K - 1>(n, 4);
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < 4; ++i) ff.Pi(a, i) = derivative(x[a], i);
  ff.flat_gram = JetMatrix<K - 1>(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      Jet<K - 1> v;
      for (int a = 0; a < n; ++a) v.add_product(ff.Pi(a, i), ff.Pi(a, j));
      ff.flat_gram(i, j) = v;
      ff.flat_gram(j, i) = v;
    }
  const Jet<K - 1> G = truncate<K - 1>(ff.G);
  ff.g = JetMatrix<K - 1>(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      ff.g(i, j) = G * ff.flat_gram(i, j);
      ff.g(j, i) = ff.g(i, j);
    }
  const Eigen::Matrix4d g0 = to_eigen(ff.g);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(g0, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0), lmax = es.eigenvalues()(3);
  ff.cond = lmin > 0 ? lmax / lmin : INFINITY;
  if (!(lmin > 0.0) || ff.cond > 1e10)
    throw geometry_error("induced metric singular or ill-conditioned (condition number " + std::to_string(ff.cond) +
                         ")");
  ff.ginv = inverse(ff.g);
  ff.sqrt_det = std::sqrt(g0.determinant());
}

template <int K>
FirstFundamental<K> first_fundamental(const std::vector<Jet<K>>& x, const ScaleJets<K>& s) {
  FirstFundamental<K> ff;
  first_fundamental(x, s, ff);
  return ff;
}

/// Levi-Civita Christoffels Gamma^k_ij of the induced metric, order K-2.
template <int K>
void christoffel(const FirstFundamental<K>& ff, std::array<Jet<K - 2>, 64>& Gamma) {
  constexpr int M = K - 2;
  std::array<JetMatrix<M>, 4> dg;
  for (int i = 0; i < 4; ++i) dg[i] = derivative(ff.g, i);
  const JetMatrix<M> ginv = truncate<M>(ff.ginv);
  std::array<Jet<M>, 64> low;  // Gamma_{l,ij}
  for (int l = 0; l < 4; ++l)
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        const Jet<M> v = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        low[l * 16 + i * 4 + j] = v;
        low[l * 16 + j * 4 + i] = v;
      }
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        Jet<M> v;
        for (int l = 0; l < 4; ++l) v.add_product(ginv(k, l), low[l * 16 + i * 4 + j]);
        Gamma[k * 16 + i * 4 + j] = v;
        Gamma[k * 16 + j * 4 + i] = v;
      }
}

/// Second fundamental form from the Gauss formula, II = A - Pi Gamma, with
/// its trace decomposition.
template <int K>
void extrinsic(const std::vector<Jet<K>>& x, const ScaleJets<K>& s, const FirstFundamental<K>& ff,
               const std::array<Jet<K - 2>, 64>& Gamma, Extrinsic<K>& ex) {
  constexpr int M = K - 2;
  const int n = static_cast<int>(x.size());
  const JetMatrix<M> Pi = truncate<M>(ff.Pi);
  const JetMatrix<M> ginv = truncate<M>(ff.ginv);
  const std::vector<Jet<M>> ups = truncate<M>(s.ups);

  bool flat = true;
  for (const auto& u : ups)
    if (!is_zero(u)) flat = false;

  std::array<Jet<M>, 4> uPi;  // Upsilon . Pi_i
  if (!flat)
    for (int i = 0; i < 4; ++i)
      for (int a = 0; a < n; ++a) uPi[i].add_product(ups[a], Pi(a, i));

  ex.A.resize(static_cast<std::size_t>(16 * n));
  ex.II.resize(static_cast<std::size_t>(16 * n));
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      const Jet<M> gram = truncate<M>(ff.flat_gram(i, j));
      for (int a = 0; a < n; ++a) {
        Jet<M> v = derivative(ff.Pi(a, j), i);
        if (!flat) {
          v.add_product(Pi(a, i), uPi[j]);
          v.add_product(Pi(a, j), uPi[i]);
          v.sub_product(gram, ups[a]);
        }
        ex.A[sym_index(i, j) * n + a] = v;
        ex.A[sym_index(j, i) * n + a] = v;
        for (int k = 0; k < 4; ++k) v.sub_product(Pi(a, k), Gamma[k * 16 + i * 4 + j]);
        ex.II[sym_index(i, j) * n + a] = v;
        ex.II[sym_index(j, i) * n + a] = v;
      }
    }

  ex.H.assign(static_cast<std::size_t>(n), Jet<M>());
  for (int a = 0; a < n; ++a) {
    Jet<M> v;
    for (int i = 0; i < 4; ++i) {
      v.add_product(ginv(i, i), ex.II[sym_index(i, i) * n + a]);
      for (int j = i + 1; j < 4; ++j) v.add_product(2.0 * ginv(i, j), ex.II[sym_index(i, j) * n + a]);
    }
    ex.H[a] = 0.25 * v;
  }
  ex.IIo.resize(static_cast<std::size_t>(16 * n));
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      const Jet<M> g = truncate<M>(ff.g(i, j));
      for (int a = 0; a < n; ++a) {
        Jet<M> v = ex.II[sym_index(i, j) * n + a];
        v.sub_product(g, ex.H[a]);
        ex.IIo[sym_index(i, j) * n + a] = v;
        ex.IIo[sym_index(j, i) * n + a] = v;
      }
    }
}

/// Curvature from the Christoffels with
/// R^k_{lij} = d_i Gamma^k_{jl} - d_j Gamma^k_{il} + Gamma^k_{im} Gamma^m_{jl} - Gamma^k_{jm} Gamma^m_{il}.
template <int K>
void intrinsic_curvature(const FirstFundamental<K>& ff, IntrinsicCurv<K>& cv) {
  constexpr int C = K - 3;
  std::array<Jet<C>, 64> Gc;
  for (int q = 0; q < 64; ++q) Gc[q] = truncate<C>(cv.Gamma[q]);
  auto gam = [&](int k, int i, int j) -> const Jet<C>& { return Gc[k * 16 + i * 4 + j]; };
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l)
      for (int i = 0; i < 4; ++i) {
        cv.R[riem_index(k, l, i, i)] = Jet<C>();
        for (int j = i + 1; j < 4; ++j) {
          Jet<C> v = derivative(cv.Gamma[k * 16 + j * 4 + l], i) - derivative(cv.Gamma[k * 16 + i * 4 + l], j);
          for (int m = 0; m < 4; ++m) {
            v.add_product(gam(k, i, m), gam(m, j, l));
            v.sub_product(gam(k, j, m), gam(m, i, l));
          }
          cv.R[riem_index(k, l, i, j)] = v;
          cv.R[riem_index(k, l, j, i)] = -v;
        }
      }
  const JetMatrix<C> g = truncate<C>(ff.g);
  const JetMatrix<C> gi = truncate<C>(ff.ginv);
  for (int j = 0; j < 4; ++j)
    for (int l = 0; l < 4; ++l) {
      Jet<C> v;
      for (int k = 0; k < 4; ++k) v += cv.R[riem_index(k, l, k, j)];
      cv.Ric[j * 4 + l] = v;
    }
  cv.scalar = Jet<C>();
  for (int j = 0; j < 4; ++j)
    for (int l = 0; l < 4; ++l) cv.scalar.add_product(gi(j, l), cv.Ric[j * 4 + l]);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) cv.p[j * 4 + k] = 0.5 * (cv.Ric[j * 4 + k] - (cv.scalar / 6.0) * g(j, k));
  cv.jtrace = Jet<C>();
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) cv.jtrace.add_product(gi(j, k), cv.p[j * 4 + k]);
}

/// r_{ijkl} = g_{km} R^m_{lij} at riem_index(i,j,k,l).
template <int K>
std::vector<Jet<K - 3>> lowered_riemann(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const JetMatrix<C> g = truncate<C>(d.ff.g);
  std::vector<Jet<C>> r(256);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          Jet<C> v;
          for (int m = 0; m < 4; ++m) v.add_product(g(k, m), d.curv.R[riem_index(m, l, i, j)]);
          r[riem_index(i, j, k, l)] = v;
          r[riem_index(j, i, k, l)] = -v;
        }
  return r;
}

/// Intrinsic Weyl tensor w_{ijkl} = r_{ijkl} - (g_ki p_jl - g_kj p_il + g_lj p_ik - g_li p_jk).
template <int K>
std::vector<Jet<K - 3>> weyl_tensor(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const JetMatrix<C> g = truncate<C>(d.ff.g);
  auto w = lowered_riemann(d);
  auto p = [&](int a, int b) -> const Jet<C>& { return d.curv.p[a * 4 + b]; };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          Jet<C>& v = w[riem_index(i, j, k, l)];
          v.sub_product(g(k, i), p(j, l));
          v.add_product(g(k, j), p(i, l));
          v.sub_product(g(l, j), p(i, k));
          v.add_product(g(l, i), p(j, k));
        }
  return w;
}

/// All pointwise data at a chart point.
template <int K>
GeometryPointData<K> compute_geometry(const ImmersionSpec& spec, const std::array<double, 4>& theta,
                                      const GeometryOptions& opt = {}) {
  GeometryPointData<K> d;
  d.n = spec.n;
  d.theta = theta;
  d.x = eval_jets<K>(spec, theta, opt.check_regularity);
  d.scale = eval_scale<K>(spec.scale, d.x);
  d.P = ambient_schouten<K - 2>(spec.scale, d.x, d.scale, opt.flip_schouten);
  first_fundamental(d.x, d.scale, d.ff);
  christoffel(d.ff, d.curv.Gamma);
  extrinsic(d.x, d.scale, d.ff, d.curv.Gamma, d.ex);
  intrinsic_curvature(d.ff, d.curv);
  return d;
}

// ---------------------------------------------------------------------------
// Derived pointwise quantities

/// Normal projector N^a_b = delta^a_b - Pi^a_i g^{ij} Pi^c_j G delta_cb.
template <int K>
JetMatrix<K - 1> normal_projector(const FirstFundamental<K>& ff) {
  constexpr int M = K - 1;
  const int n = ff.Pi.rows();
  const Jet<M> G = truncate<M>(ff.G);
  JetMatrix<M> E(n, 4);  // G Pi g^{-1}
  for (int a = 0; a < n; ++a)
    for (int j = 0; j < 4; ++j) {
      Jet<M> v;
      for (int i = 0; i < 4; ++i) v.add_product(ff.Pi(a, i), ff.ginv(i, j));
      E(a, j) = G * v;
    }
  JetMatrix<M> N(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Jet<M> v(a == b ? 1.0 : 0.0);
      for (int j = 0; j < 4; ++j) v -= E(a, j) * ff.Pi(b, j);
      N(a, b) = v;
    }
  return N;
}

/// Normal part of an ambient vector field: v - Pi g^{-1} G (Pi . v).
template <int M, int K>
std::vector<Jet<M>> normal_part(const GeometryPointData<K>& d, const std::vector<Jet<M>>& v) {
  static_assert(M <= K - 1);
  const int n = d.n;
  std::array<Jet<M>, 4> t, c;
  for (int l = 0; l < 4; ++l) {
    for (int a = 0; a < n; ++a) t[l] += truncate<M>(d.ff.Pi(a, l)) * v[a];
    t[l] = truncate<M>(d.ff.G) * t[l];
  }
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) c[k] += truncate<M>(d.ff.ginv(k, l)) * t[l];
  std::vector<Jet<M>> r = v;
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < 4; ++k) r[a] -= truncate<M>(d.ff.Pi(a, k)) * c[k];
  return r;
}

/// Ambient Levi-Civita derivative of an ambient vector field along Pi_j:
/// d_j v + Gamma-hat(Pi_j, v).
template <int M, int K>
std::array<std::vector<Jet<M - 1>>, 4> ambient_D(const GeometryPointData<K>& d, const std::vector<Jet<M>>& v) {
  constexpr int R = M - 1;
  static_assert(R <= K - 1);
  const int n = d.n;
  std::array<std::vector<Jet<R>>, 4> out;
  std::vector<Jet<R>> ups = truncate<R>(d.scale.ups);
  std::vector<Jet<R>> vr = truncate<R>(v);
  Jet<R> uv;
  for (int a = 0; a < n; ++a) uv += ups[a] * vr[a];
  for (int j = 0; j < 4; ++j) {
    std::vector<Jet<R>> w(static_cast<std::size_t>(n));
    Jet<R> uP, Pv;
    for (int a = 0; a < n; ++a) {
      const Jet<R> pa = truncate<R>(d.ff.Pi(a, j));
      uP += ups[a] * pa;
      Pv += pa * vr[a];
    }
    for (int a = 0; a < n; ++a) {
      Jet<R> x = derivative(v[a], j);
      x += truncate<R>(d.ff.Pi(a, j)) * uv;
      x += vr[a] * uP;
      x -= Pv * ups[a];
      w[a] = x;
    }
    out[j] = std::move(w);
  }
  return out;
}

/// Normal connection D_j on a normal-valued field.
template <int M, int K>
std::array<std::vector<Jet<M - 1>>, 4> normal_D(const GeometryPointData<K>& d, const std::vector<Jet<M>>& v) {
  auto w = ambient_D<M>(d, v);
  for (int j = 0; j < 4; ++j) w[j] = normal_part<M - 1>(d, w[j]);
  return w;
}

/// D_j H^a at order K-3.
template <int K>
std::array<std::vector<Jet<K - 3>>, 4> DH(const GeometryPointData<K>& d) {
  return normal_D<K - 2>(d, d.ex.H);
}

/// N(Pi_j^c P_c^d), the ambient Schouten term of the tractor second
/// fundamental form, at order K-3 (or any lower order M).
template <int M, int K>
std::array<std::vector<Jet<M>>, 4> schouten_normal_term(const GeometryPointData<K>& d) {
  const int n = d.n;
  std::array<std::vector<Jet<M>>, 4> out;
  const Jet<M> Gi = truncate<M>(d.ff.Ginv);
  for (int j = 0; j < 4; ++j) {
    std::vector<Jet<M>> v(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
      Jet<M> s;
      for (int a = 0; a < n; ++a)
        if (!is_zero(d.P(a, b))) s += truncate<M>(d.ff.Pi(a, j)) * truncate<M>(d.P(a, b));
      v[b] = Gi * s;
    }
    out[j] = normal_part<M>(d, v);
  }
  return out;
}

/// D_i IIo_jk^a (normal connection plus intrinsic Christoffels), order K-3,
/// stored at [(i*16 + j*4 + k) * n + a].
template <int K>
std::vector<Jet<K - 3>> D_IIo(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const int n = d.n;
  std::vector<Jet<C>> out(static_cast<std::size_t>(64 * n));
  for (int j = 0; j < 4; ++j)
    for (int k = j; k < 4; ++k) {
      std::vector<Jet<K - 2>> v(d.ex.IIo.begin() + sym_index(j, k) * n, d.ex.IIo.begin() + (sym_index(j, k) + 1) * n);
      const auto w = normal_D<K - 2>(d, v);
      for (int i = 0; i < 4; ++i)
        for (int a = 0; a < n; ++a) {
          out[(i * 16 + j * 4 + k) * n + a] = w[i][a];
          out[(i * 16 + k * 4 + j) * n + a] = w[i][a];
        }
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int a = 0; a < n; ++a) {
          Jet<C> s;
          for (int m = 0; m < 4; ++m) {
            s += truncate<C>(d.curv.Gamma[m * 16 + i * 4 + j]) * truncate<C>(d.ex.IIo[sym_index(m, k) * n + a]);
            s += truncate<C>(d.curv.Gamma[m * 16 + i * 4 + k]) * truncate<C>(d.ex.IIo[sym_index(j, m) * n + a]);
          }
          out[(i * 16 + j * 4 + k) * n + a] -= s;
        }
  return out;
}

/// Residual of D^k IIo_jk - 3 (D_j H - N(Pi_j P)) (conformally flat ambient),
/// max over components and all jet coefficients.
template <int K>
double contracted_codazzi_residual(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const int n = d.n;
  const auto dII = D_IIo(d);
  const auto dh = DH(d);
  const auto sp = schouten_normal_term<C>(d);
  double worst = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < n; ++a) {
      Jet<C> div;
      for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) div += truncate<C>(d.ff.ginv(i, k)) * dII[(i * 16 + j * 4 + k) * n + a];
      const Jet<C> r = div - 3.0 * (dh[j][a] - sp[j][a]);
      worst = std::max(worst, max_abs(r));
    }
  return worst;
}

/// Ambient inner product G * (u . v) of order-0 values.
template <int K>
double ambient_dot0(const GeometryPointData<K>& d, const std::vector<Jet<K - 2>>& u, const std::vector<Jet<K - 2>>& v) {
  double s = 0.0;
  for (int a = 0; a < d.n; ++a) s += u[a].value() * v[a].value();
  return d.ff.G.value() * s;
}

}  // namespace cwe
