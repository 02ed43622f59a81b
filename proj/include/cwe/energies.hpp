#pragma once

// Q1-operators, per-node energy densities and their integrals: the Q-energy
// (two forms), the GJMS energy, the quartic correction, the Graham-Reichert
// energy and the Euler density. The per-node path works in a parallel
// tractor frame, where the ambient tractor connection is plain
// differentiation and the tractor metric is constant.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/riemannian.hpp"
#include "cwe/surfaces.hpp"
#include "cwe/tractor.hpp"

namespace cwe {

// ---------------------------------------------------------------------------
// Q1 on mixed fields

/// Levi-Civita (plus ambient/normal) derivative of a field without tractor indices.
template <int M, int K>
MixedField<M - 1> levi_civita_derivative(const MixedField<M>& f, const GeometryPointData<K>& d) {
  return covariant_derivative(f, d, std::array<JetMatrix<M - 1>, 4>{});
}

/// (Q1 u)_j = -D_j D^k u_k - 4 p_j^k u_k + 2 jtrace u_j for a 1-form u whose
/// first index is tangent_lower; D is the supplied derivative.
template <int M, int K, class Deriv>
MixedField<M - 2> q1_apply(const MixedField<M>& u, const GeometryPointData<K>& d, Deriv&& D) {
  static_assert(M >= 2, "Q1 needs two spare jet orders");
  static_assert(M - 2 <= K - 3, "Q1 needs the intrinsic Schouten tensor at the output order");
  if (u.valence.empty() || u.valence[0] != IndexKind::tangent_lower)
    throw std::invalid_argument("Q1 acts on fields whose first index is a tangent 1-form index");
  constexpr int R1 = M - 1, R2 = M - 2;
  const std::size_t rest = u.data.size() / 4;
  const MixedField<R1> du = D(u);
  const JetMatrix<R1> gi1 = truncate<R1>(d.ff.ginv);
  std::vector<IndexKind> rv(u.valence.begin() + 1, u.valence.end());
  int frame_dim = 0;
  for (std::size_t s = 0; s < u.valence.size(); ++s)
    if (u.valence[s] == IndexKind::frame) frame_dim = u.dims[s];
  MixedField<R1> div(rv, d.n, frame_dim);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k)
      for (std::size_t p = 0; p < rest; ++p)
        div.data[p].add_product(gi1(i, k), du.data[(static_cast<std::size_t>(i) * 4 + k) * rest + p]);
  MixedField<R2> out;
  if (rv.empty()) {
    // scalar divergence: the derivative is the plain gradient
    out = MixedField<R2>({IndexKind::tangent_lower}, d.n);
    for (int j = 0; j < 4; ++j) out.data[j] = -derivative(div.data[0], j);
  } else {
    out = D(div);
    for (auto& v : out.data) v = -v;
  }
  const JetMatrix<R2> gi2 = truncate<R2>(d.ff.ginv);
  const Jet<R2> jt = truncate<R2>(d.curv.jtrace);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      Jet<R2> pjk;  // p_j^k
      for (int l = 0; l < 4; ++l) pjk.add_product(truncate<R2>(d.curv.p[j * 4 + l]), gi2(l, k));
      if (j == k) pjk -= 0.5 * jt;
      for (std::size_t p = 0; p < rest; ++p)
        out.data[static_cast<std::size_t>(j) * rest + p].sub_product(
            4.0 * pjk, truncate<R2>(u.data[static_cast<std::size_t>(k) * rest + p]));
    }
  return out;
}

/// Q1 with the checked tractor connection on tractor indices.
template <int M, int K>
MixedField<M - 2> q1_checked(const MixedField<M>& u, const GeometryPointData<K>& d) {
  return q1_apply(u, d, [&](const auto& f) { return checked_derivative(f, d); });
}

/// Q1 coupled to the ambient tractor connection.
template <int M, int K>
MixedField<M - 2> q1_ambient(const MixedField<M>& u, const GeometryPointData<K>& d) {
  return q1_apply(u, d, [&](const auto& f) { return tractor_connection(f, d); });
}

/// Q1 on scalar-valued 1-forms.
template <int M, int K>
MixedField<M - 2> q1_scalar(const MixedField<M>& u, const GeometryPointData<K>& d) {
  return q1_apply(u, d, [&](const auto& f) { return levi_civita_derivative(f, d); });
}

// ---------------------------------------------------------------------------
// Order-zero pointwise invariants

/// Symmetric 4x4 tensors and normal vectors at a point, as plain numbers.
struct PointValues {
  int n = 0;
  double G = 1.0;
  double ginv[4][4]{}, g[4][4]{};
  std::vector<double> iio;  // [sym_index(i,j) * n + a]
  std::vector<double> H;
  double p[4][4]{};
  double jtrace = 0.0;
};

template <int K>
PointValues point_values(const GeometryPointData<K>& d) {
  PointValues v;
  v.n = d.n;
  v.G = d.ff.G.value();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      v.g[i][j] = d.ff.g(i, j).value();
      v.ginv[i][j] = d.ff.ginv(i, j).value();
      v.p[i][j] = d.curv.p[i * 4 + j].value();
    }
  v.jtrace = d.curv.jtrace.value();
  v.iio.resize(d.ex.IIo.size());
  for (std::size_t q = 0; q < v.iio.size(); ++q) v.iio[q] = d.ex.IIo[q].value();
  v.H.resize(d.ex.H.size());
  for (std::size_t q = 0; q < v.H.size(); ++q) v.H[q] = d.ex.H[q].value();
  return v;
}

/// |X|^2 = X_ij X_kl g^{ik} g^{jl} for a 4x4 array.
inline double norm2_sym(const double x[4][4], const double gi[4][4]) {
  double up[4][4]{};
  for (int i = 0; i < 4; ++i)
    for (int l = 0; l < 4; ++l)
      for (int j = 0; j < 4; ++j) up[i][l] += x[i][j] * gi[j][l];
  double s = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      double t = 0.0;
      for (int l = 0; l < 4; ++l) t += up[i][l] * x[k][l];
      s += gi[i][k] * t;
    }
  return s;
}

inline double trace_sym(const double x[4][4], const double gi[4][4]) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) s += gi[i][j] * x[i][j];
  return s;
}

/// The two quartic contractions of the trace-free second fundamental form:
/// A = T^a_d T^d_a with T^a_d = IIo_jb^a IIo^{jb}_d, and B = S_lm S^lm with
/// S_lm = IIo_jl . IIo^j_m. Returns {A, B}.
inline std::array<double, 2> quartic_terms(const PointValues& v) {
  const int n = v.n;
  auto iio = [&](int i, int j, int a) { return v.iio[static_cast<std::size_t>(sym_index(i, j) * n + a)]; };
  // IIo with both tangent indices raised
  std::vector<double> up(static_cast<std::size_t>(16 * n), 0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
          for (int l = 0; l < 4; ++l) s += v.ginv[i][k] * v.ginv[j][l] * iio(k, l, a);
        up[static_cast<std::size_t>((i * 4 + j) * n + a)] = s;
      }
  std::vector<double> T(static_cast<std::size_t>(n * n), 0.0);
  for (int a = 0; a < n; ++a)
    for (int e = 0; e < n; ++e) {
      double s = 0.0;
      for (int ij = 0; ij < 16; ++ij) s += up[static_cast<std::size_t>(ij * n + a)] * iio(ij / 4, ij % 4, e);
      T[static_cast<std::size_t>(a * n + e)] = v.G * s;
    }
  double A = 0.0;
  for (int a = 0; a < n; ++a)
    for (int e = 0; e < n; ++e) A += T[static_cast<std::size_t>(a * n + e)] * T[static_cast<std::size_t>(e * n + a)];
  // S_l^m = IIo_jl . IIo^{jm}
  double S[4][4]{};
  for (int l = 0; l < 4; ++l)
    for (int m = 0; m < 4; ++m) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          double dot = 0.0;
          for (int a = 0; a < n; ++a) dot += iio(j, l, a) * iio(k, m, a);
          s += v.ginv[j][k] * dot;
        }
      S[l][m] = v.G * s;
    }
  return {A, norm2_sym(S, v.ginv)};
}

/// Schouten-Fialkow tensor at a point.
template <int K>
void schouten_fialkow_value(const GeometryPointData<K>& d, const PointValues& v, double out[4][4]) {
  const int n = d.n;
  std::vector<double> pi(static_cast<std::size_t>(n * 4));
  for (int a = 0; a < n; ++a)
    for (int j = 0; j < 4; ++j) pi[static_cast<std::size_t>(a * 4 + j)] = d.ff.Pi(a, j).value();
  std::vector<double> P(static_cast<std::size_t>(n * n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) P[static_cast<std::size_t>(a * n + b)] = d.P(a, b).value();
  double h2 = 0.0;
  for (int a = 0; a < n; ++a) h2 += v.H[a] * v.H[a];
  h2 *= v.G;
  for (int j = 0; j < 4; ++j)
    for (int k = j; k < 4; ++k) {
      double s = 0.0;
      for (int a = 0; a < n; ++a) {
        double row = 0.0;
        for (int b = 0; b < n; ++b) row += P[static_cast<std::size_t>(a * n + b)] * pi[static_cast<std::size_t>(b * 4 + k)];
        s += pi[static_cast<std::size_t>(a * 4 + j)] * row;
        s += v.G * v.H[a] * v.iio[static_cast<std::size_t>(sym_index(j, k) * n + a)];
      }
      s += 0.5 * h2 * v.g[j][k];
      out[j][k] = out[k][j] = s;
    }
}

/// |w|^2 of the intrinsic Weyl tensor at a point.
template <int K>
double weyl_norm2_value(const GeometryPointData<K>& d, const PointValues& v) {
  double w[4][4][4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double r = 0.0;
          for (int m = 0; m < 4; ++m) r += v.g[k][m] * d.curv.R[riem_index(m, l, i, j)].value();
          r -= v.g[k][i] * v.p[j][l] - v.g[k][j] * v.p[i][l] + v.g[l][j] * v.p[i][k] - v.g[l][i] * v.p[j][k];
          w[i][j][k][l] = r;
        }
  // raise all four indices in turn
  double a[4][4][4][4], b[4][4][4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int m = 0; m < 4; ++m) s += v.ginv[l][m] * w[i][j][k][m];
          a[i][j][k][l] = s;
        }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int m = 0; m < 4; ++m) s += v.ginv[k][m] * a[i][j][m][l];
          b[i][j][k][l] = s;
        }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int m = 0; m < 4; ++m) s += v.ginv[j][m] * b[i][m][k][l];
          a[i][j][k][l] = s;
        }
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int m = 0; m < 4; ++m) s += v.ginv[i][m] * a[m][j][k][l];
          total += s * w[i][j][k][l];
        }
  return total;
}

/// g^{ik} D_i IIo_jk^a at a point, [j * n + a].
template <int K>
std::vector<double> iio_divergence_value(const GeometryPointData<K>& d, const PointValues& v) {
  const int n = d.n;
  std::vector<double> out(static_cast<std::size_t>(4 * n), 0.0);
  std::vector<double> ups(static_cast<std::size_t>(n)), pi(static_cast<std::size_t>(n * 4));
  for (int a = 0; a < n; ++a) {
    ups[a] = d.scale.ups[a].value();
    for (int j = 0; j < 4; ++j) pi[static_cast<std::size_t>(a * 4 + j)] = d.ff.Pi(a, j).value();
  }
  double gam[4][4][4];
  for (int m = 0; m < 4; ++m)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) gam[m][i][j] = d.curv.Gamma[m * 16 + i * 4 + j].value();
  auto iio = [&](int i, int j, int a) { return v.iio[static_cast<std::size_t>(sym_index(i, j) * n + a)]; };
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int j = 0; j < 4; ++j) {
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) {
        const double gik = v.ginv[i][k];
        if (gik == 0.0) continue;
        double up = 0.0, pv = 0.0, uv = 0.0;
        for (int a = 0; a < n; ++a) {
          up += ups[a] * pi[static_cast<std::size_t>(a * 4 + i)];
          pv += pi[static_cast<std::size_t>(a * 4 + i)] * iio(j, k, a);
          uv += ups[a] * iio(j, k, a);
        }
        for (int a = 0; a < n; ++a) {
          double x = derivative(d.ex.IIo[static_cast<std::size_t>(sym_index(j, k) * n + a)], i).value();
          x += pi[static_cast<std::size_t>(a * 4 + i)] * uv + iio(j, k, a) * up - pv * ups[a];
          for (int m = 0; m < 4; ++m) x -= gam[m][i][j] * iio(m, k, a) + gam[m][i][k] * iio(j, m, a);
          w[a] += gik * x;
        }
      }
    // normal part: the tangential component of D IIo is algebraic in IIo and drops out
    double t[4]{}, c[4]{};
    for (int l = 0; l < 4; ++l) {
      for (int a = 0; a < n; ++a) t[l] += pi[static_cast<std::size_t>(a * 4 + l)] * w[a];
      t[l] *= v.G;
    }
    for (int k = 0; k < 4; ++k)
      for (int l = 0; l < 4; ++l) c[k] += v.ginv[k][l] * t[l];
    for (int a = 0; a < n; ++a) {
      double x = w[a];
      for (int k = 0; k < 4; ++k) x -= pi[static_cast<std::size_t>(a * 4 + k)] * c[k];
      out[static_cast<std::size_t>(j * n + a)] = x;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tractor second fundamental form in a parallel frame

/// L in the parallel frame of `parallel_frame`, assembled from the split
/// factors: columns are mapped by U^{-1} and rows by U.
template <int K>
SffArray<K - 3> parallel_sff(const GeometryPointData<K>& d, const SffFactors<K - 3>& f) {
  constexpr int C = K - 3;
  const int n = d.n;
  const int N = n + 2;
  const std::vector<Jet<C>> x = truncate<C>(d.x);
  const std::vector<Jet<C>> ups = truncate<C>(d.scale.ups);
  const Jet<C> om = truncate<C>(d.scale.omega);
  const Jet<C> ew = exp(om), emw = exp(-om);
  Jet<C> x2;
  for (int a = 0; a < n; ++a) x2.add_product(x[a], x[a]);
  const Jet<C> hx2 = 0.5 * x2;

  // U^{-1} (0, w, s)
  auto column = [&](const std::vector<Jet<C>>& v) {
    std::vector<Jet<C>> r(static_cast<std::size_t>(N));
    Jet<C> rho = v[n + 1];
    std::vector<Jet<C>> mu(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      rho.add_product(ups[a], v[1 + a]);
      mu[a] = ew * v[1 + a];
    }
    rho = ew * rho;
    Jet<C> sig;
    for (int a = 0; a < n; ++a) {
      sig.sub_product(x[a], mu[a]);
      r[1 + a] = mu[a];
      r[1 + a].add_product(x[a], rho);
    }
    sig.sub_product(hx2, rho);
    r[0] = sig;
    r[n + 1] = rho;
    return r;
  };
  // (a, b, c) U_flat with (a, b, c) = row T
  auto flat_row = [&](const Jet<C>& a, const std::vector<Jet<C>>& b) {
    std::vector<Jet<C>> r(static_cast<std::size_t>(N));
    r[0] = a;
    Jet<C> last = -(a * hx2);
    for (int e = 0; e < n; ++e) {
      r[1 + e] = b[e];
      r[1 + e].add_product(a, x[e]);
      last.sub_product(b[e], x[e]);
    }
    r[n + 1] = last;
    return r;
  };

  std::array<std::vector<Jet<C>>, 4> rows;
  for (int k = 0; k < 4; ++k) {
    std::vector<Jet<C>> b(static_cast<std::size_t>(n));
    Jet<C> tu;
    for (int a = 0; a < n; ++a) {
      tu.add_product(f.tangent[k][1 + a], ups[a]);
      b[a] = emw * f.tangent[k][1 + a];
    }
    rows[k] = flat_row(emw * tu, b);
  }
  const std::vector<Jet<C>> xrow = flat_row(ew, std::vector<Jet<C>>(static_cast<std::size_t>(n)));

  std::array<std::vector<Jet<C>>, 16> ncol;
  for (int j = 0; j < 4; ++j)
    for (int k = j; k < 4; ++k) {
      ncol[j * 4 + k] = column(f.normal[j * 4 + k]);
      if (k != j) ncol[k * 4 + j] = ncol[j * 4 + k];
    }
  SffArray<C> L;
  for (int j = 0; j < 4; ++j) {
    const std::vector<Jet<C>> rcol = column(f.bottom[j]);
    L[j] = JetMatrix<C>(N, N);
    for (int b = 0; b < N; ++b)
      for (int a = 0; a < N; ++a) {
        Jet<C>& e = L[j](b, a);
        e.set_product(rcol[b], xrow[a]);
        for (int k = 0; k < 4; ++k) e.add_product(ncol[j * 4 + k][b], rows[k][a]);
      }
  }
  return L;
}

/// Adjoint for the constant metric of a parallel frame.
template <class T>
Matrix<T> eta_adjoint(const Matrix<T>& a) {
  const int N = a.rows();
  auto sw = [N](int i) { return i == 0 ? N - 1 : (i == N - 1 ? 0 : i); };
  Matrix<T> r(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) r(i, j) = a(sw(j), sw(i));
  return r;
}

/// tr(X^dagger Y) for the constant metric.
inline double eta_pair(const Matrix<double>& x, const Matrix<double>& y) {
  const int N = x.rows();
  auto sw = [N](int i) { return i == 0 ? N - 1 : (i == N - 1 ? 0 : i); };
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) s += x(sw(j), sw(i)) * y(j, i);
  return s;
}

inline double trace_of_product(const Matrix<double>& x, const Matrix<double>& y) {
  double s = 0.0;
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) s += x(i, j) * y(j, i);
  return s;
}

// ---------------------------------------------------------------------------
// Per-node densities

/// Energy densities at one node (per unit volume of the induced metric).
struct NodeDensities {
  double eq = 0.0;          // (div L)^2 - 4 p L L + 2 j L L, checked divergence
  double eq_raw = 0.0;      // L . Q1-checked L
  double gjms = 0.0;        // -2 (L^dagger . Q1 L + L . Q1 L)
  double quartic = 0.0;     // 4 (A + B)
  double quartic_tractor = 0.0;  // the same from tractor traces of L
  double gr = 0.0;          // Graham-Reichert density
  double euler = 0.0;       // e(Omega)
  double fialkow_term = 0.0;  // -4 |F|^2 + 4 f^2 - |w|^2 / 2
  double rel_checked = 0.0;   // L^dagger.Q1 L - L^dagger.Q1-checked L + A + B
  double rel_cross = 0.0;     // L.Q1 L + A + B
  double rel_checked_corrected = 0.0;  // L^dagger.Q1 L - L^dagger.Q1-checked L - (A + B)
  double rel_cross_corrected = 0.0;    // L.Q1 L - (A + B)
  bool has_q = false;       // eq available (order >= 4)
  bool has_second = false;  // eq_raw, gjms and relations available (order >= 5)
};

template <int K>
NodeDensities node_densities(const GeometryPointData<K>& d) {
  NodeDensities out;
  const PointValues v = point_values(d);
  const auto AB = quartic_terms(v);
  out.quartic = 4.0 * (AB[0] + AB[1]);

  double Pc[4][4];
  schouten_fialkow_value(d, v, Pc);
  double F[4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) F[i][j] = Pc[i][j] - v.p[i][j];
  const double Jc = trace_sym(Pc, v.ginv);
  const double f = trace_sym(F, v.ginv);
  const double w2 = weyl_norm2_value(d, v);
  const double p2 = norm2_sym(v.p, v.ginv);
  out.euler = -8.0 * (p2 - v.jtrace * v.jtrace) + w2;
  out.fialkow_term = -4.0 * norm2_sym(F, v.ginv) + 4.0 * f * f - 0.5 * w2;
  {
    const auto div = iio_divergence_value(d, v);
    double dd = 0.0;
    for (int j = 0; j < 4; ++j)
      for (int l = 0; l < 4; ++l) {
        double dot = 0.0;
        for (int a = 0; a < d.n; ++a) dot += div[static_cast<std::size_t>(j * d.n + a)] * div[static_cast<std::size_t>(l * d.n + a)];
        dd += v.ginv[j][l] * dot;
      }
    dd *= v.G;
    out.gr = (dd / 9.0 - norm2_sym(Pc, v.ginv) + Jc * Jc) / 8.0;
  }

  if constexpr (K >= 4) {
    constexpr int C = K - 3;
    constexpr int C1 = C - 1;
    const int N = d.n + 2;
    const SffArray<C> L = parallel_sff(d, tractor_sff_factors(d));
    const JetMatrix<C1> gi = truncate<C1>(d.ff.ginv);
    std::array<Jet<C1>, 4> gam;  // g^{ik} Gamma^m_ik
    for (int m = 0; m < 4; ++m)
      for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) gam[m].add_product(gi(i, k), truncate<C1>(d.curv.Gamma[m * 16 + i * 4 + k]));

    std::array<JetMatrix<C1>, 4> Lr, Lup, Ld;
    for (int i = 0; i < 4; ++i) Lr[i] = truncate<C1>(L[i]);
    JetMatrix<C1> div(N, N);
    for (std::size_t e = 0; e < div.data().size(); ++e) {
      Jet<C1>& acc = div.data()[e];
      for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) acc.add_product(gi(i, k), derivative(L[k].data()[e], i));
      for (int m = 0; m < 4; ++m) acc.sub_product(gam[m], Lr[m].data()[e]);
    }
    for (int i = 0; i < 4; ++i) {
      Lup[i] = JetMatrix<C1>(N, N);
      for (std::size_t e = 0; e < Lup[i].data().size(); ++e)
        for (int k = 0; k < 4; ++k) Lup[i].data()[e].add_product(gi(i, k), Lr[k].data()[e]);
      Ld[i] = eta_adjoint(Lr[i]);
    }
    // checked divergence: the -L part of the contorsion cancels by symmetry of g^{ik}
    JetMatrix<C1> divc = div;
    for (int i = 0; i < 4; ++i) divc += dense_commutator(Ld[i], Lup[i]);

    using Mat = Eigen::MatrixXd;
    auto to_mat = [N](const auto& m) {
      Mat r(N, N);
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) r(i, j) = m(i, j).value();
      return r;
    };
    auto adj = [N](const Mat& x) {
      Mat r = x.transpose();
      r.row(0).swap(r.row(N - 1));
      r.col(0).swap(r.col(N - 1));
      return r;
    };
    auto tr2 = [](const Mat& a, const Mat& b) { return a.cwiseProduct(b.transpose()).sum(); };

    std::array<Mat, 4> L0, L0d, M0;  // L_j, L_j^dagger, g^{jk} L_k
    for (int i = 0; i < 4; ++i) {
      L0[i] = to_mat(L[i]);
      L0d[i] = adj(L0[i]);
    }
    for (int j = 0; j < 4; ++j) {
      M0[j] = Mat::Zero(N, N);
      for (int k = 0; k < 4; ++k) M0[j] += v.ginv[j][k] * L0[k];
    }
    const Mat divc0 = to_mat(divc);
    double pk[4][4]{};  // p_j^k
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int a = 0; a < 4; ++a) pk[j][k] += v.p[j][a] * v.ginv[a][k];
    // sum_jk (-4 p^{jk} + 2 j g^{jk}) <L_j, L_k> = sum_j <L_j, R_j>, R_j = g^{jk}(-4 p_k^l + 2 j delta) L_l
    std::array<Mat, 4> R;
    for (int k = 0; k < 4; ++k) {
      R[k] = 2.0 * v.jtrace * L0[k];
      for (int l = 0; l < 4; ++l) R[k] -= 4.0 * pk[k][l] * L0[l];
    }
    double lower = 0.0;
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        if (v.ginv[j][k] != 0.0) lower += v.ginv[j][k] * tr2(L0d[j], R[k]);
    out.eq = tr2(adj(divc0), divc0) + lower;
    out.has_q = true;

    {
      // tractor form of the quartic pair
      Mat lam = Mat::Zero(N, N), lamd = Mat::Zero(N, N);
      for (int j = 0; j < 4; ++j) {
        lam.noalias() += M0[j] * L0d[j];
        lamd.noalias() += L0d[j] * M0[j];
      }
      out.quartic_tractor = 4.0 * (tr2(lam, lam) + tr2(lamd, lamd));
    }

    if constexpr (C >= 2) {
      // Q_k and Q-check_k at order zero: Q_k = R_k - d_k div, Q-check_k = R_k - check-nabla_k div-check
      double lq = 0.0, lqc = 0.0, cross = 0.0;
      for (int k = 0; k < 4; ++k) {
        const Mat dk = to_mat(derivative(div, k));
        Mat dck = to_mat(derivative(divc, k));
        const Mat Bk = L0d[k] - L0[k];
        dck.noalias() += Bk * divc0;
        dck.noalias() -= divc0 * Bk;
        const Mat Q = R[k] - dk;
        const Mat Qc = R[k] - dck;
        const Mat Md = adj(M0[k]);  // g^{kj} L_j^dagger
        lq += tr2(Md, Q);
        lqc += tr2(Md, Qc);
        cross += tr2(M0[k], Q);
      }
      const double q = AB[0] + AB[1];
      out.eq_raw = lqc;
      out.gjms = -2.0 * (lq + cross);
      out.rel_checked = lq - lqc + q;
      out.rel_cross = cross + q;
      out.rel_checked_corrected = lq - lqc - q;
      out.rel_cross_corrected = cross - q;
      out.has_second = true;
    }
  }
  return out;
}

/// Reference densities from the direct projector route and the generic
/// covariant derivative machinery; slow, for cross-checks.
template <int K>
NodeDensities node_densities_reference(const GeometryPointData<K>& d) {
  static_assert(K >= 5);
  NodeDensities out = node_densities(d);
  const Jet<0> G = truncate<0>(d.ff.G);
  const Jet<0> Gi = truncate<0>(d.ff.Ginv);
  const auto L = tractor_sff_direct(d);
  const MixedField<K - 3> u = endo_form_field(L);
  const auto Qc = q1_checked(u, d);
  const auto Q = q1_ambient(u, d);
  const int N = d.n + 2;
  auto block = [&](const auto& f, int j) {
    JetMatrix<0> m(N, N);
    for (int b = 0; b < N; ++b)
      for (int a = 0; a < N; ++a) m(b, a) = truncate<0>(f.at({j, b, a}));
    return m;
  };
  const auto dc = checked_derivative(u, d);
  JetMatrix<0> divc(N, N);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const double gik = d.ff.ginv(i, k).value();
      for (int b = 0; b < N; ++b)
        for (int a = 0; a < N; ++a) divc(b, a) += gik * truncate<0>(dc.at({i, k, b, a}));
    }
  double lq = 0.0, lqc = 0.0, cross = 0.0, pLL = 0.0, gLL = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      const double gjk = d.ff.ginv(j, k).value();
      const JetMatrix<0> Lj = truncate<0>(L[j]);
      const JetMatrix<0> Lk = truncate<0>(L[k]);
      lq += gjk * endo_pair(Lj, block(Q, k), G, Gi).value();
      lqc += gjk * endo_pair(Lj, block(Qc, k), G, Gi).value();
      cross += gjk * trace_product(Lj, block(Q, k)).value();
      double pjk = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          pjk += d.ff.ginv(j, a).value() * d.ff.ginv(k, b).value() * d.curv.p[a * 4 + b].value();
      const double ll = endo_pair(Lj, Lk, G, Gi).value();
      pLL += pjk * ll;
      gLL += gjk * ll;
    }
  out.eq = endo_pair(divc, divc, G, Gi).value() - 4.0 * pLL + 2.0 * d.curv.jtrace.value() * gLL;
  out.eq_raw = lqc;
  out.gjms = -2.0 * (lq + cross);
  const double q = out.quartic / 4.0;
  out.rel_checked = lq - lqc + q;
  out.rel_cross = cross + q;
  out.rel_checked_corrected = lq - lqc - q;
  out.rel_cross_corrected = cross - q;
  return out;
}

// ---------------------------------------------------------------------------
// Integrated energies

enum class EnergyKind { q_energy, gjms, graham_reichert, euler, structure };

/// Jet order each quantity needs.
inline int required_order(EnergyKind k) {
  switch (k) {
    case EnergyKind::q_energy: return 4;
    case EnergyKind::gjms: return 5;
    case EnergyKind::structure: return 4;
    case EnergyKind::graham_reichert: return 3;
    case EnergyKind::euler: return 3;
  }
  return 0;
}

inline const char* to_string(EnergyKind k) {
  switch (k) {
    case EnergyKind::q_energy: return "E_Q";
    case EnergyKind::gjms: return "E_GJMS";
    case EnergyKind::graham_reichert: return "E_GR";
    case EnergyKind::euler: return "cgb";
    case EnergyKind::structure: return "structure";
  }
  return "?";
}

class budget_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate_budget(int order, const std::vector<EnergyKind>& kinds) {
  if (order > kMaxJetOrder) throw budget_error("jet order " + std::to_string(order) + " above supported maximum");
  for (auto k : kinds)
    if (order < required_order(k))
      throw budget_error(std::string(to_string(k)) + " needs jet order " + std::to_string(required_order(k)) +
                         ", budget is " + std::to_string(order));
}

struct EnergyOptions {
  int resolution = 16;
  int order = 5;
  int threads = 1;
  bool flip_schouten = false;
};

/// Integrals over Sigma; quantities beyond the jet budget are empty.
struct EnergyIntegrals {
  std::optional<double> E_Q;        // integrated-by-parts form
  std::optional<double> E_Q_raw;    // L . Q1-checked L form
  std::optional<double> E_GJMS;
  double E_GR = 0.0;
  double quartic = 0.0;
  std::optional<double> quartic_tractor;
  double cgb = 0.0;
  double fialkow_term = 0.0;
  double volume = 0.0;
  std::optional<double> rel_checked_l1;  // integral of |pointwise relation residual|
  std::optional<double> rel_cross_l1;
  std::optional<double> rel_checked_corrected_l1;
  std::optional<double> rel_cross_corrected_l1;
  std::size_t nodes = 0;
  int resolution = 0;
  int order = 0;
};

namespace detail {
inline constexpr int kEnergyComponents = 13;

template <int K>
EnergyIntegrals integrate_energies(const ImmersionSpec& spec, const EnergyOptions& opt) {
  const Atlas atlas = make_atlas(spec, opt.resolution);
  GeometryOptions gopt;
  gopt.flip_schouten = opt.flip_schouten;
  IntegrateOptions iopt;
  iopt.threads = opt.threads;
  const auto r = integrate_many(
      atlas, kEnergyComponents,
      [&](const std::array<double, 4>& theta, std::vector<double>& out) {
        const auto d = compute_geometry<K>(spec, theta, gopt);
        const NodeDensities nd = node_densities(d);
        const double dv = d.ff.sqrt_det;
        out[0] = dv * nd.eq;
        out[1] = dv * nd.eq_raw;
        out[2] = dv * nd.gjms;
        out[3] = dv * nd.gr;
        out[4] = dv * nd.quartic;
        out[5] = dv * nd.quartic_tractor;
        out[6] = dv * nd.euler;
        out[7] = dv * nd.fialkow_term;
        out[8] = dv;
        out[9] = dv * std::abs(nd.rel_checked);
        out[10] = dv * std::abs(nd.rel_cross);
        out[11] = dv * std::abs(nd.rel_checked_corrected);
        out[12] = dv * std::abs(nd.rel_cross_corrected);
      },
      iopt);
  EnergyIntegrals e;
  e.nodes = atlas.node_count();
  e.resolution = opt.resolution;
  e.order = K;
  e.E_GR = r[3];
  e.quartic = r[4];
  e.cgb = r[6];
  e.fialkow_term = r[7];
  e.volume = r[8];
  if constexpr (K >= 4) {
    e.E_Q = r[0];
    e.quartic_tractor = r[5];
  }
  if constexpr (K >= 5) {
    e.E_Q_raw = r[1];
    e.E_GJMS = r[2];
    e.rel_checked_l1 = r[9];
    e.rel_cross_l1 = r[10];
    e.rel_checked_corrected_l1 = r[11];
    e.rel_cross_corrected_l1 = r[12];
  }
  return e;
}
}  // namespace detail

inline EnergyIntegrals integrate_energies(const ImmersionSpec& spec, const EnergyOptions& opt) {
  if (opt.order < 3) throw budget_error("energies need jet order >= 3");
  switch (opt.order) {
    case 3: return detail::integrate_energies<3>(spec, opt);
    case 4: return detail::integrate_energies<4>(spec, opt);
    case 5: return detail::integrate_energies<5>(spec, opt);
    case 6: return detail::integrate_energies<6>(spec, opt);
    default: throw budget_error("jet order " + std::to_string(opt.order) + " above supported maximum");
  }
}

inline double chi_estimate(double cgb) { return cgb / (32.0 * std::numbers::pi * std::numbers::pi); }

/// Named identity residuals derived from the integrals.
struct IdentityResiduals {
  std::optional<double> energy_comparison;  // |E_GJMS + 2 E_Q - quartic|
  std::optional<double> energy_comparison_corrected;  // |E_GJMS + 2 E_Q + quartic|
  std::optional<double> q_forms;            // |E_Q_raw - E_Q|
  std::optional<double> graham_reichert;    // |32 E_GR - E_Q - 16 pi^2 chi - int(-4|F|^2 + 4 f^2 - |w|^2/2)|
  std::optional<double> quartic_routes;     // |quartic - quartic from tractor traces|
  double chi_integrality = 0.0;             // distance of chi_est to the nearest integer
};

inline IdentityResiduals identity_residuals(const EnergyIntegrals& e) {
  IdentityResiduals r;
  const double chi = chi_estimate(e.cgb);
  r.chi_integrality = std::abs(chi - std::round(chi));
  if (e.E_GJMS && e.E_Q) {
    r.energy_comparison = std::abs(*e.E_GJMS + 2.0 * *e.E_Q - e.quartic);
    r.energy_comparison_corrected = std::abs(*e.E_GJMS + 2.0 * *e.E_Q + e.quartic);
  }
  if (e.E_Q_raw && e.E_Q) r.q_forms = std::abs(*e.E_Q_raw - *e.E_Q);
  if (e.E_Q) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    r.graham_reichert = std::abs(32.0 * e.E_GR - *e.E_Q - 16.0 * pi2 * std::round(chi) - e.fialkow_term);
  }
  if (e.quartic_tractor) r.quartic_routes = std::abs(e.quartic - *e.quartic_tractor);
  return r;
}

// ---------------------------------------------------------------------------
// Q1 pairing on closed scalar 1-forms

/// u = c_i d theta_i + d f with f a sum of chart trigonometric products.
struct ClosedForm {
  std::array<double, 4> harmonic{};
  std::vector<TrigTerm> potential;  // axis unused
};

/// u as a tangent 1-form field at order M.
template <int M>
MixedField<M> closed_form_field(const ClosedForm& w, const std::array<double, 4>& theta, int n) {
  const auto t = seed_chart<M + 1>(theta);
  Jet<M + 1> f;
  for (const auto& term : w.potential) f += trig_product(term.coeff, term.k, term.fn, t);
  MixedField<M> u({IndexKind::tangent_lower}, n);
  for (int j = 0; j < 4; ++j) u.data[j] = derivative(f, j) + w.harmonic[j];
  return u;
}

/// g^{jk} u_j (Q1 u)_k at one node.
template <int K>
double q1_pairing_density(const ClosedForm& w, const GeometryPointData<K>& d) {
  const MixedField<2> u = closed_form_field<2>(w, d.theta, d.n);
  const MixedField<0> q = q1_scalar(u, d);
  double s = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) s += d.ff.ginv(j, k).value() * u.data[j].value() * q.data[k].value();
  return s;
}

/// Integral of u . Q1 u over Sigma in the working scale of spec.
inline double q1_pairing_integral(const ImmersionSpec& spec, const ClosedForm& w, int resolution, int threads = 1) {
  const Atlas atlas = make_atlas(spec, resolution);
  IntegrateOptions iopt;
  iopt.threads = threads;
  return integrate(
      atlas,
      [&](const std::array<double, 4>& theta) {
        const auto d = compute_geometry<4>(spec, theta);
        return d.ff.sqrt_det * q1_pairing_density(w, d);
      },
      iopt);
}

}  // namespace cwe
