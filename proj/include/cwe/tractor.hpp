#pragma once

// Ambient standard tractors along an immersion, in the working scale. A
// tractor is stored by its slots (sigma, mu^a, rho) as a vector of length
// n + 2 (sigma first, rho last). Endomorphisms are (n+2) x (n+2) jet
// matrices indexed M(upper, lower), so that (M V)^B = M^B_A V^A.

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"
#include "cwe/riemannian.hpp"

namespace cwe {

inline int tractor_dim(int n) { return n + 2; }

template <int M>
struct TractorComponents {
  Jet<M> sigma;
  std::vector<Jet<M>> mu;
  Jet<M> rho;

  std::vector<Jet<M>> stacked() const {
    std::vector<Jet<M>> v;
    v.reserve(mu.size() + 2);
    v.push_back(sigma);
    v.insert(v.end(), mu.begin(), mu.end());
    v.push_back(rho);
    return v;
  }
  static TractorComponents from_stacked(const std::vector<Jet<M>>& v) {
    if (v.size() < 3) throw std::invalid_argument("tractor needs at least 3 slots");
    TractorComponents t;
    t.sigma = v.front();
    t.mu.assign(v.begin() + 1, v.end() - 1);
    t.rho = v.back();
    return t;
  }
};

/// h = [[0,0,1],[0,G I,0],[1,0,0]] in slot order.
template <int M>
JetMatrix<M> tractor_metric(const Jet<M>& G, int n) {
  JetMatrix<M> h(n + 2, n + 2);
  h(0, n + 1) = Jet<M>(1.0);
  h(n + 1, 0) = Jet<M>(1.0);
  for (int a = 0; a < n; ++a) h(1 + a, 1 + a) = G;
  return h;
}

template <int M>
JetMatrix<M> tractor_metric_inverse(const Jet<M>& Ginv, int n) {
  return tractor_metric(Ginv, n);
}

/// <U, V> = G mu . nu + sigma rho' + rho sigma'.
template <int M>
Jet<M> tractor_pair(const Jet<M>& G, const TractorComponents<M>& u, const TractorComponents<M>& v) {
  Jet<M> s;
  for (std::size_t a = 0; a < u.mu.size(); ++a) s.add_product(u.mu[a], v.mu[a]);
  s = G * s;
  s.add_product(u.sigma, v.rho);
  s.add_product(u.rho, v.sigma);
  return s;
}

/// Metric adjoint h^{-1} A^T h.
template <int M>
JetMatrix<M> tractor_adjoint(const JetMatrix<M>& a, const Jet<M>& G, const Jet<M>& Ginv) {
  const int N = a.rows();
  auto swap_end = [N](int i) { return i == 0 ? N - 1 : (i == N - 1 ? 0 : i); };
  auto middle = [N](int i) { return i != 0 && i != N - 1; };
  JetMatrix<M> r(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const Jet<M>& v = a(swap_end(j), swap_end(i));
      if (is_zero(v)) continue;
      if (middle(j) && !middle(i))
        r(i, j) = G * v;
      else if (!middle(j) && middle(i))
        r(i, j) = Ginv * v;
      else
        r(i, j) = v;
    }
  return r;
}

/// tr(X^dagger Y), the tractor pairing of endomorphisms.
template <int M>
Jet<M> endo_pair(const JetMatrix<M>& x, const JetMatrix<M>& y, const Jet<M>& G, const Jet<M>& Ginv) {
  const JetMatrix<M> xd = tractor_adjoint(x, G, Ginv);
  Jet<M> s;
  for (int i = 0; i < x.rows(); ++i)
    for (int k = 0; k < x.rows(); ++k)
      if (!is_zero(xd(i, k)) && !is_zero(y(k, i))) s.add_product(xd(i, k), y(k, i));
  return s;
}

/// Pullback of the ambient tractor connection along Pi_j, nabla_j = d_j + C_j,
/// at order M <= K - 2.
template <int M, int K>
std::array<JetMatrix<M>, 4> tractor_connection_matrices(const GeometryPointData<K>& d) {
  static_assert(M <= K - 2, "connection needs the ambient Schouten tensor");
  const int n = d.n;
  const Jet<M> G = truncate<M>(d.ff.G);
  const Jet<M> Gi = truncate<M>(d.ff.Ginv);
  const std::vector<Jet<M>> ups = truncate<M>(d.scale.ups);
  const JetMatrix<M> P = truncate<M>(d.P);
  bool flat = true;
  for (const auto& u : ups)
    if (!is_zero(u)) flat = false;
  std::array<JetMatrix<M>, 4> C;
  for (int j = 0; j < 4; ++j) {
    JetMatrix<M>& c = C[j];
    c = JetMatrix<M>(n + 2, n + 2);
    std::vector<Jet<M>> pj(static_cast<std::size_t>(n)), pP(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) pj[a] = truncate<M>(d.ff.Pi(a, j));
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a)
        if (!is_zero(P(a, b))) pP[b].add_product(pj[a], P(a, b));
    Jet<M> up;
    if (!flat)
      for (int a = 0; a < n; ++a) up.add_product(ups[a], pj[a]);
    for (int b = 0; b < n; ++b) {
      c(0, 1 + b) = -(G * pj[b]);
      c(1 + b, 0) = Gi * pP[b];
      c(1 + b, n + 1) = pj[b];
      c(n + 1, 1 + b) = -pP[b];
      if (!flat) {
        for (int e = 0; e < n; ++e) {
          Jet<M> v = pj[b] * ups[e];
          v.sub_product(pj[e], ups[b]);
          c(1 + b, 1 + e) = v;
        }
        c(1 + b, 1 + b) += up;
      }
    }
  }
  return C;
}

// ---------------------------------------------------------------------------
// Mixed tensor fields and their covariant derivatives

enum class IndexKind { tangent_lower, tangent_upper, normal, ambient, tractor_upper, tractor_lower, frame };

inline int index_extent(IndexKind k, int n, int frame_dim) {
  switch (k) {
    case IndexKind::tangent_lower:
    case IndexKind::tangent_upper: return 4;
    case IndexKind::normal:
    case IndexKind::ambient: return n;
    case IndexKind::tractor_upper:
    case IndexKind::tractor_lower: return n + 2;
    case IndexKind::frame: return frame_dim;
  }
  return 0;
}

/// Jet-valued multi-array at a point; the last index varies fastest. A
/// `frame` index only labels a family of fields and is never differentiated.
template <int M>
struct MixedField {
  std::vector<IndexKind> valence;
  std::vector<int> dims;
  std::vector<Jet<M>> data;

  MixedField() = default;
  MixedField(std::vector<IndexKind> v, int n, int frame_dim = 0) : valence(std::move(v)) {
    std::size_t total = 1;
    for (auto k : valence) {
      dims.push_back(index_extent(k, n, frame_dim));
      total *= static_cast<std::size_t>(dims.back());
    }
    data.resize(total);
  }

  std::size_t stride(std::size_t slot) const {
    std::size_t s = 1;
    for (std::size_t q = slot + 1; q < dims.size(); ++q) s *= static_cast<std::size_t>(dims[q]);
    return s;
  }
  std::size_t offset(std::initializer_list<int> idx) const {
    if (idx.size() != dims.size()) throw std::invalid_argument("mixed field: wrong number of indices");
    std::size_t off = 0;
    std::size_t q = 0;
    for (int i : idx) {
      if (i < 0 || i >= dims[q]) throw std::out_of_range("mixed field: index out of range");
      off = off * static_cast<std::size_t>(dims[q]) + static_cast<std::size_t>(i);
      ++q;
    }
    return off;
  }
  Jet<M>& at(std::initializer_list<int> idx) { return data[offset(idx)]; }
  const Jet<M>& at(std::initializer_list<int> idx) const { return data[offset(idx)]; }
};

template <int M>
double max_abs(const MixedField<M>& f) {
  double m = 0.0;
  for (const auto& j : f.data) m = std::max(m, max_abs(j));
  return m;
}

/// A field with a single tractor-upper index and a frame label, one column
/// per column of the matrix.
template <int M>
MixedField<M> frame_field(const JetMatrix<M>& cols) {
  const int n = cols.rows() - 2;
  MixedField<M> f({IndexKind::tractor_upper, IndexKind::frame}, n, cols.cols());
  for (int b = 0; b < cols.rows(); ++b)
    for (int a = 0; a < cols.cols(); ++a) f.data[static_cast<std::size_t>(b * cols.cols() + a)] = cols(b, a);
  return f;
}

/// Endomorphism-valued 1-form L_j as a field (tangent_lower, tractor_upper, tractor_lower).
template <int M>
MixedField<M> endo_form_field(const std::array<JetMatrix<M>, 4>& L) {
  const int N = L[0].rows();
  MixedField<M> f({IndexKind::tangent_lower, IndexKind::tractor_upper, IndexKind::tractor_lower}, N - 2);
  for (int j = 0; j < 4; ++j)
    for (int b = 0; b < N; ++b)
      for (int a = 0; a < N; ++a) f.data[static_cast<std::size_t>((j * N + b) * N + a)] = L[j](b, a);
  return f;
}

/// nabla_j f for the connection whose tractor part is d_j + conn[j]; the new
/// tangent index is placed first. Tangent indices use the intrinsic
/// Christoffels, ambient indices the ambient Levi-Civita connection, and
/// normal indices the normal connection (ambient derivative then N).
template <int M, int K>
MixedField<M - 1> covariant_derivative(const MixedField<M>& f, const GeometryPointData<K>& d,
                                       const std::array<JetMatrix<M - 1>, 4>& conn) {
  constexpr int R = M - 1;
  static_assert(R >= 0, "jet order exhausted by covariant derivative");
  static_assert(R <= K - 2, "covariant derivative beyond the available geometry order");
  const int n = d.n;
  std::vector<IndexKind> val{IndexKind::tangent_lower};
  val.insert(val.end(), f.valence.begin(), f.valence.end());
  int frame_dim = 0;
  for (std::size_t s = 0; s < f.valence.size(); ++s)
    if (f.valence[s] == IndexKind::frame) frame_dim = f.dims[s];
  MixedField<R> out(val, n, frame_dim);
  const std::size_t sz = f.data.size();

  std::vector<Jet<R>> fr(sz);
  for (std::size_t p = 0; p < sz; ++p) fr[p] = truncate<R>(f.data[p]);

  std::array<Jet<R>, 64> Gam;
  for (int q = 0; q < 64; ++q) Gam[q] = truncate<R>(d.curv.Gamma[q]);
  const std::vector<Jet<R>> ups = truncate<R>(d.scale.ups);
  JetMatrix<R> Nn;
  bool has_normal = false, has_ambient = false;
  for (auto k : f.valence) {
    if (k == IndexKind::normal) has_normal = true;
    if (k == IndexKind::normal || k == IndexKind::ambient) has_ambient = true;
  }
  if (has_normal) Nn = truncate<R>(normal_projector(d.ff));

  for (int j = 0; j < 4; ++j) {
    Jet<R>* o = out.data.data() + static_cast<std::size_t>(j) * sz;
    for (std::size_t p = 0; p < sz; ++p) o[p] = derivative(f.data[p], j);

    // ambient Christoffel along Pi_j: G^a_b = Pi^a_j U_b + delta^a_b (U . Pi_j) - Pi^b_j U_a
    JetMatrix<R> amb;
    if (has_ambient) {
      amb = JetMatrix<R>(n, n);
      std::vector<Jet<R>> pj(static_cast<std::size_t>(n));
      Jet<R> up;
      for (int a = 0; a < n; ++a) {
        pj[a] = truncate<R>(d.ff.Pi(a, j));
        up.add_product(ups[a], pj[a]);
      }
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          Jet<R> v = pj[a] * ups[b];
          v.sub_product(pj[b], ups[a]);
          amb(a, b) = v;
        }
        amb(a, a) += up;
      }
    }

    for (std::size_t s = 0; s < f.valence.size(); ++s) {
      const std::size_t st = f.stride(s);
      const int e = f.dims[s];
      const IndexKind kind = f.valence[s];
      if (kind == IndexKind::frame) continue;
      for (std::size_t p = 0; p < sz; ++p) {
        const int c = static_cast<int>((p / st) % static_cast<std::size_t>(e));
        const std::size_t base = p - static_cast<std::size_t>(c) * st;
        Jet<R>& acc = o[p];
        for (int m = 0; m < e; ++m) {
          const Jet<R>& src = fr[base + static_cast<std::size_t>(m) * st];
          switch (kind) {
            case IndexKind::tangent_lower: acc.sub_product(Gam[m * 16 + j * 4 + c], src); break;
            case IndexKind::tangent_upper: acc.add_product(Gam[c * 16 + j * 4 + m], src); break;
            case IndexKind::tractor_upper:
              if (!is_zero(conn[j](c, m))) acc.add_product(conn[j](c, m), src);
              break;
            case IndexKind::tractor_lower:
              if (!is_zero(conn[j](m, c))) acc.sub_product(conn[j](m, c), src);
              break;
            case IndexKind::ambient:
            case IndexKind::normal: acc.add_product(amb(c, m), src); break;
            case IndexKind::frame: break;
          }
        }
      }
    }

    for (std::size_t s = 0; s < f.valence.size(); ++s) {
      if (f.valence[s] != IndexKind::normal) continue;
      const std::size_t st = f.stride(s);
      std::vector<Jet<R>> tmp(o, o + sz);
      for (std::size_t p = 0; p < sz; ++p) {
        const int c = static_cast<int>((p / st) % static_cast<std::size_t>(n));
        const std::size_t base = p - static_cast<std::size_t>(c) * st;
        Jet<R> v;
        for (int m = 0; m < n; ++m) v.add_product(Nn(c, m), tmp[base + static_cast<std::size_t>(m) * st]);
        o[p] = v;
      }
    }
  }
  return out;
}

/// Coupled ambient tractor connection.
template <int M, int K>
MixedField<M - 1> tractor_connection(const MixedField<M>& f, const GeometryPointData<K>& d) {
  return covariant_derivative(f, d, tractor_connection_matrices<M - 1>(d));
}

// ---------------------------------------------------------------------------
// Normal and tangent tractor projectors

/// v^a -> (0, v^a, H_b v^b) with H_b = G H^b, as an (n+2) x n matrix.
template <int M, int K>
JetMatrix<M> normal_tractor_injector(const GeometryPointData<K>& d) {
  static_assert(M <= K - 2);
  const int n = d.n;
  const Jet<M> G = truncate<M>(d.ff.G);
  JetMatrix<M> inj(n + 2, n);
  for (int c = 0; c < n; ++c) {
    inj(1 + c, c) = Jet<M>(1.0);
    inj(n + 1, c) = G * truncate<M>(d.ex.H[c]);
  }
  return inj;
}

template <int M>
struct TractorProjectors {
  JetMatrix<M> N;   // normal tractor projector N^A_B
  JetMatrix<M> Pi;  // tangent tractor projector
};

/// Closed form: rows 1+e are (H^e, N^e_c, 0), the last row (G|H|^2, G H_c, 0).
template <int M, int K>
TractorProjectors<M> tractor_projectors(const GeometryPointData<K>& d) {
  static_assert(M <= K - 2);
  const int n = d.n;
  const Jet<M> G = truncate<M>(d.ff.G);
  const JetMatrix<M> Nn = truncate<M>(normal_projector(d.ff));
  const std::vector<Jet<M>> H = truncate<M>(d.ex.H);
  TractorProjectors<M> pr;
  pr.N = JetMatrix<M>(n + 2, n + 2);
  Jet<M> h2;
  for (int a = 0; a < n; ++a) h2.add_product(H[a], H[a]);
  for (int e = 0; e < n; ++e) {
    pr.N(1 + e, 0) = H[e];
    for (int c = 0; c < n; ++c) pr.N(1 + e, 1 + c) = Nn(e, c);
    pr.N(n + 1, 1 + e) = G * H[e];
  }
  pr.N(n + 1, 0) = G * h2;
  pr.Pi = JetMatrix<M>::identity(n + 2) - pr.N;
  return pr;
}

/// N^A_B = N^A_a N^a_B with N^a_B = N^C_c g^{ac} h_{BC}, from the injector.
template <int M, int K>
TractorProjectors<M> tractor_projectors_from_injector(const GeometryPointData<K>& d) {
  const int n = d.n;
  const Jet<M> G = truncate<M>(d.ff.G);
  const Jet<M> Gi = truncate<M>(d.ff.Ginv);
  const JetMatrix<M> inj = matmul(normal_tractor_injector<M>(d), truncate<M>(normal_projector(d.ff)));
  const JetMatrix<M> h = tractor_metric(G, n);
  const JetMatrix<M> lower = scaled(Gi, matmul(transpose(inj), h));  // N^a_B
  TractorProjectors<M> pr;
  pr.N = matmul(inj, lower);
  pr.Pi = JetMatrix<M>::identity(n + 2) - pr.N;
  return pr;
}

// ---------------------------------------------------------------------------
// Tractor second fundamental form

template <int C>
using SffArray = std::array<JetMatrix<C>, 4>;

/// L_j = (nabla_j Pi) Pi, i.e. L_jA^B = Pi^C_A nabla_j Pi^B_C, at order K-3.
template <int K>
SffArray<K - 3> tractor_sff_direct(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const auto pr = tractor_projectors<K - 2>(d);
  const auto conn = tractor_connection_matrices<C>(d);
  const JetMatrix<C> Pi = truncate<C>(pr.Pi);
  SffArray<C> L;
  for (int j = 0; j < 4; ++j) {
    JetMatrix<C> dPi = derivative(pr.Pi, j);
    dPi += commutator(conn[j], Pi);
    L[j] = matmul(dPi, Pi);
  }
  return L;
}

/// Rank-structured form of L: L_j = sum_k n_jk tau^k + r_j X, where n_jk and
/// r_j are injected normal vectors and tau^k, X are tractor covectors.
template <int C>
struct SffFactors {
  int n = 0;
  std::array<std::vector<Jet<C>>, 16> normal;   // n_jk at [j*4 + k], length n+2
  std::array<std::vector<Jet<C>>, 4> bottom;    // r_j
  std::array<std::vector<Jet<C>>, 4> tangent;   // tau^k, length n+2
  std::vector<Jet<C>> x_row;                    // X_A = (1, 0, ..., 0)
};

/// rho_j = -D_j H + N(Pi_j^b P_b^c), the bottom slot of the split form.
template <int K>
std::array<std::vector<Jet<K - 3>>, 4> sff_bottom_slot(const GeometryPointData<K>& d) {
  auto dh = DH(d);
  const auto sp = schouten_normal_term<K - 3>(d);
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < d.n; ++a) dh[j][a] = sp[j][a] - dh[j][a];
  return dh;
}

template <int K>
SffFactors<K - 3> tractor_sff_factors(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const int n = d.n;
  SffFactors<C> f;
  f.n = n;
  const Jet<C> G = truncate<C>(d.ff.G);
  std::vector<Jet<C>> GH(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) GH[a] = G * truncate<C>(d.ex.H[a]);
  auto inject = [&](auto&& v) {
    std::vector<Jet<C>> t(static_cast<std::size_t>(n + 2));
    Jet<C> hv;
    for (int a = 0; a < n; ++a) {
      t[1 + a] = v(a);
      hv.add_product(GH[a], t[1 + a]);
    }
    t[n + 1] = hv;
    return t;
  };
  for (int j = 0; j < 4; ++j)
    for (int k = j; k < 4; ++k) {
      f.normal[j * 4 + k] = inject([&](int a) { return truncate<C>(d.ex.IIo[sym_index(j, k) * n + a]); });
      if (k != j) f.normal[k * 4 + j] = f.normal[j * 4 + k];
    }
  const auto rho = sff_bottom_slot(d);
  for (int j = 0; j < 4; ++j) f.bottom[j] = inject([&](int a) { return rho[j][a]; });
  const JetMatrix<C> ginv = truncate<C>(d.ff.ginv);
  for (int k = 0; k < 4; ++k) {
    std::vector<Jet<C>> t(static_cast<std::size_t>(n + 2));
    for (int a = 0; a < n; ++a) {
      Jet<C> v;
      for (int l = 0; l < 4; ++l) v.add_product(ginv(k, l), truncate<C>(d.ff.Pi(a, l)));
      t[1 + a] = G * v;
    }
    f.tangent[k] = std::move(t);
  }
  f.x_row.assign(static_cast<std::size_t>(n + 2), Jet<C>());
  f.x_row[0] = Jet<C>(1.0);
  return f;
}

template <int C>
SffArray<C> assemble_sff(const SffFactors<C>& f) {
  const int N = f.n + 2;
  SffArray<C> L;
  for (int j = 0; j < 4; ++j) {
    L[j] = JetMatrix<C>(N, N);
    for (int b = 0; b < N; ++b)
      for (int a = 0; a < N; ++a) {
        Jet<C>& v = L[j](b, a);
        for (int k = 0; k < 4; ++k)
          if (!is_zero(f.normal[j * 4 + k][b]) && !is_zero(f.tangent[k][a]))
            v.add_product(f.normal[j * 4 + k][b], f.tangent[k][a]);
        if (!is_zero(f.x_row[a])) v.add_product(f.bottom[j][b], f.x_row[a]);
      }
  }
  return L;
}

template <int K>
SffArray<K - 3> tractor_sff_split(const GeometryPointData<K>& d) {
  return assemble_sff(tractor_sff_factors(d));
}

// ---------------------------------------------------------------------------
// Checked connection

/// Connection matrices of the projector sandwich
/// nabla-check_j U = Pi nabla_j (Pi U) + N nabla_j (N U), at order K-3.
template <int K>
std::array<JetMatrix<K - 3>, 4> checked_connection_matrices(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const auto pr = tractor_projectors<K - 2>(d);
  const auto conn = tractor_connection_matrices<C>(d);
  const JetMatrix<C> Pi = truncate<C>(pr.Pi);
  const JetMatrix<C> N = truncate<C>(pr.N);
  std::array<JetMatrix<C>, 4> out;
  for (int j = 0; j < 4; ++j) {
    JetMatrix<C> m = matmul(Pi, derivative(pr.Pi, j));
    m += matmul(N, derivative(pr.N, j));
    m += matmul(Pi, matmul(conn[j], Pi));
    m += matmul(N, matmul(conn[j], N));
    out[j] = std::move(m);
  }
  return out;
}

/// C - L + L^dagger, the same connection written through L.
template <int K>
std::array<JetMatrix<K - 3>, 4> checked_connection_from_sff(const GeometryPointData<K>& d,
                                                            const SffArray<K - 3>& L) {
  constexpr int C = K - 3;
  const auto conn = tractor_connection_matrices<C>(d);
  const Jet<C> G = truncate<C>(d.ff.G);
  const Jet<C> Gi = truncate<C>(d.ff.Ginv);
  std::array<JetMatrix<C>, 4> out;
  for (int j = 0; j < 4; ++j) out[j] = conn[j] - L[j] + tractor_adjoint(L[j], G, Gi);
  return out;
}

template <int M, int K>
MixedField<M - 1> checked_derivative(const MixedField<M>& f, const GeometryPointData<K>& d) {
  static_assert(M - 1 <= K - 3, "checked derivative beyond the available geometry order");
  const auto full = checked_connection_matrices(d);
  std::array<JetMatrix<M - 1>, 4> conn;
  for (int j = 0; j < 4; ++j) conn[j] = truncate<M - 1>(full[j]);
  return covariant_derivative(f, d, conn);
}

/// max |nabla_j N + L_j + L_j^dagger| over components and coefficients.
template <int K>
double normal_projector_derivative_residual(const GeometryPointData<K>& d, const SffArray<K - 3>& L) {
  constexpr int C = K - 3;
  const auto pr = tractor_projectors<K - 2>(d);
  const auto conn = tractor_connection_matrices<C>(d);
  const JetMatrix<C> N = truncate<C>(pr.N);
  const Jet<C> G = truncate<C>(d.ff.G);
  const Jet<C> Gi = truncate<C>(d.ff.Ginv);
  double worst = 0.0;
  for (int j = 0; j < 4; ++j) {
    JetMatrix<C> r = derivative(pr.N, j);
    r += commutator(conn[j], N);
    r += L[j];
    r += tractor_adjoint(L[j], G, Gi);
    worst = std::max(worst, max_abs(r));
  }
  return worst;
}

/// max |nabla-check_j N| over components and coefficients.
template <int K>
double checked_normal_projector_residual(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const auto pr = tractor_projectors<K - 2>(d);
  const auto chk = checked_connection_matrices(d);
  const JetMatrix<C> N = truncate<C>(pr.N);
  double worst = 0.0;
  for (int j = 0; j < 4; ++j) {
    JetMatrix<C> r = derivative(pr.N, j);
    r += commutator(chk[j], N);
    worst = std::max(worst, max_abs(r));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Schouten-Fialkow and Fialkow tensors

template <int C>
struct FialkowData {
  std::array<Jet<C>, 16> Pcheck;    // P-check_jk
  std::array<Jet<C>, 16> F;         // P-check - p
  std::array<Jet<C>, 16> F_closed;  // (IIo_j^{lc} IIo_klc - |IIo|^2 g_jk / 6) / 2
  Jet<C> Jcheck;
  Jet<C> f;
};

template <int K>
FialkowData<K - 3> fialkow(const GeometryPointData<K>& d) {
  constexpr int C = K - 3;
  const int n = d.n;
  const Jet<C> G = truncate<C>(d.ff.G);
  const JetMatrix<C> g = truncate<C>(d.ff.g);
  const JetMatrix<C> gi = truncate<C>(d.ff.ginv);
  const JetMatrix<C> P = truncate<C>(d.P);
  std::vector<Jet<C>> H = truncate<C>(d.ex.H);
  std::vector<Jet<C>> IIo = truncate<C>(d.ex.IIo);
  auto iio = [&](int i, int j, int a) -> const Jet<C>& { return IIo[sym_index(i, j) * n + a]; };

  Jet<C> h2;
  for (int a = 0; a < n; ++a) h2.add_product(H[a], H[a]);
  h2 = G * h2;

  // G IIo_jl . IIo_km
  std::array<Jet<C>, 256> q;
  for (int j = 0; j < 4; ++j)
    for (int l = 0; l < 4; ++l)
      for (int k = 0; k < 4; ++k)
        for (int m = 0; m < 4; ++m) {
          if (riem_index(k, m, j, l) < riem_index(j, l, k, m)) {
            q[riem_index(j, l, k, m)] = q[riem_index(k, m, j, l)];
            continue;
          }
          Jet<C> v;
          for (int a = 0; a < n; ++a) v.add_product(iio(j, l, a), iio(k, m, a));
          q[riem_index(j, l, k, m)] = G * v;
        }
  Jet<C> norm2;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) norm2 += gi(i, j) * gi(k, l) * q[riem_index(i, k, j, l)];

  FialkowData<C> fd;
  std::vector<std::vector<Jet<C>>> pj(4, std::vector<Jet<C>>(static_cast<std::size_t>(n)));
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < n; ++a) pj[j][a] = truncate<C>(d.ff.Pi(a, j));
  for (int j = 0; j < 4; ++j)
    for (int k = j; k < 4; ++k) {
      Jet<C> ppp;
      for (int a = 0; a < n; ++a) {
        Jet<C> row;
        for (int b = 0; b < n; ++b)
          if (!is_zero(P(a, b))) row.add_product(P(a, b), pj[k][b]);
        ppp.add_product(pj[j][a], row);
      }
      Jet<C> hii;
      for (int a = 0; a < n; ++a) hii.add_product(H[a], iio(j, k, a));
      Jet<C> v = ppp + G * hii;
      v.add_product(0.5 * h2, g(j, k));
      fd.Pcheck[j * 4 + k] = v;
      fd.Pcheck[k * 4 + j] = v;
      const Jet<C> fv = v - d.curv.p[j * 4 + k];
      fd.F[j * 4 + k] = fv;
      fd.F[k * 4 + j] = fv;
      Jet<C> c;
      for (int l = 0; l < 4; ++l)
        for (int m = 0; m < 4; ++m) c.add_product(gi(l, m), q[riem_index(j, l, k, m)]);
      c.sub_product(norm2 / 6.0, g(j, k));
      fd.F_closed[j * 4 + k] = 0.5 * c;
      fd.F_closed[k * 4 + j] = 0.5 * c;
    }
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      fd.Jcheck.add_product(gi(j, k), fd.Pcheck[j * 4 + k]);
      fd.f.add_product(gi(j, k), fd.F[j * 4 + k]);
    }
  return fd;
}

// ---------------------------------------------------------------------------
// Structure equations

struct StructureResiduals {
  double codazzi = 0.0;
  double gauss = 0.0;
  double ricci = 0.0;
};

/// W_ij = [nabla_i, nabla_j] applied to the frame columns, from a field of
/// second derivatives laid out (i, j, tractor_upper, frame).
template <int M>
std::array<JetMatrix<M>, 16> frame_commutators(const MixedField<M>& dd) {
  const int N = dd.dims[2];
  const int F = dd.dims[3];
  std::array<JetMatrix<M>, 16> W;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      W[i * 4 + j] = JetMatrix<M>(N, F);
      for (int b = 0; b < N; ++b)
        for (int a = 0; a < F; ++a)
          W[i * 4 + j](b, a) = dd.at({i, j, b, a}) - dd.at({j, i, b, a});
    }
  return W;
}

/// Projects the tractor slot of a (j, tractor_upper, frame) field with P.
template <int M>
void project_tractor_slot(MixedField<M>& f, const JetMatrix<M>& P) {
  const int N = f.dims[1];
  const int F = f.dims[2];
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < F; ++a) {
      std::vector<Jet<M>> col(static_cast<std::size_t>(N));
      for (int b = 0; b < N; ++b) col[b] = f.at({j, b, a});
      for (int b = 0; b < N; ++b) {
        Jet<M> v;
        for (int c = 0; c < N; ++c)
          if (!is_zero(P(b, c))) v.add_product(P(b, c), col[c]);
        f.at({j, b, a}) = v;
      }
    }
}

/// Residuals of the tractor Codazzi, Gauss and Ricci equations. Curvatures
/// are commutators of second covariant derivatives of the projector frames.
template <int K>
StructureResiduals structure_residuals(const GeometryPointData<K>& d, const SffArray<K - 3>& L) {
  static_assert(K >= 4, "structure equations need jet order >= 4");
  constexpr int C = K - 3;
  constexpr int R = K - 4;
  const int n = d.n;
  StructureResiduals out;
  const auto pr = tractor_projectors<K - 2>(d);
  const Jet<R> G = truncate<R>(d.ff.G);
  const Jet<R> Gi = truncate<R>(d.ff.Ginv);
  const JetMatrix<R> h = tractor_metric(G, n);
  std::array<JetMatrix<R>, 4> Lr;
  for (int j = 0; j < 4; ++j) Lr[j] = truncate<R>(L[j]);

  // Codazzi: nabla-check_[i L_j] = 0.
  {
    const MixedField<R> dL = checked_derivative(endo_form_field(L), d);
    const int N = n + 2;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        for (int b = 0; b < N; ++b)
          for (int a = 0; a < N; ++a)
            out.codazzi = std::max(out.codazzi, max_abs(dL.at({i, j, b, a}) - dL.at({j, i, b, a})));
  }

  // Gauss: Pi^T h Omega-check_ij Pi = L_i^T h L_j - L_j^T h L_i.
  {
    const MixedField<K - 2> V = frame_field(pr.Pi);
    const auto d1 = checked_derivative(V, d);
    const auto d2 = checked_derivative(d1, d);
    const auto W = frame_commutators(d2);
    const JetMatrix<R> PiT = transpose(truncate<R>(pr.Pi));
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        JetMatrix<R> lhs = matmul(PiT, matmul(h, W[i * 4 + j]));
        lhs -= matmul(transpose(Lr[i]), matmul(h, Lr[j]));
        lhs += matmul(transpose(Lr[j]), matmul(h, Lr[i]));
        out.gauss = std::max(out.gauss, max_abs(lhs));
      }
  }

  // Ricci: on normal tractors, Omega^N_ij = L_i L_j^dagger - L_j L_i^dagger, with
  // nabla^N = N nabla.
  {
    const MixedField<K - 2> V = frame_field(pr.N);
    auto d1 = tractor_connection(V, d);
    project_tractor_slot(d1, truncate<C>(pr.N));
    MixedField<R> d2 = tractor_connection(d1, d);
    const JetMatrix<R> Nr = truncate<R>(pr.N);
    {
      const int N = n + 2;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int a = 0; a < N; ++a) {
            std::vector<Jet<R>> col(static_cast<std::size_t>(N));
            for (int b = 0; b < N; ++b) col[b] = d2.at({i, j, b, a});
            for (int b = 0; b < N; ++b) {
              Jet<R> v;
              for (int c = 0; c < N; ++c)
                if (!is_zero(Nr(b, c))) v.add_product(Nr(b, c), col[c]);
              d2.at({i, j, b, a}) = v;
            }
          }
    }
    const auto W = frame_commutators(d2);
    const JetMatrix<R> NT = transpose(Nr);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        JetMatrix<R> rhs = matmul(Lr[i], tractor_adjoint(Lr[j], G, Gi));
        rhs -= matmul(Lr[j], tractor_adjoint(Lr[i], G, Gi));
        JetMatrix<R> diff = W[i * 4 + j] - matmul(rhs, Nr);
        out.ricci = std::max(out.ricci, max_abs(matmul(NT, matmul(h, diff))));
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tangent tractor contorsion

/// Intrinsic tractor connection of the induced metric in the splitting
/// (sigma, mu^k, rho) of Sigma, with Schouten tensor S: D_i = d_i + A_i.
template <int M>
std::array<JetMatrix<M>, 4> intrinsic_tractor_connection(const JetMatrix<M>& g, const JetMatrix<M>& ginv,
                                                         const std::array<Jet<M>, 64>& Gamma,
                                                         const std::array<Jet<M>, 16>& S) {
  std::array<JetMatrix<M>, 4> A;
  for (int i = 0; i < 4; ++i) {
    A[i] = JetMatrix<M>(6, 6);
    for (int j = 0; j < 4; ++j) {
      A[i](0, 1 + j) = -g(i, j);
      Jet<M> up;
      for (int l = 0; l < 4; ++l) up.add_product(ginv(j, l), S[i * 4 + l]);
      A[i](1 + j, 0) = up;
      for (int k = 0; k < 4; ++k) A[i](1 + j, 1 + k) = Gamma[j * 16 + i * 4 + k];
      A[i](5, 1 + j) = -S[i * 4 + j];
    }
    A[i](1 + i, 5) = Jet<M>(1.0);
  }
  return A;
}

/// S_j = X Z^l F_jl - Z_k X F_j^k in the intrinsic splitting.
template <int M>
std::array<JetMatrix<M>, 4> tangent_contorsion(const JetMatrix<M>& ginv, const std::array<Jet<M>, 16>& F) {
  std::array<JetMatrix<M>, 4> S;
  for (int j = 0; j < 4; ++j) {
    S[j] = JetMatrix<M>(6, 6);
    for (int l = 0; l < 4; ++l) {
      S[j](5, 1 + l) = F[j * 4 + l];
      Jet<M> up;
      for (int m = 0; m < 4; ++m) up.add_product(ginv(l, m), F[j * 4 + m]);
      S[j](1 + l, 0) = -up;
    }
  }
  return S;
}

template <int M>
std::array<JetMatrix<M - 1>, 16> connection_curvature(const std::array<JetMatrix<M>, 4>& A) {
  std::array<JetMatrix<M - 1>, 16> Om;
  std::array<JetMatrix<M - 1>, 4> Ar;
  for (int i = 0; i < 4; ++i) Ar[i] = truncate<M - 1>(A[i]);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      JetMatrix<M - 1> o = derivative(A[j], i) - derivative(A[i], j);
      o += commutator(Ar[i], Ar[j]);
      Om[i * 4 + j] = std::move(o);
    }
  return Om;
}

template <int M>
Jet<M> trace_product(const JetMatrix<M>& a, const JetMatrix<M>& b) {
  Jet<M> s;
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k)
      if (!is_zero(a(i, k)) && !is_zero(b(k, i))) s.add_product(a(i, k), b(k, i));
  return s;
}

/// Compares conjugation invariants tr(Om_ij Om_kl) of the checked curvature
/// on tangent tractors with those of the intrinsic curvature corrected by
/// the contorsion, Om^D - (D S) + S ^ S.
template <int K>
double contorsion_residual(const GeometryPointData<K>& d) {
  static_assert(K >= 4);
  constexpr int C = K - 3;
  constexpr int R = K - 4;
  const auto pr = tractor_projectors<K - 2>(d);
  const auto chk = checked_connection_matrices(d);
  const auto Om = connection_curvature(chk);
  const JetMatrix<R> Pi = truncate<R>(pr.Pi);

  const JetMatrix<C> g = truncate<C>(d.ff.g);
  const JetMatrix<C> gi = truncate<C>(d.ff.ginv);
  std::array<Jet<C>, 64> Gam;
  for (int q = 0; q < 64; ++q) Gam[q] = truncate<C>(d.curv.Gamma[q]);
  const auto fd = fialkow(d);
  const auto A = intrinsic_tractor_connection(g, gi, Gam, d.curv.p);
  const auto S = tangent_contorsion(gi, fd.F);
  const auto OmD = connection_curvature(A);
  std::array<JetMatrix<R>, 4> Ar, Sr;
  for (int i = 0; i < 4; ++i) {
    Ar[i] = truncate<R>(A[i]);
    Sr[i] = truncate<R>(S[i]);
  }
  std::array<JetMatrix<R>, 16> model;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      JetMatrix<R> dS = derivative(S[j], i) - derivative(S[i], j);
      dS += commutator(Ar[i], Sr[j]);
      dS -= commutator(Ar[j], Sr[i]);
      model[i * 4 + j] = OmD[i * 4 + j] - dS + commutator(Sr[i], Sr[j]);
    }

  double worst = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const JetMatrix<R> a = matmul(Om[i * 4 + j], Pi);
      worst = std::max(worst, max_abs(trace_product(a, JetMatrix<R>::identity(a.rows())) -
                                      trace_product(model[i * 4 + j], JetMatrix<R>::identity(6))));
      for (int k = 0; k < 4; ++k)
        for (int l = k + 1; l < 4; ++l) {
          const JetMatrix<R> b = matmul(Om[k * 4 + l], Pi);
          const Jet<R> lhs = trace_product(a, b);
          const Jet<R> rhs = trace_product(model[i * 4 + j], model[k * 4 + l]);
          worst = std::max(worst, max_abs(lhs - rhs));
        }
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Parallel frame

/// A frame U of tractors parallel along Sigma for the ambient connection
/// (d_j U + C_j U = 0), with h constant in that frame. U maps frame
/// components to slot components; columns are parallel tractors.
template <int M>
struct ParallelFrame {
  JetMatrix<M> U;
  JetMatrix<M> Uinv;
};

template <int M, int K>
ParallelFrame<M> parallel_frame(const GeometryPointData<K>& d) {
  static_assert(M <= K);
  const int n = d.n;
  const int N = n + 2;
  const std::vector<Jet<M>> x = truncate<M>(d.x);
  const std::vector<Jet<M>> ups = truncate<M>(d.scale.ups);
  const Jet<M> ew = exp(truncate<M>(d.scale.omega));
  const Jet<M> emw = recip(ew);
  Jet<M> u2, x2;
  for (int a = 0; a < n; ++a) {
    u2.add_product(ups[a], ups[a]);
    x2.add_product(x[a], x[a]);
  }

  // scale change T from the flat splitting to the working one, and its inverse
  JetMatrix<M> T(N, N), Ti(N, N);
  T(0, 0) = ew;
  Ti(0, 0) = emw;
  for (int a = 0; a < n; ++a) {
    T(1 + a, 0) = emw * ups[a];
    T(1 + a, 1 + a) = emw;
    T(n + 1, 1 + a) = -(emw * ups[a]);
    Ti(1 + a, 0) = -(emw * ups[a]);
    Ti(1 + a, 1 + a) = ew;
    Ti(n + 1, 1 + a) = ew * ups[a];
  }
  T(n + 1, 0) = -0.5 * (emw * u2);
  T(n + 1, n + 1) = emw;
  Ti(n + 1, 0) = -0.5 * (emw * u2);
  Ti(n + 1, n + 1) = ew;

  // flat parallel frame: translation by x
  JetMatrix<M> F = JetMatrix<M>::identity(N), Fi = JetMatrix<M>::identity(N);
  for (int a = 0; a < n; ++a) {
    F(0, 1 + a) = x[a];
    F(1 + a, n + 1) = -x[a];
    Fi(0, 1 + a) = -x[a];
    Fi(1 + a, n + 1) = x[a];
  }
  F(0, n + 1) = -0.5 * x2;
  Fi(0, n + 1) = -0.5 * x2;

  ParallelFrame<M> pf;
  pf.U = matmul(T, F);
  pf.Uinv = matmul(Fi, Ti);
  return pf;
}

/// The constant tractor metric of a parallel frame, eta = U^T h U.
inline Matrix<double> parallel_metric(int n) {
  Matrix<double> eta(n + 2, n + 2);
  eta(0, n + 1) = 1.0;
  eta(n + 1, 0) = 1.0;
  for (int a = 0; a < n; ++a) eta(1 + a, 1 + a) = 1.0;
  return eta;
}

}  // namespace cwe
