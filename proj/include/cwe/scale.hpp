#pragma once

// Ambient scale functions omega on R^n. The working metric is exp(2 omega)
// times the flat metric; all downstream data are computed in that scale.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"

namespace cwe {

enum class ScaleKind { zero, linear, cosine, log_radial };

inline const char* to_string(ScaleKind k) {
  switch (k) {
    case ScaleKind::zero: return "zero";
    case ScaleKind::linear: return "linear";
    case ScaleKind::cosine: return "cosine";
    case ScaleKind::log_radial: return "log_radial";
  }
  return "?";
}

// c * cos(k . x + phase)
struct CosineTerm {
  double coeff = 0.0;
  std::vector<double> k;
  double phase = 0.0;
};

struct AmbientScale {
  ScaleKind kind = ScaleKind::zero;
  std::vector<double> a;             // linear: omega = a . x
  std::vector<CosineTerm> terms;     // cosine: omega = sum of terms
  std::vector<double> center;        // log_radial: omega = log(R^2 / |x - c|^2)
  double radius = 1.0;

  static AmbientScale zero() { return {}; }
  static AmbientScale linear(std::vector<double> a) {
    AmbientScale s;
    s.kind = ScaleKind::linear;
    s.a = std::move(a);
    return s;
  }
  static AmbientScale cosine(std::vector<CosineTerm> terms) {
    AmbientScale s;
    s.kind = ScaleKind::cosine;
    s.terms = std::move(terms);
    return s;
  }
  /// The scale that makes the inversion about (center, radius) an isometry
  /// from the flat metric onto exp(2 omega) times the flat metric.
  static AmbientScale log_radial(std::vector<double> center, double radius) {
    AmbientScale s;
    s.kind = ScaleKind::log_radial;
    s.center = std::move(center);
    s.radius = radius;
    return s;
  }

  void validate(int n) const {
    auto need = [&](const std::vector<double>& v, const char* what) {
      if (static_cast<int>(v.size()) != n)
        throw std::invalid_argument(std::string("ambient_scale.") + what + ": expected " +
                                    std::to_string(n) + " entries, got " + std::to_string(v.size()));
    };
    switch (kind) {
      case ScaleKind::zero: break;
      case ScaleKind::linear: need(a, "a"); break;
      case ScaleKind::cosine:
        for (const auto& t : terms) need(t.k, "terms[].k");
        break;
      case ScaleKind::log_radial:
        need(center, "center");
        if (!(radius > 0.0)) throw std::invalid_argument("ambient_scale.radius must be positive");
        break;
    }
  }
};

/// omega and its flat gradient Upsilon_a along jets of the ambient point.
template <int K>
struct ScaleJets {
  Jet<K> omega;
  std::vector<Jet<K>> ups;  // n
};

template <int K>
ScaleJets<K> eval_scale(const AmbientScale& s, const std::vector<Jet<K>>& x) {
  const int n = static_cast<int>(x.size());
  ScaleJets<K> r;
  r.ups.assign(static_cast<std::size_t>(n), Jet<K>());
  switch (s.kind) {
    case ScaleKind::zero: break;
    case ScaleKind::linear:
      for (int a = 0; a < n; ++a) {
        r.omega += s.a[a] * x[a];
        r.ups[a] = Jet<K>(s.a[a]);
      }
      break;
    case ScaleKind::cosine:
      for (const auto& t : s.terms) {
        Jet<K> arg(t.phase);
        for (int a = 0; a < n; ++a)
          if (t.k[a] != 0.0) arg += t.k[a] * x[a];
        const Jet<K> c = cos(arg);
        const Jet<K> sn = sin(arg);
        r.omega += t.coeff * c;
        for (int a = 0; a < n; ++a)
          if (t.k[a] != 0.0) r.ups[a] -= (t.coeff * t.k[a]) * sn;
      }
      break;
    case ScaleKind::log_radial: {
      Jet<K> s2;
      std::vector<Jet<K>> d(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        d[a] = x[a] - s.center[a];
        s2.add_product(d[a], d[a]);
      }
      r.omega = std::log(s.radius * s.radius) - log(s2);
      const Jet<K> inv = recip(s2);
      for (int a = 0; a < n; ++a) r.ups[a] = -2.0 * d[a] * inv;
      break;
    }
  }
  return r;
}

/// Flat Hessian d_a Upsilon_b at order M along the ambient point jets.
template <int M, int K>
JetMatrix<M> scale_hessian(const AmbientScale& s, const std::vector<Jet<K>>& xk) {
  static_assert(M <= K);
  const int n = static_cast<int>(xk.size());
  const std::vector<Jet<M>> x = truncate<M>(xk);
  JetMatrix<M> h(n, n);
  switch (s.kind) {
    case ScaleKind::zero:
    case ScaleKind::linear: break;
    case ScaleKind::cosine:
      for (const auto& t : s.terms) {
        Jet<M> arg(t.phase);
        for (int a = 0; a < n; ++a)
          if (t.k[a] != 0.0) arg += t.k[a] * x[a];
        const Jet<M> c = cos(arg);
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            if (t.k[a] != 0.0 && t.k[b] != 0.0) h(a, b) -= (t.coeff * t.k[a] * t.k[b]) * c;
      }
      break;
    case ScaleKind::log_radial: {
      Jet<M> s2;
      std::vector<Jet<M>> d(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        d[a] = x[a] - s.center[a];
        s2.add_product(d[a], d[a]);
      }
      const Jet<M> inv = recip(s2);
      const Jet<M> inv2 = inv * inv;
      for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
          Jet<M> v = 4.0 * (d[a] * d[b]) * inv2;
          if (a == b) v -= 2.0 * inv;
          h(a, b) = v;
          h(b, a) = v;
        }
      break;
    }
  }
  return h;
}

}  // namespace cwe
