#pragma once

// Normal perturbation fields used for first-variation experiments. A field
// is a table of ambient-valued terms; it is projected onto the normal space
// of the unperturbed immersion at evaluation time.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/jet.hpp"

namespace cwe {

enum class TrigKind { cos, sin };

// coeff * prod_b x_b^{powers[b]} along ambient axis `axis`, where x is the
// unperturbed ambient point.
struct PolyTerm {
  int axis = 0;
  double coeff = 0.0;
  std::vector<int> powers;
};

// coeff * prod_i f_i(k_i theta_i) along ambient axis `axis`.
struct TrigTerm {
  int axis = 0;
  double coeff = 0.0;
  std::array<int, 4> k{};
  std::array<TrigKind, 4> fn{TrigKind::cos, TrigKind::cos, TrigKind::cos, TrigKind::cos};
};

struct PerturbationField {
  std::vector<PolyTerm> poly;
  std::vector<TrigTerm> trig;
  double radial = 0.0;  // radial * x / |x|

  bool empty() const { return poly.empty() && trig.empty() && radial == 0.0; }

  int fourier_degree() const {
    int d = 0;
    for (const auto& t : trig) {
      int s = 0;
      for (int v : t.k) s += std::abs(v);
      d = std::max(d, s);
    }
    return d;
  }

  void validate(int n) const {
    for (const auto& t : poly) {
      if (t.axis < 0 || t.axis >= n) throw std::invalid_argument("perturbation poly term axis out of range");
      if (static_cast<int>(t.powers.size()) != n)
        throw std::invalid_argument("perturbation poly term needs " + std::to_string(n) + " powers");
      for (int p : t.powers)
        if (p < 0) throw std::invalid_argument("perturbation poly term has a negative power");
    }
    for (const auto& t : trig)
      if (t.axis < 0 || t.axis >= n) throw std::invalid_argument("perturbation trig term axis out of range");
  }
};

/// c * prod_i f_i(k_i theta_i) with theta given as jets.
template <int K>
Jet<K> trig_product(double coeff, const std::array<int, 4>& k, const std::array<TrigKind, 4>& fn,
                    const std::array<Jet<K>, 4>& theta) {
  Jet<K> r(coeff);
  for (int i = 0; i < 4; ++i) {
    if (k[i] == 0 && fn[i] == TrigKind::cos) continue;
    const Jet<K> arg = static_cast<double>(k[i]) * theta[i];
    r = r * (fn[i] == TrigKind::cos ? cos(arg) : sin(arg));
  }
  return r;
}

/// Un-projected ambient field psi at the unperturbed point x.
template <int K>
std::vector<Jet<K>> eval_perturbation(const PerturbationField& f, const std::vector<Jet<K>>& x,
                                      const std::array<Jet<K>, 4>& theta) {
  const int n = static_cast<int>(x.size());
  std::vector<Jet<K>> psi(x.size());
  for (const auto& t : f.poly) {
    Jet<K> m(t.coeff);
    for (int b = 0; b < n; ++b)
      for (int p = 0; p < t.powers[b]; ++p) m = m * x[b];
    psi[t.axis] += m;
  }
  for (const auto& t : f.trig) psi[t.axis] += trig_product(t.coeff, t.k, t.fn, theta);
  if (f.radial != 0.0) {
    Jet<K> r2;
    for (int a = 0; a < n; ++a) r2.add_product(x[a], x[a]);
    const Jet<K> inv = f.radial * pow(r2, -0.5);
    for (int a = 0; a < n; ++a) psi[a] += inv * x[a];
  }
  return psi;
}

}  // namespace cwe
