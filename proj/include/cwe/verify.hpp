#pragma once

// Pointwise identity batteries at random chart nodes and the named checks
// used by the verify command and the acceptance suite.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cwe/energies.hpp"
#include "cwe/riemannian.hpp"
#include "cwe/surfaces.hpp"
#include "cwe/tractor.hpp"

namespace cwe {

/// Largest value seen and where.
struct Worst {
  double value = 0.0;
  std::array<double, 4> theta{};

  void add(double v, const std::array<double, 4>& t) {
    if (std::isnan(value)) return;
    if (!(v <= value)) {  // NaN wins
      value = v;
      theta = t;
    }
  }
  void merge(const Worst& o) { add(o.value, o.theta); }
};

struct PointwiseResiduals {
  Worst sff_routes;        // |L projector route - L split route|
  Worst codazzi, gauss, ricci;
  Worst normal_projector;  // |nabla N + L + L^dagger|
  Worst checked_projector; // |checked nabla N|
  Worst fialkow;           // |F - closed form|
  Worst contorsion;
  Worst relation_checked;  // pointwise Q1 relations, printed sign
  Worst relation_cross;
  Worst relation_checked_corrected;
  Worst relation_cross_corrected;
  std::size_t nodes = 0;

  void merge(const PointwiseResiduals& o) {
    sff_routes.merge(o.sff_routes);
    codazzi.merge(o.codazzi);
    gauss.merge(o.gauss);
    ricci.merge(o.ricci);
    normal_projector.merge(o.normal_projector);
    checked_projector.merge(o.checked_projector);
    fialkow.merge(o.fialkow);
    contorsion.merge(o.contorsion);
    relation_checked.merge(o.relation_checked);
    relation_cross.merge(o.relation_cross);
    relation_checked_corrected.merge(o.relation_checked_corrected);
    relation_cross_corrected.merge(o.relation_cross_corrected);
    nodes += o.nodes;
  }
};

struct BatteryOptions {
  bool sff = true;
  bool structure = true;
  bool projectors = true;
  bool fialkow = true;
  bool contorsion = true;
  bool relations = true;
  bool flip_schouten = false;
};

template <int K>
double sff_route_difference(const GeometryPointData<K>& d) {
  const auto a = tractor_sff_direct(d);
  const auto b = tractor_sff_split(d);
  double w = 0.0;
  for (int j = 0; j < 4; ++j) w = std::max(w, max_abs(a[j] - b[j]));
  return w;
}

template <int K>
double fialkow_closed_form_difference(const GeometryPointData<K>& d) {
  const auto f = fialkow(d);
  double w = 0.0;
  for (int q = 0; q < 16; ++q) w = std::max(w, max_abs(f.F[q] - f.F_closed[q]));
  return w;
}

/// Residuals at the given chart points (jet order 5 throughout).
inline PointwiseResiduals pointwise_battery(const ImmersionSpec& spec, const std::vector<std::array<double, 4>>& pts,
                                            const BatteryOptions& opt = {}) {
  GeometryOptions gopt;
  gopt.flip_schouten = opt.flip_schouten;
  PointwiseResiduals r;
  for (const auto& th : pts) {
    const auto d = compute_geometry<5>(spec, th, gopt);
    const auto L = tractor_sff_split(d);
    if (opt.sff) r.sff_routes.add(sff_route_difference(d), th);
    if (opt.structure) {
      const auto s = structure_residuals(d, L);
      r.codazzi.add(s.codazzi, th);
      r.gauss.add(s.gauss, th);
      r.ricci.add(s.ricci, th);
    }
    if (opt.projectors) {
      r.normal_projector.add(normal_projector_derivative_residual(d, L), th);
      r.checked_projector.add(checked_normal_projector_residual(d), th);
    }
    if (opt.fialkow) r.fialkow.add(fialkow_closed_form_difference(d), th);
    if (opt.contorsion) r.contorsion.add(contorsion_residual(d), th);
    if (opt.relations) {
      const NodeDensities nd = node_densities(d);
      r.relation_checked.add(std::abs(nd.rel_checked), th);
      r.relation_cross.add(std::abs(nd.rel_cross), th);
      r.relation_checked_corrected.add(std::abs(nd.rel_checked_corrected), th);
      r.relation_cross_corrected.add(std::abs(nd.rel_cross_corrected), th);
    }
    ++r.nodes;
  }
  return r;
}

/// One named check: passes when value < tolerance.
struct CheckResult {
  std::string name;
  std::string identity;  // what is compared
  double value = 0.0;
  double tolerance = 0.0;
  bool gating = true;    // informational checks never fail a run
  std::string detail;

  bool passed() const { return value < tolerance; }
  double ratio() const { return tolerance > 0.0 ? value / tolerance : 0.0; }
};

/// Default scales for pointwise batteries: flat, a tilted linear scale and
/// the working scale of the spec when it is not flat.
inline std::vector<std::pair<std::string, AmbientScale>> default_battery_scales(const ImmersionSpec& spec) {
  std::vector<double> a(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) a[i] = 0.01 * (i + 1) * (i % 2 ? -1.0 : 1.0);
  std::vector<std::pair<std::string, AmbientScale>> s{{"zero", AmbientScale::zero()},
                                                      {"linear", AmbientScale::linear(a)}};
  if (spec.scale.kind != ScaleKind::zero) s.emplace_back("working", spec.scale);
  return s;
}

/// Relative scale of the Graham-Reichert comparison: its largest term.
inline double graham_reichert_scale(const EnergyIntegrals& e) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return 1.0 + std::max({std::abs(32.0 * e.E_GR), std::abs(e.E_Q.value_or(0.0)),
                         16.0 * pi2 * std::abs(std::round(chi_estimate(e.cgb))), std::abs(e.fialkow_term)});
}

}  // namespace cwe
