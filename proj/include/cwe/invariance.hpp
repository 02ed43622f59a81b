#pragma once

// Composing immersions with conformal motions, and the invariance harness:
// energies recomputed for every (motion, scale) pair and compared with the
// unmoved immersion in its own scale.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cwe/conformal.hpp"
#include "cwe/energies.hpp"
#include "cwe/surfaces.hpp"

namespace cwe {

/// The spec followed by m. Guards are checked on a coarse node sample here
/// and again at every node during evaluation.
inline ImmersionSpec apply_motion(const ImmersionSpec& spec, const ConformalMotion& m, int guard_resolution = 8) {
  m.validate(spec.n);
  if (m.singular_point()) {
    const Atlas atlas = make_atlas(spec, guard_resolution);
    for (const auto& ch : atlas.charts)
      for (std::size_t i = 0; i < ch.node_count(); ++i) {
        const auto theta = ch.node(i);
        m.check_guard(eval_point(spec, theta), spec.guard, format_point(theta));
      }
  }
  ImmersionSpec out = spec;
  out.post_maps.push_back(m);
  return out;
}

inline ImmersionSpec apply_motions(ImmersionSpec spec, const std::vector<ConformalMotion>& ms) {
  for (const auto& m : ms) spec = apply_motion(spec, m);
  return spec;
}

/// Translations, rotations and dilations act with constant conformal factor.
inline bool is_similarity(const std::vector<ConformalMotion>& ms) {
  return std::all_of(ms.begin(), ms.end(), [](const ConformalMotion& m) {
    return m.kind == MotionKind::translation || m.kind == MotionKind::rotation || m.kind == MotionKind::dilation;
  });
}

struct NamedMotion {
  std::string label;
  std::vector<ConformalMotion> steps;  // empty for the identity
};

struct NamedScale {
  std::string label;
  AmbientScale scale;
};

inline double relative_drift(double value, double base) { return std::abs(value - base) / (1.0 + std::abs(base)); }

struct InvarianceRow {
  std::string motion;
  std::string scale;
  EnergyIntegrals energies;
  double drift_Q = 0.0;
  double drift_GJMS = 0.0;
  double drift_GR = 0.0;
  bool exact = false;  // similarity motion in the baseline scale

  double max_drift() const { return std::max({drift_Q, drift_GJMS, drift_GR}); }
};

struct InvarianceTable {
  EnergyIntegrals baseline;
  std::vector<InvarianceRow> rows;
  double max_drift = 0.0;
  double max_exact_drift = 0.0;
};

/// Rows in motion-major order. The baseline is the unmoved spec in the first
/// scale; the caller's spec scale is replaced by each listed scale.
inline InvarianceTable invariance_suite(const ImmersionSpec& spec, const std::vector<NamedMotion>& motions,
                                        const std::vector<NamedScale>& scales, const EnergyOptions& opt) {
  if (scales.empty()) throw std::invalid_argument("invariance suite needs at least one scale");
  if (opt.order < required_order(EnergyKind::gjms))
    throw budget_error("invariance suite needs jet order " + std::to_string(required_order(EnergyKind::gjms)));
  InvarianceTable t;
  ImmersionSpec base = spec;
  base.scale = scales.front().scale;
  t.baseline = integrate_energies(base, opt);
  const bool base_flat = scales.front().scale.kind == ScaleKind::zero;
  for (const auto& m : motions) {
    const ImmersionSpec moved = apply_motions(base, m.steps);
    for (std::size_t s = 0; s < scales.size(); ++s) {
      ImmersionSpec run = moved;
      run.scale = scales[s].scale;
      InvarianceRow row;
      row.motion = m.label;
      row.scale = scales[s].label;
      row.energies = integrate_energies(run, opt);
      row.drift_Q = relative_drift(*row.energies.E_Q, *t.baseline.E_Q);
      row.drift_GJMS = relative_drift(*row.energies.E_GJMS, *t.baseline.E_GJMS);
      row.drift_GR = relative_drift(row.energies.E_GR, t.baseline.E_GR);
      row.exact = s == 0 && base_flat && is_similarity(m.steps);
      t.max_drift = std::max(t.max_drift, row.max_drift());
      if (row.exact) t.max_exact_drift = std::max(t.max_exact_drift, row.max_drift());
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

}  // namespace cwe
