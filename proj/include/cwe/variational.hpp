#pragma once

// First variation of the energies along normal perturbation fields: energies
// at a symmetric schedule of amplitudes, a Richardson-extrapolated central
// difference, and a log-log fit of |E(eps) - E(0)| against |eps|.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/energies.hpp"
#include "cwe/perturbation.hpp"
#include "cwe/surfaces.hpp"

namespace cwe {

enum class EnergyTag { E_Q, E_GJMS, E_GR };

inline const char* to_string(EnergyTag t) {
  switch (t) {
    case EnergyTag::E_Q: return "E_Q";
    case EnergyTag::E_GJMS: return "E_GJMS";
    case EnergyTag::E_GR: return "E_GR";
  }
  return "?";
}

inline EnergyTag parse_energy_tag(const std::string& s) {
  if (s == "E_Q") return EnergyTag::E_Q;
  if (s == "E_GJMS") return EnergyTag::E_GJMS;
  if (s == "E_GR") return EnergyTag::E_GR;
  throw std::invalid_argument("unknown energy tag '" + s + "' (expected E_Q, E_GJMS or E_GR)");
}

inline double select_energy(const EnergyIntegrals& e, EnergyTag t) {
  switch (t) {
    case EnergyTag::E_Q: return e.E_Q.value();
    case EnergyTag::E_GJMS: return e.E_GJMS.value();
    case EnergyTag::E_GR: return e.E_GR;
  }
  return 0.0;
}

/// The immersion displaced by eps times the normal projection of phi.
/// Regularity is checked on a coarse node sample and again during evaluation.
inline ImmersionSpec perturb(const ImmersionSpec& spec, const PerturbationField& phi, double eps,
                             int check_resolution = 6) {
  if (!spec.perturbation.empty() && spec.epsilon != 0.0)
    throw std::invalid_argument("perturb: spec already carries a perturbation");
  phi.validate(spec.n);
  ImmersionSpec out = spec;
  out.perturbation = phi;
  out.epsilon = eps;
  if (eps != 0.0) {
    const Atlas atlas = make_atlas(out, check_resolution);
    for (const auto& ch : atlas.charts)
      for (std::size_t i = 0; i < ch.node_count(); ++i) eval_jets<1>(out, ch.node(i));
  }
  return out;
}

/// Projected field phi (ambient components) at theta.
inline std::vector<double> normal_field(const ImmersionSpec& spec, const PerturbationField& phi,
                                        const std::array<double, 4>& theta) {
  ImmersionSpec unit = spec;
  unit.perturbation = phi;
  unit.epsilon = 1.0;
  const auto a = eval_jets<0>(unit, theta, false);
  const auto b = eval_jets<0>(spec, theta, false);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i].value() - b[i].value();
  return v;
}

/// L2 norm of the projected field in the working scale.
inline double perturbation_norm(const ImmersionSpec& spec, const PerturbationField& phi, int resolution,
                                int threads = 1) {
  const Atlas atlas = make_atlas(spec, resolution);
  IntegrateOptions iopt;
  iopt.threads = threads;
  const double n2 = integrate(
      atlas,
      [&](const std::array<double, 4>& theta) {
        const auto x = eval_jets<1>(spec, theta);
        const int n = spec.n;
        const auto s = eval_scale<0>(spec.scale, truncate<0>(x));
        const double G = std::exp(2.0 * s.omega.value());
        Eigen::MatrixXd J(n, 4);
        for (int a = 0; a < n; ++a)
          for (int i = 0; i < 4; ++i) J(a, i) = x[a][1 + i];
        const double dv = G * G * std::sqrt((J.transpose() * J).determinant());
        double p2 = 0.0;
        for (double c : normal_field(spec, phi, theta)) p2 += c * c;
        return dv * G * p2;
      },
      iopt);
  return std::sqrt(n2);
}

/// A few low-degree polynomial terms along random axes, reproducible from seed.
inline PerturbationField random_perturbation(int n, std::uint64_t seed, int terms = 3, int max_degree = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> axis(0, n - 1);
  std::uniform_int_distribution<int> degree(0, max_degree);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  PerturbationField f;
  for (int t = 0; t < terms; ++t) {
    PolyTerm p;
    p.axis = axis(rng);
    p.coeff = coeff(rng);
    p.powers.assign(static_cast<std::size_t>(n), 0);
    const int d = degree(rng);
    for (int k = 0; k < d; ++k) ++p.powers[static_cast<std::size_t>(axis(rng))];
    f.poly.push_back(std::move(p));
  }
  return f;
}

struct VariationOptions {
  std::vector<double> eps{-4e-3, -2e-3, -1e-3, 1e-3, 2e-3, 4e-3};
  double floor = 1e-8;  // |E(eps) - E(0)| below floor * (1 + |E(0)|) counts as noise
  EnergyOptions energy;
};

struct VariationSample {
  double eps = 0.0;
  double value = 0.0;
};

struct VariationResult {
  EnergyTag tag = EnergyTag::E_Q;
  double base = 0.0;
  std::vector<VariationSample> samples;  // in schedule order
  std::vector<std::pair<double, double>> central;  // (h, central difference)
  double derivative = 0.0;             // Richardson extrapolated when h and 2h are both present
  std::optional<double> exponent;      // empty when below the floor
  bool below_floor = false;
};

struct VariationRun {
  EnergyIntegrals base;
  std::vector<std::pair<double, EnergyIntegrals>> perturbed;
};

/// Energies at eps = 0 and at every scheduled amplitude.
inline VariationRun variation_run(const ImmersionSpec& spec, const PerturbationField& phi,
                                  const VariationOptions& opt) {
  if (opt.eps.size() < 4) throw std::invalid_argument("variation: need at least 4 amplitudes");
  for (double e : opt.eps) {
    if (e == 0.0) throw std::invalid_argument("variation: amplitudes must be nonzero");
    if (std::find(opt.eps.begin(), opt.eps.end(), -e) == opt.eps.end())
      throw std::invalid_argument("variation: amplitude schedule must be symmetric around 0");
  }
  if (opt.energy.order + 1 > kMaxJetOrder)
    throw budget_error("perturbed evaluation needs jet order " + std::to_string(opt.energy.order + 1) + " > " +
                       std::to_string(kMaxJetOrder));
  VariationRun r;
  r.base = integrate_energies(spec, opt.energy);
  for (double e : opt.eps) r.perturbed.emplace_back(e, integrate_energies(perturb(spec, phi, e), opt.energy));
  return r;
}

inline VariationResult analyze_variation(const VariationRun& run, EnergyTag tag, double floor = 1e-8) {
  VariationResult r;
  r.tag = tag;
  r.base = select_energy(run.base, tag);
  std::map<double, double> at;
  for (const auto& [e, integrals] : run.perturbed) {
    r.samples.push_back({e, select_energy(integrals, tag)});
    at[e] = r.samples.back().value;
  }
  for (const auto& [e, v] : at)
    if (e > 0.0) r.central.emplace_back(e, (v - at.at(-e)) / (2.0 * e));
  r.derivative = r.central.front().second;
  for (std::size_t i = 0; i < r.central.size(); ++i)
    for (std::size_t j = i + 1; j < r.central.size(); ++j)
      if (std::abs(r.central[j].first - 2.0 * r.central[i].first) < 1e-12 * r.central[j].first) {
        r.derivative = (4.0 * r.central[i].second - r.central[j].second) / 3.0;
        i = j = r.central.size();
      }
  // least-squares slope of log|E(eps) - E(0)| against log|eps|
  const double cut = floor * (1.0 + std::abs(r.base));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& s : r.samples) {
    const double d = std::abs(s.value - r.base);
    if (d <= cut) continue;
    const double x = std::log(std::abs(s.eps));
    const double y = std::log(d);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2 || m * sxx - sx * sx <= 0.0) {
    r.below_floor = true;
  } else {
    r.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return r;
}

inline VariationResult first_variation(EnergyTag tag, const ImmersionSpec& spec, const PerturbationField& phi,
                                       const VariationOptions& opt) {
  return analyze_variation(variation_run(spec, phi, opt), tag, opt.floor);
}

}  // namespace cwe
