#pragma once

// Commands behind the cwe executable: energy, verify and variation. Each
// writes report.json (schema 1) and CSV tables under the output directory,
// prints a summary, and returns the process exit code.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwe/config.hpp"
#include "cwe/energies.hpp"
#include "cwe/invariance.hpp"
#include "cwe/variational.hpp"
#include "cwe/verify.hpp"

namespace cwe {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2 };

struct CliOverrides {
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<int> resolution;
  std::optional<std::uint64_t> seed;
  bool flip_schouten = false;
};

inline void apply_overrides(RunConfig& c, const CliOverrides& o) {
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.threads) {
    if (*o.threads < 0) throw config_error("--threads", "must be >= 0 (0 means all cores)");
    c.threads = *o.threads;
  }
  if (o.resolution) {
    c.resolution = *o.resolution;
    if (c.plateau_resolution && *c.plateau_resolution <= c.resolution) c.plateau_resolution.reset();
  }
  if (o.seed) c.seed = *o.seed;
  if (o.flip_schouten) c.flip_schouten = true;
}

namespace cli_detail {

using json = nlohmann::ordered_json;

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string motion_label(const std::vector<ConformalMotion>& ms) {
  if (ms.empty()) return "identity";
  std::string s;
  for (const auto& m : ms) s += (s.empty() ? "" : "+") + std::string(to_string(m.kind));
  return s;
}

inline EnergyOptions energy_options(const RunConfig& c, int resolution) {
  EnergyOptions o;
  o.resolution = resolution;
  o.order = c.order;
  o.threads = c.threads;
  o.flip_schouten = c.flip_schouten;
  return o;
}

inline json energies_json(const EnergyIntegrals& e) {
  json j;
  j["E_Q"] = optional_number(e.E_Q);
  j["E_Q_raw"] = optional_number(e.E_Q_raw);
  j["E_GJMS"] = optional_number(e.E_GJMS);
  j["E_GR"] = e.E_GR;
  j["quartic"] = e.quartic;
  j["quartic_tractor"] = optional_number(e.quartic_tractor);
  j["cgb"] = e.cgb;
  j["chi_est"] = chi_estimate(e.cgb);
  j["volume"] = e.volume;
  j["fialkow_term"] = e.fialkow_term;
  return j;
}

inline json residuals_json(const EnergyIntegrals& e) {
  const IdentityResiduals r = identity_residuals(e);
  json j;
  j["energy_comparison"] = optional_number(r.energy_comparison);
  j["energy_comparison_corrected"] = optional_number(r.energy_comparison_corrected);
  j["q_forms"] = optional_number(r.q_forms);
  j["graham_reichert"] = optional_number(r.graham_reichert);
  j["quartic_routes"] = optional_number(r.quartic_routes);
  j["chi_integrality"] = r.chi_integrality;
  j["relation_checked_l1"] = optional_number(e.rel_checked_l1);
  j["relation_cross_l1"] = optional_number(e.rel_cross_l1);
  j["relation_checked_corrected_l1"] = optional_number(e.rel_checked_corrected_l1);
  j["relation_cross_corrected_l1"] = optional_number(e.rel_cross_corrected_l1);
  return j;
}

inline bool all_finite(const json& j) {
  if (j.is_number()) return std::isfinite(j.get<double>());
  if (j.is_structured())
    for (const auto& v : j)
      if (!all_finite(v)) return false;
  return true;
}

inline json report_header(const RunConfig& c, const std::string& command) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["label"] = c.label;
  j["config"] = c.source;
  j["effective"] = {{"resolution", c.resolution},
                    {"plateau_resolution", c.plateau_resolution ? json(*c.plateau_resolution) : json(nullptr)},
                    {"jet_order", c.order},
                    {"seed", c.seed},
                    {"flip_schouten", c.flip_schouten}};
  return j;
}

inline std::filesystem::path prepare_output(const RunConfig& c) {
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir / "tables");
  return dir;
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

inline const char* energy_csv_header() {
  return "family,scale,transform,resolution,E_Q,E_Q_raw,E_GJMS,E_GR,quartic,cgb,chi_est";
}

inline std::string energy_csv_row(const std::string& family, const std::string& scale, const std::string& transform,
                                  const EnergyIntegrals& e) {
  std::ostringstream os;
  os << family << "," << scale << "," << transform << "," << e.resolution << "," << csv_optional(e.E_Q) << ","
     << csv_optional(e.E_Q_raw) << "," << csv_optional(e.E_GJMS) << "," << csv_number(e.E_GR) << ","
     << csv_number(e.quartic) << "," << csv_number(e.cgb) << "," << csv_number(chi_estimate(e.cgb));
  return os.str();
}

inline std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void print_check(std::ostream& os, const CheckResult& c) {
  const char* tag = c.passed() ? "PASS" : (c.gating ? "FAIL" : "INFO");
  os << tag << "  " << std::left << std::setw(40) << c.name << std::right << " " << std::scientific
     << std::setprecision(3) << c.value << " < " << c.tolerance << std::defaultfloat << "  " << c.identity;
  if (!c.detail.empty()) os << " [" << c.detail << "]";
  os << "\n";
}

inline json check_json(const CheckResult& c) {
  json j;
  j["name"] = c.name;
  j["identity"] = c.identity;
  j["value"] = c.value;
  j["tolerance"] = c.tolerance;
  j["gating"] = c.gating;
  j["passed"] = c.passed();
  j["detail"] = c.detail;
  return j;
}

}  // namespace cli_detail

/// Integrates the energies, writes report.json and tables/energies.csv.
inline int cmd_energy(const RunConfig& c, std::ostream& os) {
  using namespace cli_detail;
  validate_config(c);
  const EnergyIntegrals e = integrate_energies(c.spec, energy_options(c, c.resolution));
  json rep = report_header(c, "energy");
  rep["quadrature"] = {{"resolution", e.resolution}, {"nodes", e.nodes}, {"jet_order", e.order}};
  rep["energies"] = energies_json(e);
  rep["identity_residuals"] = residuals_json(e);
  const double chi = chi_estimate(e.cgb);
  rep["chi_flagged"] = std::abs(chi - std::round(chi)) > 0.01;
  if (c.plateau_resolution) {
    const EnergyIntegrals p = integrate_energies(c.spec, energy_options(c, *c.plateau_resolution));
    auto delta = [](const std::optional<double>& a, const std::optional<double>& b) {
      return a && b ? json(std::abs(*a - *b)) : json(nullptr);
    };
    const IdentityResiduals ra = identity_residuals(e), rb = identity_residuals(p);
    rep["quadrature"]["plateau"] = {
        {"resolution", p.resolution},
        {"nodes", p.nodes},
        {"deltas",
         {{"E_Q", delta(e.E_Q, p.E_Q)},
          {"E_GJMS", delta(e.E_GJMS, p.E_GJMS)},
          {"E_GR", std::abs(e.E_GR - p.E_GR)},
          {"quartic", std::abs(e.quartic - p.quartic)},
          {"cgb", std::abs(e.cgb - p.cgb)},
          {"energy_comparison", delta(ra.energy_comparison, rb.energy_comparison)},
          {"energy_comparison_corrected", delta(ra.energy_comparison_corrected, rb.energy_comparison_corrected)}}}};
  }
  const bool finite = all_finite(rep["energies"]) && all_finite(rep["identity_residuals"]);
  rep["all_finite"] = finite;

  const auto dir = prepare_output(c);
  write_json(dir / "report.json", rep);
  {
    std::ofstream csv(dir / "tables" / "energies.csv");
    csv << energy_csv_header() << "\n"
        << energy_csv_row(to_string(c.spec.family), to_string(c.spec.scale.kind), motion_label(c.spec.post_maps), e)
        << "\n";
  }
  os << "energies (" << to_string(c.spec.family) << ", resolution " << e.resolution << ", " << e.nodes << " nodes)\n";
  for (auto it = rep["energies"].begin(); it != rep["energies"].end(); ++it)
    os << "  " << std::left << std::setw(16) << it.key() << std::right << " "
       << (it.value().is_null() ? std::string("n/a") : format_value(it.value().get<double>())) << "\n";
  os << "identity residuals\n";
  for (auto it = rep["identity_residuals"].begin(); it != rep["identity_residuals"].end(); ++it)
    os << "  " << std::left << std::setw(30) << it.key() << std::right << " "
       << (it.value().is_null() ? std::string("n/a") : format_value(it.value().get<double>())) << "\n";
  os << "report: " << (dir / "report.json").string() << "\n";
  return finite ? exit_ok : exit_failure;
}

/// The identity battery; exit 1 when any gating check fails.
inline int cmd_verify(const RunConfig& c, std::ostream& os) {
  using namespace cli_detail;
  validate_config(c);
  if (c.order < 5) throw config_error("jet_order", "verify needs jet order 5");
  std::vector<CheckResult> checks;
  const Tolerances& t = c.tol;

  std::vector<std::pair<std::string, AmbientScale>> scales;
  if (c.verify.scales.empty()) {
    scales = default_battery_scales(c.spec);
  } else {
    for (const auto& s : c.verify.scales) scales.emplace_back(s.label, s.scale);
  }
  BatteryOptions bo;
  bo.flip_schouten = c.flip_schouten;
  const bool printed = c.verify.lemma_sign == LemmaSign::printed;
  for (const auto& [label, scale] : scales) {
    ImmersionSpec s = c.spec;
    s.scale = scale;
    const auto pts = random_chart_points(s, c.verify.nodes, c.seed);
    const PointwiseResiduals r = pointwise_battery(s, pts, bo);
    auto add = [&](const std::string& name, const std::string& identity, const Worst& w, double tol,
                   bool gating = true) {
      checks.push_back({name + "[" + label + "]", identity, w.value, tol, gating, format_point(w.theta)});
    };
    add("sff_routes", "L from projectors = L from splitting", r.sff_routes, t.sff_routes);
    add("codazzi", "checked curl of L = 0", r.codazzi, t.structure);
    add("gauss", "tangent curvature = L^T h L antisymmetrized", r.gauss, t.structure);
    add("ricci", "normal curvature = L L^dagger antisymmetrized", r.ricci, t.structure);
    add("normal_projector", "nabla N + L + L^dagger = 0", r.normal_projector, t.projector);
    add("checked_projector", "checked nabla N = 0", r.checked_projector, t.projector);
    add("fialkow_closed_form", "F = closed form in IIo", r.fialkow, t.structure);
    add("contorsion", "checked curvature = intrinsic + contorsion terms", r.contorsion, t.structure);
    add("relation_checked", "L.Q1 L - L.Q1-check L + quartic pair = 0", r.relation_checked, t.relations, printed);
    add("relation_cross", "cross term + quartic pair = 0", r.relation_cross, t.relations, printed);
    add("relation_checked_corrected", "L.Q1 L - L.Q1-check L - quartic pair = 0", r.relation_checked_corrected,
        t.relations, !printed);
    add("relation_cross_corrected", "cross term - quartic pair = 0", r.relation_cross_corrected, t.relations,
        !printed);
  }

  json rep = report_header(c, "verify");
  if (c.verify.energies) {
    const EnergyIntegrals e = integrate_energies(c.spec, energy_options(c, c.resolution));
    const IdentityResiduals r = identity_residuals(e);
    const double sg = 1.0 + std::abs(*e.E_GJMS);
    const double chi = chi_estimate(e.cgb);
    if (c.spec.family == Family::round_sphere) {
      checks.push_back({"umbilic_E_Q", "E_Q of an umbilic immersion = 0", std::abs(*e.E_Q), t.umbilic, true, ""});
      checks.push_back({"umbilic_E_GJMS", "E_GJMS of an umbilic immersion = 0", std::abs(*e.E_GJMS), t.umbilic, true, ""});
    }
    checks.push_back({"energy_comparison", "|E_GJMS + 2 E_Q - quartic| / (1 + |E_GJMS|)", *r.energy_comparison / sg,
                      t.energy_comparison, printed, ""});
    checks.push_back({"energy_comparison_corrected", "|E_GJMS + 2 E_Q + quartic| / (1 + |E_GJMS|)",
                      *r.energy_comparison_corrected / sg, t.energy_comparison, !printed, ""});
    checks.push_back({"q_forms", "|E_Q raw - E_Q by parts| / (1 + |E_Q|)", *r.q_forms / (1.0 + std::abs(*e.E_Q)),
                      t.q_forms, true, ""});
    checks.push_back({"graham_reichert", "32 E_GR - E_Q - 16 pi^2 chi - int(-4|F|^2 + 4f^2 - |w|^2/2), relative",
                      *r.graham_reichert / graham_reichert_scale(e), t.graham_reichert, true, ""});
    checks.push_back({"chi_integrality", "chi_est within tolerance of an integer", r.chi_integrality, t.chi, true,
                      "chi_est=" + format_value(chi)});
    checks.push_back({"quartic_routes", "quartic from IIo = quartic from tractor traces, relative",
                      *r.quartic_routes / (1.0 + e.quartic), t.relations, true, ""});
    rep["energies"] = energies_json(e);
    rep["identity_residuals"] = residuals_json(e);
  }

  if (c.invariance) {
    const InvarianceBlock& b = *c.invariance;
    const InvarianceTable tab =
        invariance_suite(c.spec, b.motions, b.scales, energy_options(c, b.resolution.value_or(c.resolution)));
    checks.push_back({"invariance", "max relative drift of E_Q, E_GJMS, E_GR", tab.max_drift, t.invariance, true, ""});
    checks.push_back({"invariance_similarity", "max drift for similarity motions in the baseline scale",
                      tab.max_exact_drift, t.rigid, true, ""});
    const auto dir = prepare_output(c);
    std::ofstream csv(dir / "tables" / "invariance.csv");
    csv << energy_csv_header() << ",drift_E_Q,drift_E_GJMS,drift_E_GR\n";
    json rows = json::array();
    for (const auto& row : tab.rows) {
      csv << energy_csv_row(to_string(c.spec.family), row.scale, row.motion, row.energies) << ","
          << csv_number(row.drift_Q) << "," << csv_number(row.drift_GJMS) << "," << csv_number(row.drift_GR) << "\n";
      rows.push_back({{"motion", row.motion},
                      {"scale", row.scale},
                      {"drift_E_Q", row.drift_Q},
                      {"drift_E_GJMS", row.drift_GJMS},
                      {"drift_E_GR", row.drift_GR},
                      {"similarity", row.exact}});
    }
    rep["invariance"] = rows;
  }

  const CheckResult* worst = nullptr;
  bool ok = true;
  json arr = json::array();
  os << "verify (" << to_string(c.spec.family) << ", " << c.verify.nodes << " nodes per scale"
     << (c.flip_schouten ? ", Schouten sign flipped" : "") << ")\n";
  for (const auto& ch : checks) {
    print_check(os, ch);
    arr.push_back(check_json(ch));
    if (ch.gating && !ch.passed()) {
      ok = false;
      if (!worst || ch.ratio() > worst->ratio() || std::isnan(ch.value)) worst = &ch;
    }
  }
  rep["checks"] = arr;
  rep["passed"] = ok;
  const auto dir = prepare_output(c);
  write_json(dir / "report.json", rep);
  if (!ok) {
    os << "verify FAILED; worst offender: " << worst->name << " = " << format_value(worst->value) << " (tolerance "
       << format_value(worst->tolerance) << ")\n";
    return exit_failure;
  }
  os << "verify passed (" << checks.size() << " checks)\n";
  return exit_ok;
}

/// Energies along eps * phi for every configured field; CSV of (eps, E).
inline int cmd_variation(const RunConfig& c, std::ostream& os) {
  using namespace cli_detail;
  validate_config(c);
  if (!c.variation) throw config_error("variation", "missing required block");
  const VariationBlock& b = *c.variation;
  std::vector<PerturbationField> fields = b.fields;
  for (int i = 0; i < b.random_fields; ++i) fields.push_back(random_perturbation(c.spec.n, c.seed + i));
  const int res = b.resolution.value_or(c.resolution);
  VariationOptions vo = b.options;
  vo.energy = energy_options(c, res);

  const auto dir = prepare_output(c);
  std::ofstream csv(dir / "tables" / "variation.csv");
  csv << "field,eps,E_Q,E_GJMS,E_GR\n";
  json fits = json::array();
  bool finite = true;
  const Tolerances& t = c.tol;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const double norm = perturbation_norm(c.spec, fields[f], res, c.threads);
    const VariationRun run = variation_run(c.spec, fields[f], vo);
    auto row = [&](double eps, const EnergyIntegrals& e) {
      csv << f << "," << csv_number(eps) << "," << csv_optional(e.E_Q) << "," << csv_optional(e.E_GJMS) << ","
          << csv_number(e.E_GR) << "\n";
    };
    row(0.0, run.base);
    for (const auto& [eps, e] : run.perturbed) row(eps, e);
    for (EnergyTag tag : b.energies) {
      const VariationResult r = analyze_variation(run, tag, vo.floor);
      const bool critical =
          std::abs(r.derivative) < t.derivative * norm && (r.below_floor || std::abs(*r.exponent - 2.0) < t.exponent);
      finite = finite && std::isfinite(r.derivative);
      fits.push_back({{"field", f},
                      {"energy", to_string(tag)},
                      {"norm", norm},
                      {"base", r.base},
                      {"derivative", r.derivative},
                      {"exponent", r.exponent ? json(*r.exponent) : json(nullptr)},
                      {"below_floor", r.below_floor},
                      {"critical", critical}});
      os << "field " << f << "  " << std::left << std::setw(7) << to_string(tag) << std::right
         << " dE/deps = " << std::scientific << std::setprecision(3) << r.derivative << "  |phi| = " << norm
         << std::defaultfloat << "  exponent = "
         << (r.exponent ? format_value(*r.exponent) : std::string("below floor"))
         << (critical ? "  critical" : "") << "\n";
    }
  }
  json rep = report_header(c, "variation");
  rep["resolution"] = res;
  rep["eps"] = vo.eps;
  rep["fits"] = fits;
  rep["all_finite"] = finite;
  write_json(dir / "report.json", rep);
  os << "report: " << (dir / "report.json").string() << "\n";
  return finite ? exit_ok : exit_failure;
}

/// Loads the config, applies overrides and runs the named command. Config
/// and spec errors map to exit 2, other runtime errors to exit 1.
inline int run_command(const std::string& command, const std::string& config_path, const CliOverrides& o,
                       std::ostream& os, std::ostream& err) {
  try {
    RunConfig c = load_config(config_path);
    apply_overrides(c, o);
    if (command == "energy") return cmd_energy(c, os);
    if (command == "verify") return cmd_verify(c, os);
    if (command == "variation") return cmd_variation(c, os);
    err << "unknown command '" << command << "'\n";
    return exit_config;
  } catch (const config_error& e) {
    err << "config error at " << e.what() << "\n";
    return exit_config;
  } catch (const guard_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const regularity_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const budget_error& e) {
    err << "config error at jet_order: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

}  // namespace cwe
