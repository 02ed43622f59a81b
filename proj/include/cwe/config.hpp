#pragma once

// Run configuration read from JSON. Every validation error names the
// offending field by its dotted path.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwe/energies.hpp"
#include "cwe/invariance.hpp"
#include "cwe/surfaces.hpp"
#include "cwe/variational.hpp"

namespace cwe {

class config_error : public std::invalid_argument {
 public:
  config_error(const std::string& path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Tolerances {
  double umbilic = 1e-10;        // energies of umbilic immersions
  double sff_routes = 1e-9;      // projector route vs split route of L
  double structure = 1e-8;       // Gauss, Codazzi, Ricci
  double projector = 1e-9;       // nabla N + L + L^dagger, checked nabla N
  double relations = 1e-8;       // pointwise Q1 relations
  double energy_comparison = 1e-5;  // relative to 1 + |E_GJMS|
  double plateau = 1e-6;         // change of a residual between resolutions, same scaling
  double graham_reichert = 1e-5;  // relative to the largest term
  double chi = 1e-6;
  double q_forms = 1e-5;         // relative to 1 + |E_Q|
  double invariance = 1e-5;
  double rigid = 1e-9;
  double derivative = 1e-5;      // |dE/deps| relative to the field norm
  double exponent = 0.05;        // band around 2
  double q1_oracle = 1e-10;
  double q1_pairing = 1e-5;
};

enum class LemmaSign { corrected, printed };

struct InvarianceBlock {
  std::vector<NamedMotion> motions;
  std::vector<NamedScale> scales;
  std::optional<int> resolution;
};

struct VariationBlock {
  std::vector<EnergyTag> energies{EnergyTag::E_Q, EnergyTag::E_GJMS, EnergyTag::E_GR};
  std::vector<PerturbationField> fields;
  int random_fields = 0;  // additional seeded random polynomial fields
  VariationOptions options;
  std::optional<int> resolution;
};

struct VerifyBlock {
  int nodes = 200;
  std::vector<NamedScale> scales;  // pointwise batteries run in each; default {zero, spec scale}
  LemmaSign lemma_sign = LemmaSign::corrected;
  bool energies = true;
};

struct RunConfig {
  nlohmann::ordered_json source;  // the parsed file, echoed into reports
  std::string label;
  ImmersionSpec spec;
  int resolution = 16;
  std::optional<int> plateau_resolution;
  int order = 5;
  std::vector<EnergyKind> energies{EnergyKind::q_energy, EnergyKind::gjms, EnergyKind::graham_reichert,
                                   EnergyKind::euler};
  int threads = 1;
  std::uint64_t seed = 1;
  bool flip_schouten = false;
  std::string out_dir = "out";
  Tolerances tol;
  std::optional<InvarianceBlock> invariance;
  std::optional<VariationBlock> variation;
  VerifyBlock verify;
};

namespace config_detail {

using json = nlohmann::ordered_json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string at_index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline const json& require(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object()) throw config_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw config_error(join(path, key), "missing required field");
  return *it;
}

inline const json* optional(const json& j, const std::string& key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw config_error(path, "expected a number");
  return v.get<double>();
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw config_error(path, "expected an integer");
  return v.get<int>();
}

inline std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) throw config_error(path, "expected a string");
  return v.get<std::string>();
}

inline bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw config_error(path, "expected true or false");
  return v.get<bool>();
}

inline const json& array(const json& v, const std::string& path) {
  if (!v.is_array()) throw config_error(path, "expected an array");
  return v;
}

inline std::vector<double> numbers(const json& v, const std::string& path, std::optional<std::size_t> size = {}) {
  array(v, path);
  if (size && v.size() != *size)
    throw config_error(path, "expected " + std::to_string(*size) + " entries, got " + std::to_string(v.size()));
  std::vector<double> r;
  for (std::size_t i = 0; i < v.size(); ++i) r.push_back(number(v[i], at_index(path, i)));
  return r;
}

/// Zero-based axis from a one-based config entry.
inline int axis(const json& v, const std::string& path, int n) {
  const int a = integer(v, path);
  if (a < 1 || a > n) throw config_error(path, "axis must lie in 1.." + std::to_string(n));
  return a - 1;
}

inline std::array<int, 4> wave_numbers(const json& v, const std::string& path) {
  array(v, path);
  if (v.size() != 4) throw config_error(path, "expected 4 wave numbers");
  std::array<int, 4> k{};
  for (std::size_t i = 0; i < 4; ++i) k[i] = integer(v[i], at_index(path, i));
  return k;
}

inline std::array<TrigKind, 4> trig_kinds(const json* v, const std::string& path) {
  std::array<TrigKind, 4> f{TrigKind::cos, TrigKind::cos, TrigKind::cos, TrigKind::cos};
  if (!v) return f;
  array(*v, path);
  if (v->size() != 4) throw config_error(path, "expected 4 entries");
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string s = string((*v)[i], at_index(path, i));
    if (s == "cos") f[i] = TrigKind::cos;
    else if (s == "sin") f[i] = TrigKind::sin;
    else throw config_error(at_index(path, i), "expected \"cos\" or \"sin\"");
  }
  return f;
}

inline std::array<double, 4> radii(const json& v, const std::string& path) {
  const auto r = numbers(v, path, 4);
  for (std::size_t i = 0; i < 4; ++i)
    if (!(r[i] > 0.0)) throw config_error(at_index(path, i), "radius must be positive");
  return {r[0], r[1], r[2], r[3]};
}

inline AmbientScale parse_scale(const json& j, const std::string& path, int n) {
  const std::string kind = string(require(j, path, "kind"), join(path, "kind"));
  if (kind == "zero") return AmbientScale::zero();
  if (kind == "linear") return AmbientScale::linear(numbers(require(j, path, "a"), join(path, "a"), n));
  if (kind == "cosine") {
    const std::string tp = join(path, "terms");
    const json& terms = array(require(j, path, "terms"), tp);
    std::vector<CosineTerm> ts;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string p = at_index(tp, i);
      CosineTerm t;
      t.coeff = number(require(terms[i], p, "coeff"), join(p, "coeff"));
      t.k = numbers(require(terms[i], p, "k"), join(p, "k"), n);
      if (const json* ph = optional(terms[i], "phase")) t.phase = number(*ph, join(p, "phase"));
      ts.push_back(std::move(t));
    }
    return AmbientScale::cosine(std::move(ts));
  }
  if (kind == "log_radial") {
    const double r = number(require(j, path, "radius"), join(path, "radius"));
    if (!(r > 0.0)) throw config_error(join(path, "radius"), "must be positive");
    return AmbientScale::log_radial(numbers(require(j, path, "center"), join(path, "center"), n), r);
  }
  throw config_error(join(path, "kind"), "unknown scale kind '" + kind + "'");
}

inline ConformalMotion parse_motion(const json& j, const std::string& path, int n) {
  const std::string kind = string(require(j, path, "kind"), join(path, "kind"));
  ConformalMotion m;
  if (kind == "translation") {
    m = ConformalMotion::translation(numbers(require(j, path, "vector"), join(path, "vector"), n));
  } else if (kind == "rotation") {
    if (const json* pl = optional(j, "plane")) {
      const std::string pp = join(path, "plane");
      array(*pl, pp);
      if (pl->size() != 2) throw config_error(pp, "expected two axes");
      const int a = axis((*pl)[0], at_index(pp, 0), n);
      const int b = axis((*pl)[1], at_index(pp, 1), n);
      if (a == b) throw config_error(pp, "axes must differ");
      m = ConformalMotion::plane_rotation(n, a, b, number(require(j, path, "angle"), join(path, "angle")));
    } else {
      const std::string mp = join(path, "matrix");
      const json& rows = array(require(j, path, "matrix"), mp);
      if (static_cast<int>(rows.size()) != n) throw config_error(mp, "expected " + std::to_string(n) + " rows");
      Matrix<double> r(n, n);
      for (int a = 0; a < n; ++a) {
        const auto row = numbers(rows[a], at_index(mp, a), n);
        for (int b = 0; b < n; ++b) r(a, b) = row[b];
      }
      m = ConformalMotion::rotation(std::move(r));
    }
  } else if (kind == "dilation") {
    m = ConformalMotion::dilation(number(require(j, path, "factor"), join(path, "factor")));
  } else if (kind == "inversion") {
    m = ConformalMotion::inversion(numbers(require(j, path, "center"), join(path, "center"), n),
                                   number(require(j, path, "radius"), join(path, "radius")));
  } else if (kind == "special_conformal") {
    m = ConformalMotion::special_conformal(numbers(require(j, path, "b"), join(path, "b"), n));
  } else {
    throw config_error(join(path, "kind"), "unknown motion kind '" + kind + "'");
  }
  try {
    m.validate(n);
  } catch (const std::invalid_argument& e) {
    throw config_error(path, e.what());
  }
  return m;
}

inline std::vector<ConformalMotion> parse_motions(const json& j, const std::string& path, int n) {
  array(j, path);
  std::vector<ConformalMotion> ms;
  for (std::size_t i = 0; i < j.size(); ++i) ms.push_back(parse_motion(j[i], at_index(path, i), n));
  return ms;
}

inline PerturbationField parse_field(const json& j, const std::string& path, int n) {
  PerturbationField f;
  if (const json* poly = optional(j, "poly")) {
    const std::string pp = join(path, "poly");
    array(*poly, pp);
    for (std::size_t i = 0; i < poly->size(); ++i) {
      const std::string p = at_index(pp, i);
      PolyTerm t;
      t.axis = axis(require((*poly)[i], p, "axis"), join(p, "axis"), n);
      t.coeff = number(require((*poly)[i], p, "coeff"), join(p, "coeff"));
      const json& pw = array(require((*poly)[i], p, "powers"), join(p, "powers"));
      if (static_cast<int>(pw.size()) != n) throw config_error(join(p, "powers"), "expected " + std::to_string(n) + " entries");
      for (std::size_t b = 0; b < pw.size(); ++b) {
        const int e = integer(pw[b], at_index(join(p, "powers"), b));
        if (e < 0) throw config_error(at_index(join(p, "powers"), b), "powers must be non-negative");
        t.powers.push_back(e);
      }
      f.poly.push_back(std::move(t));
    }
  }
  if (const json* trig = optional(j, "trig")) {
    const std::string tp = join(path, "trig");
    array(*trig, tp);
    for (std::size_t i = 0; i < trig->size(); ++i) {
      const std::string p = at_index(tp, i);
      TrigTerm t;
      t.axis = axis(require((*trig)[i], p, "axis"), join(p, "axis"), n);
      t.coeff = number(require((*trig)[i], p, "coeff"), join(p, "coeff"));
      t.k = wave_numbers(require((*trig)[i], p, "k"), join(p, "k"));
      t.fn = trig_kinds(optional((*trig)[i], "fn"), join(p, "fn"));
      f.trig.push_back(t);
    }
  }
  if (const json* r = optional(j, "radial")) f.radial = number(*r, join(path, "radial"));
  if (f.empty()) throw config_error(path, "perturbation field has no terms");
  return f;
}

inline ImmersionSpec parse_immersion(const json& j, const std::string& path) {
  ImmersionSpec s;
  const std::string family = string(require(j, path, "family"), join(path, "family"));
  s.n = integer(require(j, path, "n"), join(path, "n"));
  if (s.n < 5) throw config_error(join(path, "n"), "ambient dimension must be at least 5");
  const std::string pp = join(path, "params");
  const json* params = optional(j, "params");
  static const json empty = json::object();
  const json& pj = params ? *params : empty;
  if (family == "round_sphere") {
    s.family = Family::round_sphere;
    s.radius = number(require(pj, pp, "radius"), join(pp, "radius"));
    if (!(s.radius > 0.0)) throw config_error(join(pp, "radius"), "must be positive");
  } else if (family == "product_torus" || family == "trig_graph_torus") {
    s.family = family == "product_torus" ? Family::product_torus : Family::trig_graph_torus;
    if (const json* b = optional(pj, "base")) {
      const std::string v = string(*b, join(pp, "base"));
      if (v == "product") s.base = TorusBase::product;
      else if (v == "plane") s.base = TorusBase::plane;
      else throw config_error(join(pp, "base"), "expected \"product\" or \"plane\"");
    }
    if (s.family == Family::product_torus || s.base == TorusBase::product) {
      s.radii = radii(require(pj, pp, "radii"), join(pp, "radii"));
      if (s.n < 8) throw config_error(join(path, "n"), "product base needs n >= 8");
    }
    if (s.family == Family::trig_graph_torus) {
      const std::string dp = join(pp, "displacements");
      const json& ds = array(require(pj, pp, "displacements"), dp);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string p = at_index(dp, i);
        DisplacementTerm t;
        t.axis = axis(require(ds[i], p, "axis"), join(p, "axis"), s.n);
        t.coeff = number(require(ds[i], p, "coeff"), join(p, "coeff"));
        t.k = wave_numbers(require(ds[i], p, "k"), join(p, "k"));
        t.fn = trig_kinds(optional(ds[i], "fn"), join(p, "fn"));
        s.displacements.push_back(t);
      }
    }
  } else {
    throw config_error(join(path, "family"), "unknown family '" + family + "'");
  }
  if (const json* g = optional(j, "guard")) {
    s.guard = number(*g, join(path, "guard"));
    if (!(s.guard > 0.0)) throw config_error(join(path, "guard"), "must be positive");
  }
  if (const json* m = optional(j, "motions")) s.post_maps = parse_motions(*m, join(path, "motions"), s.n);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(path, e.what());
  }
  return s;
}

inline EnergyKind parse_energy_kind(const json& v, const std::string& path) {
  const std::string s = string(v, path);
  if (s == "E_Q") return EnergyKind::q_energy;
  if (s == "E_GJMS") return EnergyKind::gjms;
  if (s == "E_GR") return EnergyKind::graham_reichert;
  if (s == "cgb") return EnergyKind::euler;
  if (s == "structure") return EnergyKind::structure;
  throw config_error(path, "unknown energy '" + s + "'");
}

inline std::vector<NamedScale> parse_named_scales(const json& j, const std::string& path, int n) {
  array(j, path);
  std::vector<NamedScale> r;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = at_index(path, i);
    NamedScale s;
    s.label = string(require(j[i], p, "label"), join(p, "label"));
    s.scale = parse_scale(j[i], p, n);
    r.push_back(std::move(s));
  }
  return r;
}

inline void parse_tolerances(const json& j, const std::string& path, Tolerances& t) {
  if (!j.is_object()) throw config_error(path, "expected an object");
  const std::pair<const char*, double*> fields[] = {
      {"umbilic", &t.umbilic},         {"sff_routes", &t.sff_routes},
      {"structure", &t.structure},     {"projector", &t.projector},
      {"relations", &t.relations},     {"energy_comparison", &t.energy_comparison},
      {"plateau", &t.plateau},         {"graham_reichert", &t.graham_reichert},
      {"chi", &t.chi},                 {"q_forms", &t.q_forms},
      {"invariance", &t.invariance},   {"rigid", &t.rigid},
      {"derivative", &t.derivative},   {"exponent", &t.exponent},
      {"q1_oracle", &t.q1_oracle},     {"q1_pairing", &t.q1_pairing}};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& [name, ptr] : fields)
      if (it.key() == name) {
        *ptr = number(it.value(), join(path, it.key()));
        if (!(*ptr > 0.0)) throw config_error(join(path, it.key()), "tolerance must be positive");
        known = true;
      }
    if (!known) throw config_error(join(path, it.key()), "unknown tolerance");
  }
}

}  // namespace config_detail

/// Parses a run configuration; throws config_error naming the field.
inline RunConfig parse_config(const nlohmann::ordered_json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw config_error("(root)", "expected an object");
  RunConfig c;
  c.source = j;
  if (const json* l = optional(j, "label")) c.label = string(*l, "label");
  c.spec = parse_immersion(require(j, "", "immersion"), "immersion");
  const int n = c.spec.n;
  if (const json* s = optional(j, "ambient_scale")) c.spec.scale = parse_scale(*s, "ambient_scale", n);

  if (const json* q = optional(j, "quadrature")) {
    if (const json* r = optional(*q, "resolution")) c.resolution = integer(*r, "quadrature.resolution");
    if (const json* r = optional(*q, "plateau_resolution"))
      c.plateau_resolution = integer(*r, "quadrature.plateau_resolution");
  }
  if (c.resolution < 2) throw config_error("quadrature.resolution", "must be at least 2");
  if (c.plateau_resolution && *c.plateau_resolution <= c.resolution)
    throw config_error("quadrature.plateau_resolution", "must exceed quadrature.resolution");

  if (const json* o = optional(j, "jet_order")) c.order = integer(*o, "jet_order");
  if (const json* e = optional(j, "energies")) {
    array(*e, "energies");
    c.energies.clear();
    for (std::size_t i = 0; i < e->size(); ++i) c.energies.push_back(parse_energy_kind((*e)[i], at_index("energies", i)));
  }
  if (const json* t = optional(j, "threads")) {
    c.threads = integer(*t, "threads");
    if (c.threads < 0) throw config_error("threads", "must be >= 0 (0 means all cores)");
  }
  if (const json* s = optional(j, "seed")) {
    if (!s->is_number_unsigned()) throw config_error("seed", "expected a non-negative integer");
    c.seed = s->get<std::uint64_t>();
  }
  if (const json* f = optional(j, "flip_schouten")) c.flip_schouten = boolean(*f, "flip_schouten");
  if (const json* o = optional(j, "output")) {
    if (const json* d = optional(*o, "dir")) c.out_dir = string(*d, "output.dir");
  }
  if (const json* t = optional(j, "tolerances")) parse_tolerances(*t, "tolerances", c.tol);

  if (const json* inv = optional(j, "invariance")) {
    InvarianceBlock b;
    const json& ms = array(require(*inv, "invariance", "motions"), "invariance.motions");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const std::string p = at_index("invariance.motions", i);
      NamedMotion m;
      m.label = string(require(ms[i], p, "label"), join(p, "label"));
      m.steps = parse_motions(require(ms[i], p, "steps"), join(p, "steps"), n);
      b.motions.push_back(std::move(m));
    }
    b.scales = parse_named_scales(require(*inv, "invariance", "scales"), "invariance.scales", n);
    if (b.scales.empty()) throw config_error("invariance.scales", "needs at least one scale");
    if (const json* r = optional(*inv, "resolution")) b.resolution = integer(*r, "invariance.resolution");
    c.invariance = std::move(b);
  }

  if (const json* var = optional(j, "variation")) {
    VariationBlock b;
    if (const json* e = optional(*var, "energies")) {
      array(*e, "variation.energies");
      b.energies.clear();
      for (std::size_t i = 0; i < e->size(); ++i) {
        const std::string p = at_index("variation.energies", i);
        try {
          b.energies.push_back(parse_energy_tag(string((*e)[i], p)));
        } catch (const config_error&) {
          throw;
        } catch (const std::invalid_argument& ex) {
          throw config_error(p, ex.what());
        }
      }
    }
    if (const json* f = optional(*var, "fields")) {
      array(*f, "variation.fields");
      for (std::size_t i = 0; i < f->size(); ++i)
        b.fields.push_back(parse_field((*f)[i], at_index("variation.fields", i), n));
    }
    if (const json* r = optional(*var, "random_fields")) {
      b.random_fields = integer(*r, "variation.random_fields");
      if (b.random_fields < 0) throw config_error("variation.random_fields", "must be >= 0");
    }
    if (b.fields.empty() && b.random_fields == 0)
      throw config_error("variation.fields", "no perturbation fields given");
    if (const json* e = optional(*var, "eps")) b.options.eps = numbers(*e, "variation.eps");
    if (b.options.eps.size() < 4) throw config_error("variation.eps", "need at least 4 amplitudes");
    for (std::size_t i = 0; i < b.options.eps.size(); ++i) {
      const double x = b.options.eps[i];
      if (x == 0.0) throw config_error(at_index("variation.eps", i), "amplitudes must be nonzero");
      if (std::find(b.options.eps.begin(), b.options.eps.end(), -x) == b.options.eps.end())
        throw config_error("variation.eps", "schedule must be symmetric around 0");
    }
    if (const json* fl = optional(*var, "floor")) b.options.floor = number(*fl, "variation.floor");
    if (const json* r = optional(*var, "resolution")) b.resolution = integer(*r, "variation.resolution");
    c.variation = std::move(b);
  }

  if (const json* v = optional(j, "verify")) {
    if (const json* nn = optional(*v, "nodes")) {
      c.verify.nodes = integer(*nn, "verify.nodes");
      if (c.verify.nodes < 1) throw config_error("verify.nodes", "must be positive");
    }
    if (const json* s = optional(*v, "scales")) c.verify.scales = parse_named_scales(*s, "verify.scales", n);
    if (const json* ls = optional(*v, "lemma_sign")) {
      const std::string s = string(*ls, "verify.lemma_sign");
      if (s == "corrected") c.verify.lemma_sign = LemmaSign::corrected;
      else if (s == "printed") c.verify.lemma_sign = LemmaSign::printed;
      else throw config_error("verify.lemma_sign", "expected \"corrected\" or \"printed\"");
    }
    if (const json* e = optional(*v, "energies")) c.verify.energies = boolean(*e, "verify.energies");
  }
  return c;
}

/// Cross-field checks that depend on overrides applied after parsing.
inline void validate_config(const RunConfig& c) {
  try {
    validate_budget(c.order, c.energies);
  } catch (const budget_error& e) {
    throw config_error("jet_order", e.what());
  }
  if (c.variation && c.order + 1 > kMaxJetOrder)
    throw config_error("jet_order", "variation runs evaluate the base immersion one order higher; jet_order must be <= " +
                                        std::to_string(kMaxJetOrder - 1));
  auto check_res = [&](int r, const std::string& path) {
    if (r < 2) throw config_error(path, "must be at least 2");
    try {
      check_resolution(c.spec, r);
    } catch (const std::invalid_argument& e) {
      throw config_error(path, e.what());
    }
  };
  check_res(c.resolution, "quadrature.resolution");
  if (c.plateau_resolution) check_res(*c.plateau_resolution, "quadrature.plateau_resolution");
  if (c.invariance && c.invariance->resolution) check_res(*c.invariance->resolution, "invariance.resolution");
  if (c.variation && c.variation->resolution) check_res(*c.variation->resolution, "variation.resolution");
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("--config", "cannot open '" + path + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("(root)", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace cwe
