#pragma once

// Closed-form immersions of 4-manifolds into R^n, their chart atlases and
// product quadrature rules, and deterministic integration over the atlas.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "cwe/conformal.hpp"
#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"
#include "cwe/perturbation.hpp"
#include "cwe/scale.hpp"

namespace cwe {

enum class Family { round_sphere, product_torus, trig_graph_torus };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::round_sphere: return "round_sphere";
    case Family::product_torus: return "product_torus";
    case Family::trig_graph_torus: return "trig_graph_torus";
  }
  return "?";
}

enum class TorusBase { product, plane };

// coeff * prod_i f_i(k_i theta_i) added to ambient coordinate `axis`
// (zero-based).
struct DisplacementTerm {
  int axis = 0;
  double coeff = 0.0;
  std::array<int, 4> k{};
  std::array<TrigKind, 4> fn{TrigKind::cos, TrigKind::cos, TrigKind::cos, TrigKind::cos};
};

class regularity_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImmersionSpec {
  Family family = Family::product_torus;
  int n = 8;
  double radius = 1.0;                        // round_sphere
  std::array<double, 4> radii{1, 1, 1, 1};    // tori
  TorusBase base = TorusBase::product;        // trig_graph_torus
  std::vector<DisplacementTerm> displacements;
  std::vector<ConformalMotion> post_maps;
  AmbientScale scale;
  double guard = 0.5;
  PerturbationField perturbation;
  double epsilon = 0.0;

  bool composed() const { return !post_maps.empty(); }
  bool is_torus() const { return family != Family::round_sphere; }

  /// Highest trigonometric degree of the chart map; base circles count 1.
  int fourier_degree() const {
    if (!is_torus()) return 0;
    int d = (family == Family::trig_graph_torus && base == TorusBase::plane) ? 0 : 1;
    for (const auto& t : displacements) {
      int s = 0;
      for (int v : t.k) s += std::abs(v);
      d = std::max(d, s);
    }
    return std::max({d, perturbation.fourier_degree(), 1});
  }

  void validate() const {
    if (n < 5) throw std::invalid_argument("immersion.n: ambient dimension must be at least 5");
    switch (family) {
      case Family::round_sphere:
        if (!(radius > 0.0)) throw std::invalid_argument("immersion.params.radius must be positive");
        break;
      case Family::product_torus:
      case Family::trig_graph_torus:
        if (base == TorusBase::product || family == Family::product_torus) {
          if (n < 8) throw std::invalid_argument("immersion.n: product torus needs n >= 8");
          for (double r : radii)
            if (!(r > 0.0)) throw std::invalid_argument("immersion.params.radii must be positive");
        }
        for (const auto& t : displacements)
          if (t.axis < 0 || t.axis >= n)
            throw std::invalid_argument("immersion.params.displacements: axis " + std::to_string(t.axis + 1) +
                                        " outside 1.." + std::to_string(n));
        break;
    }
    for (const auto& m : post_maps) m.validate(n);
    scale.validate(n);
    perturbation.validate(n);
    if (!(guard > 0.0)) throw std::invalid_argument("guard distance must be positive");
  }

  static ImmersionSpec round_sphere(double r, int n) {
    ImmersionSpec s;
    s.family = Family::round_sphere;
    s.radius = r;
    s.n = n;
    s.validate();
    return s;
  }
  static ImmersionSpec product_torus(std::array<double, 4> radii, int n) {
    ImmersionSpec s;
    s.family = Family::product_torus;
    s.radii = radii;
    s.n = n;
    s.validate();
    return s;
  }
  static ImmersionSpec trig_graph_torus(std::array<double, 4> radii, int n, std::vector<DisplacementTerm> terms,
                                        TorusBase base = TorusBase::product) {
    ImmersionSpec s;
    s.family = Family::trig_graph_torus;
    s.radii = radii;
    s.n = n;
    s.base = base;
    s.displacements = std::move(terms);
    s.validate();
    return s;
  }
};

/// builtin_family by name, with the parameters already parsed.
inline ImmersionSpec builtin_family(const std::string& name, const ImmersionSpec& params) {
  ImmersionSpec s = params;
  if (name == "round_sphere") s.family = Family::round_sphere;
  else if (name == "product_torus") s.family = Family::product_torus;
  else if (name == "trig_graph_torus") s.family = Family::trig_graph_torus;
  else throw std::invalid_argument("immersion.family: unknown family '" + name + "'");
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Atlas and quadrature

struct Chart {
  std::array<double, 4> lo{}, hi{};
  std::array<bool, 4> periodic{};
  std::array<std::vector<double>, 4> nodes;
  std::array<std::vector<double>, 4> weights;

  std::size_t node_count() const {
    std::size_t c = 1;
    for (const auto& v : nodes) c *= v.size();
    return c;
  }

  std::array<double, 4> node(std::size_t index, double* weight = nullptr) const {
    std::array<double, 4> t{};
    double w = 1.0;
    for (int i = 3; i >= 0; --i) {
      const std::size_t m = nodes[i].size();
      const std::size_t q = index % m;
      index /= m;
      t[i] = nodes[i][q];
      w *= weights[i][q];
    }
    if (weight) *weight = w;
    return t;
  }
};

struct Atlas {
  std::vector<Chart> charts;
  int resolution = 0;

  std::size_t node_count() const {
    std::size_t c = 0;
    for (const auto& ch : charts) c += ch.node_count();
    return c;
  }
};

/// Gauss-Legendre nodes and weights on [a, b].
inline void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = z;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
    }
    const double wt = 2.0 / ((1.0 - z * z) * dp * dp);
    x[i] = mid - half * z;
    x[n - 1 - i] = mid + half * z;
    w[i] = w[n - 1 - i] = half * wt;
  }
}

inline void trapezoid_periodic(int n, double a, double b, std::vector<double>& x, std::vector<double>& w) {
  x.resize(static_cast<std::size_t>(n));
  w.assign(static_cast<std::size_t>(n), (b - a) / n);
  for (int i = 0; i < n; ++i) x[i] = a + (b - a) * i / n;
}

inline Atlas make_atlas(const ImmersionSpec& spec, int resolution) {
  if (resolution < 1) throw std::invalid_argument("resolution must be positive");
  Atlas atlas;
  atlas.resolution = resolution;
  Chart ch;
  const double pi = std::numbers::pi;
  if (spec.is_torus()) {
    for (int i = 0; i < 4; ++i) {
      ch.lo[i] = 0.0;
      ch.hi[i] = 2 * pi;
      ch.periodic[i] = true;
      trapezoid_periodic(resolution, 0.0, 2 * pi, ch.nodes[i], ch.weights[i]);
    }
  } else {
    for (int i = 0; i < 3; ++i) {
      ch.lo[i] = 0.0;
      ch.hi[i] = pi;
      ch.periodic[i] = false;
      gauss_legendre(resolution, 0.0, pi, ch.nodes[i], ch.weights[i]);
    }
    ch.lo[3] = 0.0;
    ch.hi[3] = 2 * pi;
    ch.periodic[3] = true;
    trapezoid_periodic(resolution, 0.0, 2 * pi, ch.nodes[3], ch.weights[3]);
  }
  atlas.charts.push_back(std::move(ch));
  return atlas;
}

/// Refuses resolutions that under-sample the declared Fourier degree.
inline void check_resolution(const ImmersionSpec& spec, int resolution) {
  const int deg = spec.fourier_degree();
  if (spec.is_torus() && resolution < 4 * deg)
    throw std::invalid_argument("resolution " + std::to_string(resolution) + " below 4 x Fourier degree " +
                                std::to_string(deg));
}

/// Uniformly random chart points, reproducible from the seed.
inline std::vector<std::array<double, 4>> random_chart_points(const ImmersionSpec& spec, int count,
                                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double pi = std::numbers::pi;
  std::vector<std::array<double, 4>> pts(static_cast<std::size_t>(count));
  for (auto& p : pts) {
    for (int i = 0; i < 4; ++i) {
      if (spec.is_torus() || i == 3) {
        p[i] = std::uniform_real_distribution<double>(0.0, 2 * pi)(rng);
      } else {
        // keep clear of the coordinate poles of the sphere chart
        p[i] = std::uniform_real_distribution<double>(0.15 * pi, 0.85 * pi)(rng);
      }
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Immersion jets

inline std::string format_point(const std::array<double, 4>& t) {
  std::ostringstream os;
  os.precision(17);
  os << "theta=(" << t[0] << ", " << t[1] << ", " << t[2] << ", " << t[3] << ")";
  return os.str();
}

template <int K>
std::array<Jet<K>, 4> seed_chart(const std::array<double, 4>& theta) {
  std::array<Jet<K>, 4> t;
  for (int i = 0; i < 4; ++i) t[i] = jet_variable<K>(i, theta[i]);
  return t;
}

namespace detail {

// cos and sin of a single seeded chart variable, filled coefficient-wise.
template <int K>
void circle_jets(const Jet<K>& t, Jet<K>& c, Jet<K>& s) {
  int axis = -1;
  if constexpr (K >= 1)
    for (int i = 0; i < 4; ++i)
      if (t[1 + i] != 0.0) axis = i;
  const double x0 = t.value();
  const std::array<double, 4> cyc_c{std::cos(x0), -std::sin(x0), -std::cos(x0), std::sin(x0)};
  const std::array<double, 4> cyc_s{std::sin(x0), std::cos(x0), -std::sin(x0), -std::cos(x0)};
  c = Jet<K>();
  s = Jet<K>();
  if (axis < 0) {
    c[0] = cyc_c[0];
    s[0] = cyc_s[0];
    return;
  }
  const auto& m = kMonomials;
  double fact = 1.0;
  for (int d = 0; d <= K; ++d) {
    if (d > 0) fact *= d;
    MultiIndex a{};
    a[axis] = d;
    const int idx = m.index(a);
    c[idx] = cyc_c[d % 4] / fact;
    s[idx] = cyc_s[d % 4] / fact;
  }
}

template <int K>
std::vector<Jet<K>> family_map(const ImmersionSpec& spec, const std::array<Jet<K>, 4>& t) {
  std::vector<Jet<K>> x(static_cast<std::size_t>(spec.n));
  switch (spec.family) {
    case Family::round_sphere: {
      std::array<Jet<K>, 4> c, s;
      for (int i = 0; i < 4; ++i) circle_jets(t[i], c[i], s[i]);
      const double r = spec.radius;
      const Jet<K> s01 = s[0] * s[1];
      const Jet<K> s012 = s01 * s[2];
      x[0] = r * c[0];
      x[1] = r * (s[0] * c[1]);
      x[2] = r * (s01 * c[2]);
      x[3] = r * (s012 * c[3]);
      x[4] = r * (s012 * s[3]);
      break;
    }
    case Family::product_torus:
    case Family::trig_graph_torus: {
      if (spec.family == Family::trig_graph_torus && spec.base == TorusBase::plane) {
        for (int i = 0; i < 4; ++i) x[i] = t[i];
      } else {
        for (int i = 0; i < 4; ++i) {
          Jet<K> c, s;
          circle_jets(t[i], c, s);
          x[2 * i] = spec.radii[i] * c;
          x[2 * i + 1] = spec.radii[i] * s;
        }
      }
      if (spec.family == Family::trig_graph_torus) {
        for (const auto& d : spec.displacements) {
          Jet<K> term(d.coeff);
          for (int i = 0; i < 4; ++i) {
            if (d.k[i] == 0 && d.fn[i] == TrigKind::cos) continue;
            Jet<K> arg = static_cast<double>(d.k[i]) * t[i];
            Jet<K> c, s;
            if (std::abs(d.k[i]) == 1) {
              circle_jets(t[i], c, s);
              if (d.k[i] < 0) s = -s;
            } else {
              c = cos(arg);
              s = sin(arg);
            }
            term = term * (d.fn[i] == TrigKind::cos ? c : s);
          }
          x[d.axis] += term;
        }
      }
      break;
    }
  }
  return x;
}

template <int K>
std::vector<Jet<K>> composed_map(const ImmersionSpec& spec, const std::array<double, 4>& theta,
                                 const std::array<Jet<K>, 4>& t) {
  std::vector<Jet<K>> x = family_map<K>(spec, t);
  for (const auto& m : spec.post_maps) {
    if (m.singular_point()) {
      std::vector<double> p(x.size());
      for (std::size_t a = 0; a < x.size(); ++a) p[a] = x[a].value();
      m.check_guard(p, spec.guard, format_point(theta));
    }
    x = m.apply(x);
  }
  return x;
}

template <int K>
void check_regularity(const std::vector<Jet<K>>& x, const std::array<double, 4>& theta) {
  if constexpr (K >= 1) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd J(n, 4);
    for (int a = 0; a < n; ++a)
      for (int i = 0; i < 4; ++i) J(a, i) = x[a][1 + i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto sv = svd.singularValues();
    if (!(sv(3) > 1e-8) || sv(0) / sv(3) > 1e10)
      throw regularity_error("immersion not regular at " + format_point(theta) +
                             ": smallest Jacobian singular value " + std::to_string(sv(3)));
  }
}

}  // namespace detail

/// Component jets of the full map (family, post maps, perturbation) at theta.
template <int K>
std::vector<Jet<K>> eval_jets(const ImmersionSpec& spec, const std::array<double, 4>& theta,
                              bool check = true) {
  const auto t = seed_chart<K>(theta);
  std::vector<Jet<K>> x;
  if (spec.epsilon != 0.0 && !spec.perturbation.empty()) {
    if constexpr (K + 1 > kMaxJetOrder) {
      throw jet_error("perturbed immersion needs jet order " + std::to_string(K + 1) + " > " +
                      std::to_string(kMaxJetOrder));
    } else {
      // normal projection at the unperturbed point needs one extra order
      const auto t1 = seed_chart<K + 1>(theta);
      const std::vector<Jet<K + 1>> base = detail::composed_map<K + 1>(spec, theta, t1);
      const int n = spec.n;
      JetMatrix<K> Pi(n, 4);
      for (int a = 0; a < n; ++a)
        for (int i = 0; i < 4; ++i) Pi(a, i) = derivative(base[a], i);
      const JetMatrix<K> gram = matmul(transpose(Pi), Pi);
      const JetMatrix<K> ginv = inverse(gram);
      x = truncate<K>(base);
      const std::vector<Jet<K>> psi = eval_perturbation<K>(spec.perturbation, x, t);
      // phi = psi - Pi ginv Pi^T psi
      std::array<Jet<K>, 4> tp, c;
      for (int i = 0; i < 4; ++i)
        for (int a = 0; a < n; ++a) tp[i].add_product(Pi(a, i), psi[a]);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) c[i].add_product(ginv(i, j), tp[j]);
      for (int a = 0; a < n; ++a) {
        Jet<K> phi = psi[a];
        for (int i = 0; i < 4; ++i) phi -= Pi(a, i) * c[i];
        x[a] += spec.epsilon * phi;
      }
    }
  } else {
    x = detail::composed_map<K>(spec, theta, t);
  }
  if (check) detail::check_regularity(x, theta);
  return x;
}

/// Ambient point (values only).
inline std::vector<double> eval_point(const ImmersionSpec& spec, const std::array<double, 4>& theta) {
  const auto x = eval_jets<0>(spec, theta, false);
  std::vector<double> p(x.size());
  for (std::size_t a = 0; a < p.size(); ++a) p[a] = x[a].value();
  return p;
}

// ---------------------------------------------------------------------------
// Integration

class integration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeumaierSum {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) comp += (sum - t) + v;
    else comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

struct IntegrateOptions {
  int threads = 1;
  std::size_t block = 512;
};

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Integrates `ncomp` densities at once. `field(theta, out)` must fill out
/// with values already multiplied by the area density. Nodes are grouped in
/// fixed blocks whose compensated partial sums are combined in block order,
/// so the result does not depend on the thread count.
template <class Field>
std::vector<double> integrate_many(const Atlas& atlas, int ncomp, Field&& field, const IntegrateOptions& opt = {}) {
  struct Block {
    const Chart* chart;
    std::size_t begin, end;
  };
  std::vector<Block> blocks;
  for (const auto& ch : atlas.charts)
    for (std::size_t b = 0; b < ch.node_count(); b += opt.block)
      blocks.push_back({&ch, b, std::min(ch.node_count(), b + opt.block)});

  std::vector<std::vector<NeumaierSum>> partial(blocks.size(), std::vector<NeumaierSum>(static_cast<std::size_t>(ncomp)));
  std::vector<std::exception_ptr> errors(blocks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    std::vector<double> out(static_cast<std::size_t>(ncomp));
    for (;;) {
      const std::size_t bi = next.fetch_add(1);
      if (bi >= blocks.size()) return;
      const Block& blk = blocks[bi];
      try {
        for (std::size_t q = blk.begin; q < blk.end; ++q) {
          double w = 0.0;
          const auto theta = blk.chart->node(q, &w);
          std::fill(out.begin(), out.end(), 0.0);
          field(theta, out);
          for (int c = 0; c < ncomp; ++c) {
            if (!std::isfinite(out[c]))
              throw integration_error("non-finite integrand component " + std::to_string(c) + " at " +
                                      format_point(theta));
            partial[bi][c].add(w * out[c]);
          }
        }
      } catch (...) {
        errors[bi] = std::current_exception();
      }
    }
  };

  const int nt = std::max(1, std::min<int>(resolve_threads(opt.threads), static_cast<int>(blocks.size())));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> result(static_cast<std::size_t>(ncomp));
  for (int c = 0; c < ncomp; ++c) {
    NeumaierSum s;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) s.add(partial[bi][c].value());
    result[c] = s.value();
  }
  return result;
}

template <class Field>
double integrate(const Atlas& atlas, Field&& field, const IntegrateOptions& opt = {}) {
  return integrate_many(
      atlas, 1, [&](const std::array<double, 4>& t, std::vector<double>& out) { out[0] = field(t); }, opt)[0];
}

}  // namespace cwe
