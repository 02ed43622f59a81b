#pragma once

// Truncated multivariate Taylor jets in four parameters.
//
// A Jet<K> holds the Taylor coefficients c_alpha of a scalar field about a
// base point for every multi-index |alpha| <= K, so that
//
//     f(p + t) = sum_alpha c_alpha t^alpha + O(|t|^{K+1}).
//
// Coefficients are stored densely in graded order: all monomials of total
// degree 0, then degree 1, and so on. A Jet<M> with M < K is therefore a
// prefix of a Jet<K>, which makes truncation a copy of the leading entries.
// Differentiating along an axis lowers the order by one; binary operations
// between jets of different order produce a jet of the smaller order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

namespace cwe {

inline constexpr int kJetVars = 4;
inline constexpr int kMaxJetOrder = 6;

using MultiIndex = std::array<int, kJetVars>;

constexpr int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(r);
}

/// Number of coefficients of an order-K jet in four variables, C(K+4, 4).
constexpr int jet_size(int order) { return binomial(order + kJetVars, kJetVars); }

class jet_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct MonomialTable {
  static constexpr int kCount = jet_size(kMaxJetOrder);
  std::array<MultiIndex, kCount> alpha{};
  std::array<int, kCount> degree{};
  std::array<double, kCount> factorial{};  // alpha! = prod alpha_i!
  // index_of[flat(alpha)], valid for |alpha| <= kMaxJetOrder only
  std::array<std::int16_t, 7 * 7 * 7 * 7> index_of{};

  constexpr MonomialTable() {
    for (auto& v : index_of) v = -1;
    int pos = 0;
    for (int d = 0; d <= kMaxJetOrder; ++d) {
      // descending lexicographic order within each degree
      for (int a0 = d; a0 >= 0; --a0)
        for (int a1 = d - a0; a1 >= 0; --a1)
          for (int a2 = d - a0 - a1; a2 >= 0; --a2) {
            const int a3 = d - a0 - a1 - a2;
            alpha[pos] = {a0, a1, a2, a3};
            degree[pos] = d;
            double f = 1.0;
            for (int v : alpha[pos])
              for (int q = 2; q <= v; ++q) f *= q;
            factorial[pos] = f;
            index_of[flat(alpha[pos])] = static_cast<std::int16_t>(pos);
            ++pos;
          }
    }
  }

  static constexpr int flat(const MultiIndex& a) {
    return ((a[0] * 7 + a[1]) * 7 + a[2]) * 7 + a[3];
  }

  constexpr int index(const MultiIndex& a) const {
    int d = 0;
    for (int v : a) {
      if (v < 0 || v > kMaxJetOrder) return -1;
      d += v;
    }
    if (d > kMaxJetOrder) return -1;
    return index_of[flat(a)];
  }
};

inline constexpr MonomialTable kMonomials{};

inline const MonomialTable& monomials() { return kMonomials; }

struct ProductTerm {
  std::uint8_t i, j, target;
};

// All coefficient pairs (i, j) with deg(i) + deg(j) <= K and the index of the
// product monomial, grouped by target so each output accumulates in a register.
template <int K>
struct ProductTable {
  static constexpr int kTerms = binomial(K + 2 * kJetVars, 2 * kJetVars);
  std::array<ProductTerm, kTerms> terms{};

  constexpr ProductTable() {
    const auto& m = kMonomials;
    int pos = 0;
    for (int t = 0; t < jet_size(K); ++t)
      for (int i = 0; i < jet_size(K); ++i) {
        MultiIndex r{};
        bool ok = true;
        for (int v = 0; v < kJetVars; ++v) {
          r[v] = m.alpha[t][v] - m.alpha[i][v];
          if (r[v] < 0) ok = false;
        }
        if (!ok) continue;
        terms[pos++] = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(m.index(r)),
                        static_cast<std::uint8_t>(t)};
      }
  }
};

template <int K>
inline constexpr ProductTable<K> kProducts{};

template <int K, std::size_t... P>
[[gnu::noinline]] void multiply_into(const double* a, const double* b, double* c,
                          std::index_sequence<P...>) {
  constexpr const auto& t = kProducts<K>.terms;
  double r[jet_size(K)] = {};
  ((r[t[P].target] += a[t[P].i] * b[t[P].j]), ...);
  for (int q = 0; q < jet_size(K); ++q) c[q] = r[q];
}

template <int K, std::size_t... P>
[[gnu::noinline]] void multiply_add(const double* a, const double* b, double* c, double sign,
                         std::index_sequence<P...>) {
  constexpr const auto& t = kProducts<K>.terms;
  double r[jet_size(K)] = {};
  ((r[t[P].target] += a[t[P].i] * b[t[P].j]), ...);
  for (int q = 0; q < jet_size(K); ++q) c[q] += sign * r[q];
}

// The order-(K-1) coefficient beta of d/dtheta_axis comes from source[beta]
// scaled by (beta_axis + 1).
template <int K>
struct DerivativeTable {
  static constexpr int kSize = jet_size(K - 1);
  std::array<std::array<std::uint8_t, kSize>, kJetVars> source{};
  std::array<std::array<double, kSize>, kJetVars> scale{};

  constexpr DerivativeTable() {
    const auto& m = kMonomials;
    for (int axis = 0; axis < kJetVars; ++axis)
      for (int b = 0; b < kSize; ++b) {
        MultiIndex s = m.alpha[b];
        s[axis] += 1;
        source[axis][b] = static_cast<std::uint8_t>(m.index(s));
        scale[axis][b] = static_cast<double>(s[axis]);
      }
  }
};

template <int K>
inline constexpr DerivativeTable<K> kDerivatives{};

}  // namespace detail

template <int K>
class Jet {
  static_assert(K >= 0 && K <= kMaxJetOrder, "jet order out of range");

 public:
  static constexpr int order = K;
  static constexpr int size = jet_size(K);

  struct NoInit {};

  constexpr Jet() : c_{} {}
  explicit Jet(NoInit) {}
  constexpr Jet(double value) : c_{} { c_[0] = value; }  // NOLINT: implicit by design of arithmetic

  double value() const { return c_[0]; }
  double& operator[](int i) { return c_[i]; }
  double operator[](int i) const { return c_[i]; }
  const std::array<double, size>& coeffs() const { return c_; }
  std::array<double, size>& coeffs() { return c_; }

  double coeff(const MultiIndex& alpha) const {
    const int idx = detail::monomials().index(alpha);
    if (idx < 0 || idx >= size) throw jet_error("multi-index exceeds jet order");
    return c_[idx];
  }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i < size; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i < size; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }
  Jet& operator-=(double s) {
    c_[0] -= s;
    return *this;
  }
  Jet& operator*=(const Jet& o);

  Jet operator-() const {
    Jet r = *this;
    for (auto& v : r.c_) v = -v;
    return r;
  }

  /// Adds a*b into this jet (fused, avoids a temporary).
  void add_product(const Jet& a, const Jet& b);
  void sub_product(const Jet& a, const Jet& b);
  /// Overwrites this jet with a*b.
  void set_product(const Jet& a, const Jet& b);

  bool is_constant() const {
    for (int i = 1; i < size; ++i)
      if (c_[i] != 0.0) return false;
    return true;
  }

 private:
  std::array<double, size> c_;
};

template <int K>
void Jet<K>::add_product(const Jet& a, const Jet& b) {
  detail::multiply_add<K>(a.c_.data(), b.c_.data(), c_.data(), 1.0,
                          std::make_index_sequence<detail::ProductTable<K>::kTerms>{});
}

template <int K>
void Jet<K>::sub_product(const Jet& a, const Jet& b) {
  detail::multiply_add<K>(a.c_.data(), b.c_.data(), c_.data(), -1.0,
                          std::make_index_sequence<detail::ProductTable<K>::kTerms>{});
}

template <int K>
void Jet<K>::set_product(const Jet& a, const Jet& b) {
  detail::multiply_into<K>(a.c_.data(), b.c_.data(), c_.data(),
                           std::make_index_sequence<detail::ProductTable<K>::kTerms>{});
}

template <int K>
Jet<K>& Jet<K>::operator*=(const Jet& o) {
  set_product(*this, o);
  return *this;
}

/// Keeps coefficients up to order M.
template <int M, int K>
Jet<M> truncate(const Jet<K>& a) {
  static_assert(M <= K, "cannot raise jet order by truncation");
  if constexpr (M == K) {
    return a;
  } else {
    Jet<M> r;
    for (int i = 0; i < Jet<M>::size; ++i) r[i] = a[i];
    return r;
  }
}

template <int K>
Jet<K> operator+(Jet<K> a, const Jet<K>& b) { return a += b; }
template <int K>
Jet<K> operator-(Jet<K> a, const Jet<K>& b) { return a -= b; }
template <int K>
Jet<K> operator*(const Jet<K>& a, const Jet<K>& b) {
  Jet<K> r{typename Jet<K>::NoInit{}};
  r.set_product(a, b);
  return r;
}

template <int A, int B>
  requires(A != B)
Jet<(A < B ? A : B)> operator+(const Jet<A>& a, const Jet<B>& b) {
  constexpr int M = A < B ? A : B;
  return truncate<M>(a) + truncate<M>(b);
}
template <int A, int B>
  requires(A != B)
Jet<(A < B ? A : B)> operator-(const Jet<A>& a, const Jet<B>& b) {
  constexpr int M = A < B ? A : B;
  return truncate<M>(a) - truncate<M>(b);
}
template <int A, int B>
  requires(A != B)
Jet<(A < B ? A : B)> operator*(const Jet<A>& a, const Jet<B>& b) {
  constexpr int M = A < B ? A : B;
  if constexpr (A == M) {
    return a * truncate<M>(b);
  } else {
    return truncate<M>(a) * b;
  }
}

template <int K>
Jet<K> operator+(Jet<K> a, double s) { return a += s; }
template <int K>
Jet<K> operator+(double s, Jet<K> a) { return a += s; }
template <int K>
Jet<K> operator-(Jet<K> a, double s) { return a -= s; }
template <int K>
Jet<K> operator-(double s, const Jet<K>& a) { return (-a) += s; }
template <int K>
Jet<K> operator*(Jet<K> a, double s) { return a *= s; }
template <int K>
Jet<K> operator*(double s, Jet<K> a) { return a *= s; }
template <int K>
Jet<K> operator/(Jet<K> a, double s) { return a *= (1.0 / s); }

/// Seeds the coordinate function theta_axis about the base value x0.
template <int K>
Jet<K> jet_variable(int axis, double x0) {
  if (axis < 0 || axis >= kJetVars)
    throw jet_error("jet_variable: axis index " + std::to_string(axis) + " outside 0..3");
  Jet<K> r(x0);
  if constexpr (K >= 1) r[1 + axis] = 1.0;
  return r;
}

/// Partial derivative along one axis as a jet of one lower order.
template <int K>
Jet<K - 1> derivative(const Jet<K>& a, int axis) {
  static_assert(K >= 1, "cannot differentiate an order-0 jet");
  constexpr const auto& t = detail::kDerivatives<K>;
  Jet<K - 1> r;
  for (int b = 0; b < Jet<K - 1>::size; ++b) r[b] = t.scale[axis][b] * a[t.source[axis][b]];
  return r;
}

/// True partial derivative d^alpha f at the base point: alpha! * c_alpha.
template <int K>
double jet_partial(const Jet<K>& a, const MultiIndex& alpha) {
  int d = 0;
  for (int v : alpha) {
    if (v < 0) throw jet_error("jet_partial: negative multi-index entry");
    d += v;
  }
  if (d > K)
    throw jet_error("jet_partial: |alpha| = " + std::to_string(d) + " exceeds jet order " +
                    std::to_string(K));
  const auto& m = detail::monomials();
  const int idx = m.index(alpha);
  return m.factorial[idx] * a[idx];
}

// ---------------------------------------------------------------------------
// Elementary functions by univariate composition: with a = a0 + u, u having
// zero constant term, f(a) = sum_m f^(m)(a0)/m! u^m, truncated at order K.

enum class ElementaryFn { sin, cos, exp, log, sqrt, recip, pow };

inline const char* to_string(ElementaryFn f) {
  switch (f) {
    case ElementaryFn::sin: return "sin";
    case ElementaryFn::cos: return "cos";
    case ElementaryFn::exp: return "exp";
    case ElementaryFn::log: return "log";
    case ElementaryFn::sqrt: return "sqrt";
    case ElementaryFn::recip: return "recip";
    case ElementaryFn::pow: return "pow";
  }
  return "?";
}

namespace detail {

// Taylor coefficients f^(m)(x0)/m!, m = 0..K.
template <int K>
std::array<double, K + 1> taylor_coefficients(ElementaryFn f, double x0, double p) {
  std::array<double, K + 1> c{};
  auto domain = [&](bool ok) {
    if (!ok) {
      std::ostringstream os;
      os << "jet_apply: " << to_string(f) << " undefined at base value " << x0;
      throw jet_error(os.str());
    }
  };
  switch (f) {
    case ElementaryFn::sin:
    case ElementaryFn::cos: {
      const double s = std::sin(x0), co = std::cos(x0);
      const std::array<double, 4> cyc =
          f == ElementaryFn::sin ? std::array<double, 4>{s, co, -s, -co}
                                 : std::array<double, 4>{co, -s, -co, s};
      double fact = 1.0;
      for (int m = 0; m <= K; ++m) {
        if (m > 0) fact *= m;
        c[m] = cyc[m % 4] / fact;
      }
      break;
    }
    case ElementaryFn::exp: {
      const double e = std::exp(x0);
      double fact = 1.0;
      for (int m = 0; m <= K; ++m) {
        if (m > 0) fact *= m;
        c[m] = e / fact;
      }
      break;
    }
    case ElementaryFn::log: {
      domain(x0 > 0.0);
      c[0] = std::log(x0);
      double inv = 1.0;
      for (int m = 1; m <= K; ++m) {
        inv /= x0;
        c[m] = ((m % 2) ? 1.0 : -1.0) * inv / m;
      }
      break;
    }
    case ElementaryFn::recip: {
      domain(x0 != 0.0);
      const double inv = 1.0 / x0;
      double v = inv;
      for (int m = 0; m <= K; ++m) {
        c[m] = ((m % 2) ? -1.0 : 1.0) * v;
        v *= inv;
      }
      break;
    }
    case ElementaryFn::sqrt:
      p = 0.5;
      [[fallthrough]];
    case ElementaryFn::pow: {
      domain(x0 > 0.0);
      // generalized binomial: x0^p (1 + u/x0)^p
      const double base = std::pow(x0, p);
      double coef = 1.0;
      double inv = 1.0;
      for (int m = 0; m <= K; ++m) {
        c[m] = base * coef * inv;
        coef *= (p - m) / (m + 1);
        inv /= x0;
      }
      break;
    }
  }
  return c;
}

}  // namespace detail

template <int K>
Jet<K> jet_apply(ElementaryFn f, const Jet<K>& a, double exponent = 1.0) {
  const auto c = detail::taylor_coefficients<K>(f, a.value(), exponent);
  Jet<K> u = a;
  u[0] = 0.0;
  // Horner in the nilpotent part u
  Jet<K> r(c[K]);
  for (int m = K - 1; m >= 0; --m) {
    r = r * u;
    r[0] += c[m];
  }
  return r;
}

template <int K> Jet<K> sin(const Jet<K>& a) { return jet_apply(ElementaryFn::sin, a); }
template <int K> Jet<K> cos(const Jet<K>& a) { return jet_apply(ElementaryFn::cos, a); }
template <int K> Jet<K> exp(const Jet<K>& a) { return jet_apply(ElementaryFn::exp, a); }
template <int K> Jet<K> log(const Jet<K>& a) { return jet_apply(ElementaryFn::log, a); }
template <int K> Jet<K> sqrt(const Jet<K>& a) { return jet_apply(ElementaryFn::sqrt, a); }
template <int K> Jet<K> recip(const Jet<K>& a) { return jet_apply(ElementaryFn::recip, a); }
template <int K> Jet<K> pow(const Jet<K>& a, double p) { return jet_apply(ElementaryFn::pow, a, p); }

template <int K>
Jet<K> operator/(const Jet<K>& a, const Jet<K>& b) { return a * recip(b); }

/// Calls fn(std::integral_constant<int, K>{}) for a run-time order K.
template <class Fn>
decltype(auto) dispatch_order(int order, Fn&& fn) {
  switch (order) {
    case 0: return fn(std::integral_constant<int, 0>{});
    case 1: return fn(std::integral_constant<int, 1>{});
    case 2: return fn(std::integral_constant<int, 2>{});
    case 3: return fn(std::integral_constant<int, 3>{});
    case 4: return fn(std::integral_constant<int, 4>{});
    case 5: return fn(std::integral_constant<int, 5>{});
    case 6: return fn(std::integral_constant<int, 6>{});
    default:
      throw jet_error("jet order " + std::to_string(order) + " outside 0.." +
                      std::to_string(kMaxJetOrder));
  }
}

}  // namespace cwe
