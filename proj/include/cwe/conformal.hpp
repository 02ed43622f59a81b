#pragma once

// Conformal motions of flat R^n: translations, rotations, dilations,
// inversions in spheres and special conformal transformations. Each acts on
// ambient points given as jets, so composing an immersion with a motion keeps
// exact derivatives.

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwe/jet.hpp"
#include "cwe/linalg.hpp"

namespace cwe {

enum class MotionKind { translation, rotation, dilation, inversion, special_conformal };

inline const char* to_string(MotionKind k) {
  switch (k) {
    case MotionKind::translation: return "translation";
    case MotionKind::rotation: return "rotation";
    case MotionKind::dilation: return "dilation";
    case MotionKind::inversion: return "inversion";
    case MotionKind::special_conformal: return "special_conformal";
  }
  return "?";
}

class guard_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConformalMotion {
  MotionKind kind = MotionKind::translation;
  std::vector<double> vec;  // translation vector, inversion center or special conformal b
  Matrix<double> matrix;    // rotation
  double scalar = 1.0;      // dilation factor or inversion radius

  static ConformalMotion translation(std::vector<double> t) {
    ConformalMotion m;
    m.kind = MotionKind::translation;
    m.vec = std::move(t);
    return m;
  }
  static ConformalMotion rotation(Matrix<double> r) {
    ConformalMotion m;
    m.kind = MotionKind::rotation;
    m.matrix = std::move(r);
    return m;
  }
  /// Rotation by angle in the coordinate plane (i, j), zero-based axes.
  static ConformalMotion plane_rotation(int n, int i, int j, double angle) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j)
      throw std::invalid_argument("rotation plane axes must be distinct and in range");
    Matrix<double> r = Matrix<double>::identity(n);
    r(i, i) = std::cos(angle);
    r(j, j) = std::cos(angle);
    r(i, j) = -std::sin(angle);
    r(j, i) = std::sin(angle);
    return rotation(std::move(r));
  }
  static ConformalMotion dilation(double lambda) {
    ConformalMotion m;
    m.kind = MotionKind::dilation;
    m.scalar = lambda;
    return m;
  }
  static ConformalMotion inversion(std::vector<double> center, double radius) {
    ConformalMotion m;
    m.kind = MotionKind::inversion;
    m.vec = std::move(center);
    m.scalar = radius;
    return m;
  }
  static ConformalMotion special_conformal(std::vector<double> b) {
    ConformalMotion m;
    m.kind = MotionKind::special_conformal;
    m.vec = std::move(b);
    return m;
  }

  void validate(int n) const {
    auto need = [&](std::size_t got, const char* what) {
      if (static_cast<int>(got) != n)
        throw std::invalid_argument(std::string(to_string(kind)) + ": " + what + " must have " +
                                    std::to_string(n) + " entries");
    };
    auto finite = [&](const std::vector<double>& v) {
      for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(to_string(kind)) + ": non-finite parameter");
    };
    switch (kind) {
      case MotionKind::translation:
      case MotionKind::special_conformal:
        need(vec.size(), "vector");
        finite(vec);
        break;
      case MotionKind::inversion:
        need(vec.size(), "center");
        finite(vec);
        if (!(scalar > 0.0) || !std::isfinite(scalar))
          throw std::invalid_argument("inversion: radius must be positive");
        break;
      case MotionKind::dilation:
        if (!(scalar > 0.0) || !std::isfinite(scalar))
          throw std::invalid_argument("dilation: factor must be positive");
        break;
      case MotionKind::rotation: {
        if (matrix.rows() != n || matrix.cols() != n)
          throw std::invalid_argument("rotation: matrix must be " + std::to_string(n) + "x" + std::to_string(n));
        const Eigen::MatrixXd r = to_eigen(matrix);
        const double err = (r.transpose() * r - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
        if (err > 1e-12) throw std::invalid_argument("rotation: matrix is not orthogonal");
        break;
      }
    }
  }

  /// The point sent to infinity, if any.
  std::optional<std::vector<double>> singular_point() const {
    if (kind == MotionKind::inversion) return vec;
    if (kind == MotionKind::special_conformal) {
      double b2 = 0.0;
      for (double v : vec) b2 += v * v;
      if (b2 == 0.0) return std::nullopt;
      std::vector<double> p(vec.size());
      for (std::size_t i = 0; i < vec.size(); ++i) p[i] = -vec[i] / b2;
      return p;
    }
    return std::nullopt;
  }

  /// Throws guard_error when the base point lies within delta of the
  /// singular point.
  void check_guard(const std::vector<double>& x, double delta, const std::string& where) const {
    const auto sp = singular_point();
    if (!sp) return;
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - (*sp)[i]) * (x[i] - (*sp)[i]);
    const double d = std::sqrt(d2);
    if (d <= delta) {
      std::ostringstream os;
      os << to_string(kind) << " guard violated at " << where << ": distance " << d
         << " to singular point <= " << delta;
      throw guard_error(os.str());
    }
  }

  template <int K>
  std::vector<Jet<K>> apply(const std::vector<Jet<K>>& x) const {
    const int n = static_cast<int>(x.size());
    std::vector<Jet<K>> y(x.size());
    switch (kind) {
      case MotionKind::translation:
        for (int a = 0; a < n; ++a) y[a] = x[a] + vec[a];
        break;
      case MotionKind::rotation:
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            if (matrix(a, b) != 0.0) y[a] += matrix(a, b) * x[b];
        break;
      case MotionKind::dilation:
        for (int a = 0; a < n; ++a) y[a] = scalar * x[a];
        break;
      case MotionKind::inversion: {
        Jet<K> s2;
        std::vector<Jet<K>> d(x.size());
        for (int a = 0; a < n; ++a) {
          d[a] = x[a] - vec[a];
          s2.add_product(d[a], d[a]);
        }
        const Jet<K> f = (scalar * scalar) * recip(s2);
        for (int a = 0; a < n; ++a) y[a] = vec[a] + f * d[a];
        break;
      }
      case MotionKind::special_conformal: {
        Jet<K> x2, bx;
        double b2 = 0.0;
        for (int a = 0; a < n; ++a) {
          x2.add_product(x[a], x[a]);
          bx += vec[a] * x[a];
          b2 += vec[a] * vec[a];
        }
        const Jet<K> inv = recip(1.0 + 2.0 * bx + b2 * x2);
        for (int a = 0; a < n; ++a) y[a] = (x[a] + vec[a] * x2) * inv;
        break;
      }
    }
    return y;
  }

  std::vector<double> apply_point(const std::vector<double>& x) const {
    std::vector<Jet<0>> xj(x.begin(), x.end());
    const auto yj = apply(xj);
    std::vector<double> y(yj.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = yj[i].value();
    return y;
  }
};

}  // namespace cwe
