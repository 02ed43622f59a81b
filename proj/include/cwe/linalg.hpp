#pragma once

// Small dense matrices of jets (or doubles) with run-time shape, plus the few
// linear-algebra kernels the geometry needs: products, derivatives,
// truncation and inversion of small metric-like matrices.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cwe/jet.hpp"

namespace cwe {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols)) {}
  Matrix(int rows, int cols, const T& fill)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  Matrix& operator+=(const Matrix& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  Matrix operator-() const {
    Matrix r = *this;
    for (auto& v : r.data_) v = -v;
    return r;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

template <class T>
Matrix<T> operator+(Matrix<T> a, const Matrix<T>& b) { return a += b; }
template <class T>
Matrix<T> operator-(Matrix<T> a, const Matrix<T>& b) { return a -= b; }
template <class T>
Matrix<T> operator*(double s, Matrix<T> a) { return a *= s; }

template <int K>
using JetMatrix = Matrix<Jet<K>>;

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> r(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r(j, i) = a(i, j);
  return r;
}

inline bool is_zero(double v) { return v == 0.0; }

template <int K>
bool is_zero(const Jet<K>& j) {
  for (double v : j.coeffs())
    if (v != 0.0) return false;
  return true;
}

inline void add_product(double& acc, double a, double b) { acc += a * b; }

template <int K>
void add_product(Jet<K>& acc, const Jet<K>& a, const Jet<K>& b) {
  acc.add_product(a, b);
}

/// Matrix product; rows of zero entries in the left factor are skipped.
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix<T> r(a.rows(), b.cols());
  std::vector<char> bz(static_cast<std::size_t>(b.rows() * b.cols()));
  for (int k = 0; k < b.rows(); ++k)
    for (int j = 0; j < b.cols(); ++j) bz[static_cast<std::size_t>(k * b.cols() + j)] = is_zero(b(k, j));
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      const T& aik = a(i, k);
      if (is_zero(aik)) continue;
      for (int j = 0; j < b.cols(); ++j)
        if (!bz[static_cast<std::size_t>(k * b.cols() + j)]) add_product(r(i, j), aik, b(k, j));
    }
  return r;
}

template <class T>
Matrix<T> commutator(const Matrix<T>& a, const Matrix<T>& b) {
  return matmul(a, b) - matmul(b, a);
}

/// Coefficient slices of a jet matrix: slice q holds coefficient q of every entry.
template <int K>
std::array<Eigen::MatrixXd, jet_size(K)> coefficient_slices(const JetMatrix<K>& a) {
  std::array<Eigen::MatrixXd, jet_size(K)> s;
  for (auto& m : s) m.resize(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      for (int q = 0; q < jet_size(K); ++q) s[q](r, c) = a(r, c)[q];
  return s;
}

/// a b - b a through dense slice products; faster than `commutator` for
/// dense matrices of a dozen rows or more.
template <int K>
JetMatrix<K> dense_commutator(const JetMatrix<K>& a, const JetMatrix<K>& b) {
  const auto as = coefficient_slices(a);
  const auto bs = coefficient_slices(b);
  std::array<Eigen::MatrixXd, jet_size(K)> r;
  for (auto& m : r) m = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (const auto& t : detail::kProducts<K>.terms) {
    r[t.target].noalias() += as[t.i] * bs[t.j];
    r[t.target].noalias() -= bs[t.i] * as[t.j];
  }
  JetMatrix<K> out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int q = 0; q < jet_size(K); ++q) out(i, j)[q] = r[q](i, j);
  return out;
}

/// Entrywise product with a scalar jet.
template <int K>
JetMatrix<K> scaled(const Jet<K>& s, const JetMatrix<K>& a) {
  JetMatrix<K> r(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    if (!is_zero(a.data()[i])) r.data()[i] = s * a.data()[i];
  return r;
}

template <int M, int K>
JetMatrix<M> truncate(const JetMatrix<K>& a) {
  JetMatrix<M> r(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) r.data()[i] = truncate<M>(a.data()[i]);
  return r;
}

template <int M, int K>
std::vector<Jet<M>> truncate(const std::vector<Jet<K>>& a) {
  std::vector<Jet<M>> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = truncate<M>(a[i]);
  return r;
}

template <int K>
JetMatrix<K - 1> derivative(const JetMatrix<K>& a, int axis) {
  JetMatrix<K - 1> r(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) r.data()[i] = derivative(a.data()[i], axis);
  return r;
}

template <int K>
std::vector<Jet<K - 1>> derivative(const std::vector<Jet<K>>& a, int axis) {
  std::vector<Jet<K - 1>> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = derivative(a[i], axis);
  return r;
}

template <int K>
Matrix<double> values(const JetMatrix<K>& a) {
  Matrix<double> r(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) r.data()[i] = a.data()[i].value();
  return r;
}

inline Eigen::MatrixXd to_eigen(const Matrix<double>& a) {
  Eigen::MatrixXd r(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r(i, j) = a(i, j);
  return r;
}

template <int K>
Eigen::MatrixXd to_eigen(const JetMatrix<K>& a) {
  return to_eigen(values(a));
}

/// Largest absolute coefficient over all entries.
template <int K>
double max_abs(const JetMatrix<K>& a) {
  double m = 0.0;
  for (const auto& j : a.data())
    for (double v : j.coeffs()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs(const Matrix<double>& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

template <int K>
double max_abs(const Jet<K>& a) {
  double m = 0.0;
  for (double v : a.coeffs()) m = std::max(m, std::abs(v));
  return m;
}

/// Inverse of a small square jet matrix by Gauss-Jordan elimination with
/// partial pivoting on the base values.
template <int K>
JetMatrix<K> inverse(const JetMatrix<K>& a) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("inverse: matrix not square");
  JetMatrix<K> m = a;
  JetMatrix<K> inv = JetMatrix<K>::identity(n);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m(r, col).value()) > std::abs(m(piv, col).value())) piv = r;
    if (m(piv, col).value() == 0.0) throw std::domain_error("inverse: singular matrix");
    if (piv != col)
      for (int c = 0; c < n; ++c) {
        std::swap(m(piv, c), m(col, c));
        std::swap(inv(piv, c), inv(col, c));
      }
    const Jet<K> r = recip(m(col, col));
    for (int c = 0; c < n; ++c) {
      m(col, c) = m(col, c) * r;
      inv(col, c) = inv(col, c) * r;
    }
    for (int row = 0; row < n; ++row) {
      if (row == col || is_zero(m(row, col))) continue;
      const Jet<K> f = m(row, col);
      for (int c = 0; c < n; ++c) {
        if (!is_zero(m(col, c))) m(row, c) -= f * m(col, c);
        if (!is_zero(inv(col, c))) inv(row, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

/// Determinant by elimination (same pivoting as inverse).
template <int K>
Jet<K> determinant(const JetMatrix<K>& a) {
  const int n = a.rows();
  JetMatrix<K> m = a;
  Jet<K> det(1.0);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m(r, col).value()) > std::abs(m(piv, col).value())) piv = r;
    if (m(piv, col).value() == 0.0) return Jet<K>(0.0);
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(m(piv, c), m(col, c));
      det = -det;
    }
    det = det * m(col, col);
    const Jet<K> r = recip(m(col, col));
    for (int row = col + 1; row < n; ++row) {
      const Jet<K> f = m(row, col) * r;
      for (int c = col; c < n; ++c) m(row, c) -= f * m(col, c);
    }
  }
  return det;
}

}  // namespace cwe
