#ifndef SPINET_MATRIX_HPP
#define SPINET_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "spinet/error.hpp"

namespace spinet {

// Dense row-major real matrix. Carries Sigma, Pi, Lambda, feature batches and
// every linear-algebra intermediate in the library.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  static DenseMatrix identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

  double trace() const {
    double t = 0.0;
    int n = rows_ < cols_ ? rows_ : cols_;
    for (int i = 0; i < n; ++i) t += (*this)(i, i);
    return t;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// B x K matrix of network outputs u(x) for a minibatch.
using FeatureBatch = DenseMatrix;

// Lower-triangular matrix with strictly positive diagonal (Cholesky factors).
// Stored full row-major; entries above the diagonal are exactly zero.
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(int dim) : dim_(dim), data_(static_cast<size_t>(dim) * dim, 0.0) {}

  static LowerTriangular identity(int n) {
    LowerTriangular l(n);
    for (int i = 0; i < n; ++i) l(i, i) = 1.0;
    return l;
  }

  int dim() const { return dim_; }
  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * dim_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * dim_ + c]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  DenseMatrix dense() const {
    DenseMatrix m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw DimensionMismatch(what);
}

// Symmetry tolerance used before any symmetric-only routine runs.
inline void require_symmetric(const DenseMatrix& a, const char* where) {
  require(a.rows() == a.cols(), where);
  double tol = 1e-12 * std::max(1.0, a.max_abs());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (std::fabs(a(i, j) - a(j, i)) > tol)
        throw DimensionMismatch(std::string(where) + ": input is not symmetric");
}

inline DenseMatrix symmetrize(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "symmetrize: square input required");
  DenseMatrix s(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

}  // namespace spinet

#endif  // SPINET_MATRIX_HPP
