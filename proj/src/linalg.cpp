#include "spinet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace spinet::linalg {

namespace {

// Single factorization attempt, Cholesky-Banachiewicz ordering. Returns false
// when a pivot is non-positive or loses all significance. The row-by-row
// order means entries of L in the leading n x n block depend only on the
// leading block of the input, which the block-independence tests rely on.
bool try_factor(const DenseMatrix& a, double jitter, LowerTriangular& l) {
  const int n = a.rows();
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a(i, i)) + jitter);
  const double pivot_floor = static_cast<double>(n) * 1e-16 * max_diag;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      if (i == j) s += jitter;
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > pivot_floor) || !std::isfinite(s)) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return true;
}

}  // namespace

CholeskyResult cholesky(const DenseMatrix& a, const JitterPolicy& policy) {
  if (a.rows() != a.cols())
    throw DimensionMismatch("cholesky: input must be square");
  require_symmetric(a, "cholesky");

  const int n = a.rows();
  CholeskyResult result;
  result.factor = LowerTriangular(n);
  if (try_factor(a, 0.0, result.factor)) return result;

  double scale = a.trace() / n;
  if (!(scale > 0.0)) scale = 1.0;
  double lambda = policy.base * scale;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    result.factor = LowerTriangular(n);
    if (try_factor(a, lambda, result.factor)) {
      result.applied_jitter = lambda;
      result.attempts = attempt;
      return result;
    }
    lambda *= policy.growth;
  }
  throw NotPositiveDefinite(
      "cholesky: matrix not positive definite after " +
      std::to_string(policy.max_attempts) + " jitter attempts (last lambda " +
      std::to_string(lambda / policy.growth) + ")");
}

LowerTriangular lower_inverse(const LowerTriangular& l) {
  const int n = l.dim();
  for (int i = 0; i < n; ++i)
    if (std::fabs(l(i, i)) < 1e-300)
      throw SingularDiagonal("lower_inverse: zero pivot at index " +
                             std::to_string(i));

  LowerTriangular x(n);
  for (int j = 0; j < n; ++j) {
    x(j, j) = 1.0 / l(j, j);
    for (int i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (int k = j; k < i; ++k) s += l(i, k) * x(k, j);
      x(i, j) = -s / l(i, i);
    }
  }
  return x;
}

SymEig sym_eig(const DenseMatrix& input) {
  if (input.rows() != input.cols())
    throw DimensionMismatch("sym_eig: input must be square");
  require_symmetric(input, "sym_eig");

  const int n = input.rows();
  DenseMatrix a = input;
  DenseMatrix v = DenseMatrix::identity(n);

  double fro = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) fro += a(i, j) * a(i, j);
  fro = std::sqrt(fro);
  const double tol = 1e-14 * (fro > 0.0 ? fro : 1.0);

  const int max_sweeps = 100;
  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // skip rotations that cannot change anything at working precision
        if (std::fabs(apq) <= 1e-18 * (std::fabs(app) + std::fabs(aqq)))
          continue;
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    // final check: the sweep loop may have exited right at the boundary
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) > tol)
      throw NonConvergence("sym_eig: Jacobi did not converge in 100 sweeps");
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i) > a(j, j); });

  SymEig out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (int k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (int r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

DenseMatrix triu_inc_diag(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "triu_inc_diag: square input required");
  DenseMatrix out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i; j < a.cols(); ++j) out(i, j) = a(i, j);
  return out;
}

DenseMatrix diag_inv(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "diag_inv: square input required");
  DenseMatrix out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    if (a(i, i) == 0.0)
      throw SingularDiagonal("diag_inv: zero diagonal entry at index " +
                             std::to_string(i));
    out(i, i) = 1.0 / a(i, i);
  }
  return out;
}

DenseMatrix phi(const DenseMatrix& a) {
  require(a.rows() == a.cols(), "phi: square input required");
  DenseMatrix out = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j) out(i, j) = a(j, i);
  return out;
}

}  // namespace spinet::linalg
