#ifndef SPINET_LINALG_HPP
#define SPINET_LINALG_HPP

#include <vector>

#include "spinet/matrix.hpp"

namespace spinet::linalg {

// Escalation schedule for factorizing near-singular symmetric matrices:
// attempt bare, then add lambda*I with lambda = base * growth^k * trace/dim
// for k = 0 .. max_attempts-1.
struct JitterPolicy {
  int max_attempts = 6;
  double base = 1e-12;
  double growth = 100.0;
};

struct CholeskyResult {
  LowerTriangular factor;
  double applied_jitter = 0.0;  // absolute lambda added to the diagonal
  int attempts = 0;             // number of jittered retries that were needed
};

// Lower Cholesky factor of a symmetric positive definite matrix.
// Throws NotPositiveDefinite once the jitter schedule is exhausted.
CholeskyResult cholesky(const DenseMatrix& a, const JitterPolicy& policy = {});

// Inverse of a lower-triangular matrix by forward substitution.
// Throws SingularDiagonal when a pivot underflows (|l_ii| < 1e-300).
LowerTriangular lower_inverse(const LowerTriangular& l);

struct SymEig {
  std::vector<double> values;  // sorted descending
  DenseMatrix vectors;         // columns are eigenvectors, V^T V = I
};

// Symmetric eigendecomposition by cyclic Jacobi sweeps.
// Throws NonConvergence after 100 sweeps.
SymEig sym_eig(const DenseMatrix& a);

// Upper triangle including the diagonal; strictly-lower entries zeroed.
DenseMatrix triu_inc_diag(const DenseMatrix& a);

// diag(a)^-1 as a diagonal matrix. Throws SingularDiagonal on a zero entry.
DenseMatrix diag_inv(const DenseMatrix& a);

// Replaces the strict upper triangle with the transposed strict lower one.
DenseMatrix phi(const DenseMatrix& a);

}  // namespace spinet::linalg

#endif  // SPINET_LINALG_HPP
