#ifndef SPINET_BASELINE_HPP
#define SPINET_BASELINE_HPP

#include <cstdint>
#include <vector>

#include "spinet/matrix.hpp"
#include "spinet/operators.hpp"

namespace spinet::baseline {

// Sparse symmetric matrix, upper triangle stored (row <= col).
struct SparseSymmetric {
  struct Entry {
    int row;
    int col;
    double value;
  };

  int dim = 0;
  std::vector<Entry> entries;

  void add(int r, int c, double v) {
    if (r <= c)
      entries.push_back({r, c, v});
    else
      entries.push_back({c, r, v});
  }

  DenseMatrix dense() const;

  // Gershgorin bound on the spectral radius.
  double norm_estimate() const;
};

// Full-pattern CSR expansion used for matvecs.
struct Csr {
  int dim = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  static Csr from_upper(const SparseSymmetric& m);
  void matvec(std::span<const double> x, std::span<double> y) const;
};

// 5-point stencil for -laplacian on an n x n grid over [-D, D]^2 with
// spacing h = 2D/(n+1) and Dirichlet boundary, plus diag(V) at the nodes.
// When the node lattice would contain the exact origin, the whole grid is
// offset by half a cell so the Coulomb singularity is never sampled.
SparseSymmetric grid_hamiltonian_build(int n_per_side, double halfwidth,
                                       const operators::Potential& potential);

// Node coordinates along one axis for the grid above.
std::vector<double> grid_axis(int n_per_side, double halfwidth);

struct EigResult {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // dim x k, orthonormal columns
};

// k smallest eigenpairs. Small problems are densified and handed to the
// Jacobi solver; larger ones use a block-Krylov Rayleigh-Ritz iteration with
// full reorthogonalization (plain single-vector Lanczos cannot reproduce the
// exactly degenerate pairs the symmetric grid spectrum contains).
EigResult smallest_eigs(const SparseSymmetric& matrix, int k,
                        std::uint64_t seed = 0);

}  // namespace spinet::baseline

#endif  // SPINET_BASELINE_HPP
