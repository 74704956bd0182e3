#include "spinet/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spinet/kernels.hpp"
#include "spinet/linalg.hpp"
#include "spinet/rng.hpp"

namespace spinet::baseline {

DenseMatrix SparseSymmetric::dense() const {
  DenseMatrix m(dim, dim);
  for (const Entry& e : entries) {
    m(e.row, e.col) += e.value;
    if (e.row != e.col) m(e.col, e.row) += e.value;
  }
  return m;
}

double SparseSymmetric::norm_estimate() const {
  std::vector<double> row_sum(dim, 0.0);
  for (const Entry& e : entries) {
    row_sum[e.row] += std::fabs(e.value);
    if (e.row != e.col) row_sum[e.col] += std::fabs(e.value);
  }
  double m = 0.0;
  for (double s : row_sum) m = std::max(m, s);
  return m;
}

Csr Csr::from_upper(const SparseSymmetric& m) {
  Csr out;
  out.dim = m.dim;
  std::vector<int> count(m.dim + 1, 0);
  for (const auto& e : m.entries) {
    ++count[e.row + 1];
    if (e.row != e.col) ++count[e.col + 1];
  }
  out.row_ptr.resize(m.dim + 1, 0);
  for (int i = 0; i < m.dim; ++i) out.row_ptr[i + 1] = out.row_ptr[i] + count[i + 1];
  out.col.resize(out.row_ptr.back());
  out.val.resize(out.row_ptr.back());
  std::vector<int> cursor(out.row_ptr.begin(), out.row_ptr.end() - 1);
  for (const auto& e : m.entries) {
    out.col[cursor[e.row]] = e.col;
    out.val[cursor[e.row]++] = e.value;
    if (e.row != e.col) {
      out.col[cursor[e.col]] = e.row;
      out.val[cursor[e.col]++] = e.value;
    }
  }
  // sort columns within each row for a deterministic accumulation order
  for (int r = 0; r < m.dim; ++r) {
    const int lo = out.row_ptr[r];
    const int hi = out.row_ptr[r + 1];
    std::vector<std::pair<int, double>> tmp;
    tmp.reserve(hi - lo);
    for (int p = lo; p < hi; ++p) tmp.emplace_back(out.col[p], out.val[p]);
    std::sort(tmp.begin(), tmp.end());
    for (int p = lo; p < hi; ++p) {
      out.col[p] = tmp[p - lo].first;
      out.val[p] = tmp[p - lo].second;
    }
  }
  return out;
}

void Csr::matvec(std::span<const double> x, std::span<double> y) const {
  kernels::csr_matvec(dim, row_ptr, col, val, x, y);
}

std::vector<double> grid_axis(int n_per_side, double halfwidth) {
  const double h = 2.0 * halfwidth / (n_per_side + 1);
  // the lattice hits the origin exactly when (n+1) is even
  const double offset = ((n_per_side + 1) % 2 == 0) ? 0.5 * h : 0.0;
  std::vector<double> axis(n_per_side);
  for (int i = 0; i < n_per_side; ++i)
    axis[i] = -halfwidth + (i + 1) * h + offset;
  return axis;
}

SparseSymmetric grid_hamiltonian_build(int n_per_side, double halfwidth,
                                       const operators::Potential& potential) {
  require(n_per_side >= 3, "grid_hamiltonian_build: n_per_side must be >= 3");
  const int n = n_per_side;
  const double h = 2.0 * halfwidth / (n + 1);
  const double inv_h2 = 1.0 / (h * h);
  std::vector<double> axis = grid_axis(n, halfwidth);

  SparseSymmetric m;
  m.dim = n * n;
  m.entries.reserve(static_cast<size_t>(m.dim) * 3);
  for (int ix = 0; ix < n; ++ix) {
    for (int iy = 0; iy < n; ++iy) {
      const int idx = ix * n + iy;
      const double xy[2] = {axis[ix], axis[iy]};
      m.entries.push_back({idx, idx, 4.0 * inv_h2 + potential(xy)});
      if (iy + 1 < n) m.entries.push_back({idx, idx + 1, -inv_h2});
      if (ix + 1 < n) m.entries.push_back({idx, idx + n, -inv_h2});
    }
  }
  return m;
}

namespace {

// Orthogonalizes column vector w (length n) against the columns of basis
// (n x m, column-major storage as vector of vectors); two classical passes.
void reorthogonalize(const std::vector<std::vector<double>>& basis,
                     std::vector<double>& w) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& v : basis) {
      double dot = 0.0;
      for (size_t i = 0; i < w.size(); ++i) dot += v[i] * w[i];
      for (size_t i = 0; i < w.size(); ++i) w[i] -= dot * v[i];
    }
  }
}

double vec_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

EigResult dense_smallest(const SparseSymmetric& matrix, int k) {
  auto eig = linalg::sym_eig(matrix.dense());
  const int n = matrix.dim;
  EigResult out;
  out.values.resize(k);
  out.vectors = DenseMatrix(n, k);
  // sym_eig sorts descending; take from the back
  for (int i = 0; i < k; ++i) {
    const int src = n - 1 - i;
    out.values[i] = eig.values[src];
    for (int r = 0; r < n; ++r) out.vectors(r, i) = eig.vectors(r, src);
  }
  return out;
}

}  // namespace

EigResult smallest_eigs(const SparseSymmetric& matrix, int k,
                        std::uint64_t seed) {
  require(k >= 1 && k <= matrix.dim, "smallest_eigs: k out of range");
  const int n = matrix.dim;
  if (n <= 128 || k * 2 >= n) return dense_smallest(matrix, k);

  const Csr a = Csr::from_upper(matrix);
  const double norm_a = std::max(matrix.norm_estimate(), 1e-30);
  const double tol = 1e-8 * norm_a;

  const int block = std::min(n, k + 3);
  const int max_basis = std::min(n, std::max(12 * k, 240));
  const int max_rounds = 600;

  std::vector<std::vector<double>> basis;   // orthonormal columns
  std::vector<std::vector<double>> a_basis; // A * basis columns

  auto eng = make_engine(seed, 0x4C414E /* LAN */);
  auto append_column = [&](std::vector<double> w) -> bool {
    reorthogonalize(basis, w);
    const double nw = vec_norm(w);
    if (nw < 1e-10) return false;  // linearly dependent, drop
    for (double& x : w) x /= nw;
    std::vector<double> aw(n);
    a.matvec(w, aw);
    basis.push_back(std::move(w));
    a_basis.push_back(std::move(aw));
    return true;
  };

  // random orthonormal start block
  for (int c = 0; c < block; ++c) {
    std::vector<double> w(n);
    for (double& x : w) x = uniform_in(eng, -1.0, 1.0);
    append_column(std::move(w));
  }

  EigResult out;
  for (int round = 0; round < max_rounds; ++round) {
    const int m = static_cast<int>(basis.size());
    // projected matrix H = V^T A V
    DenseMatrix h(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        double dot = 0.0;
        for (int r = 0; r < n; ++r) dot += basis[i][r] * a_basis[j][r];
        h(i, j) = dot;
        h(j, i) = dot;
      }
    auto eig = linalg::sym_eig(h);

    // k smallest Ritz pairs (sym_eig sorts descending)
    DenseMatrix ritz(n, k);
    std::vector<double> vals(k);
    for (int c = 0; c < k; ++c) {
      const int src = m - 1 - c;
      vals[c] = eig.values[src];
      for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += basis[i][r] * eig.vectors(i, src);
        ritz(r, c) = s;
      }
    }

    // residuals r_c = A x_c - lambda_c x_c
    bool converged = true;
    std::vector<std::vector<double>> residuals;
    for (int c = 0; c < k; ++c) {
      std::vector<double> r(n);
      for (int row = 0; row < n; ++row) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += a_basis[i][row] * eig.vectors(i, m - 1 - c);
        r[row] = s - vals[c] * ritz(row, c);
      }
      if (vec_norm(r) > tol) {
        converged = false;
        residuals.push_back(std::move(r));
      }
    }

    if (converged) {
      out.values = std::move(vals);
      out.vectors = std::move(ritz);
      return out;
    }

    if (m + static_cast<int>(residuals.size()) > max_basis) {
      // restart from the current Ritz block plus a little padding
      std::vector<std::vector<double>> seed_cols;
      for (int c = 0; c < std::min(m, block); ++c) {
        std::vector<double> x(n);
        for (int r = 0; r < n; ++r)
          x[r] = c < k ? ritz(r, c) : uniform_in(eng, -1.0, 1.0);
        seed_cols.push_back(std::move(x));
      }
      basis.clear();
      a_basis.clear();
      for (auto& cvec : seed_cols) append_column(std::move(cvec));
    }

    bool grew = false;
    for (auto& r : residuals)
      if (append_column(std::move(r))) grew = true;
    if (!grew) {
      // expand with fresh random directions to escape stagnation
      for (int c = 0; c < 2; ++c) {
        std::vector<double> w(n);
        for (double& x : w) x = uniform_in(eng, -1.0, 1.0);
        if (append_column(std::move(w))) grew = true;
      }
      if (!grew)
        throw NonConvergence("smallest_eigs: basis stagnated at round " +
                             std::to_string(round));
    }
  }
  throw NonConvergence("smallest_eigs: no convergence after 600 rounds");
}

}  // namespace spinet::baseline
