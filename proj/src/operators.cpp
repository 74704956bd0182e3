#include "spinet/operators.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "spinet/kernels.hpp"

namespace spinet::operators {

double coulomb_potential(std::span<const double> x, double r_min) {
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  const double r = std::sqrt(r2);
  return -1.0 / (r > r_min ? r : r_min);
}

double GridPotential::operator()(double x, double y) const {
  // clamp to the grid, then bilinear between the four surrounding nodes
  const double fx = (cols > 1) ? (x - xmin) / (xmax - xmin) * (cols - 1) : 0.0;
  const double fy = (rows > 1) ? (y - ymin) / (ymax - ymin) * (rows - 1) : 0.0;
  const double cx = std::min(std::max(fx, 0.0), static_cast<double>(cols - 1));
  const double cy = std::min(std::max(fy, 0.0), static_cast<double>(rows - 1));
  const int c0 = std::min(static_cast<int>(cx), cols - 2 >= 0 ? cols - 2 : 0);
  const int r0 = std::min(static_cast<int>(cy), rows - 2 >= 0 ? rows - 2 : 0);
  const int c1 = std::min(c0 + 1, cols - 1);
  const int r1 = std::min(r0 + 1, rows - 1);
  const double tx = cx - c0;
  const double ty = cy - r0;
  const double v00 = values[static_cast<size_t>(r0) * cols + c0];
  const double v01 = values[static_cast<size_t>(r0) * cols + c1];
  const double v10 = values[static_cast<size_t>(r1) * cols + c0];
  const double v11 = values[static_cast<size_t>(r1) * cols + c1];
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) +
         ty * ((1 - tx) * v10 + tx * v11);
}

GridPotential load_grid_potential(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_grid_potential: cannot open " + path);
  GridPotential g;
  in >> g.rows >> g.cols >> g.xmin >> g.xmax >> g.ymin >> g.ymax;
  if (!in || g.rows < 1 || g.cols < 1)
    throw IoError("load_grid_potential: malformed header in " + path);
  g.values.resize(static_cast<size_t>(g.rows) * g.cols);
  for (double& v : g.values) {
    in >> v;
    if (!in) throw IoError("load_grid_potential: truncated grid in " + path);
  }
  return g;
}

double Potential::operator()(std::span<const double> x) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Coulomb2D:
      return coulomb_potential(x, r_min);
    case Kind::Grid:
      return (*grid)(x.size() > 0 ? x[0] : 0.0, x.size() > 1 ? x[1] : 0.0);
  }
  return 0.0;
}

namespace {

// Stacks [x; x+eps e_0; x-eps e_0; x+eps e_1; ...] into one (2d+1)B x d batch.
DenseMatrix stack_fd_points(const DenseMatrix& x, double eps) {
  const int b = x.rows();
  const int d = x.cols();
  DenseMatrix p((2 * d + 1) * b, d);
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < d; ++c) p(r, c) = x(r, c);
  for (int i = 0; i < d; ++i) {
    const int plus = (1 + 2 * i) * b;
    const int minus = (2 + 2 * i) * b;
    for (int r = 0; r < b; ++r) {
      for (int c = 0; c < d; ++c) {
        p(plus + r, c) = x(r, c);
        p(minus + r, c) = x(r, c);
      }
      p(plus + r, i) += eps;
      p(minus + r, i) -= eps;
    }
  }
  return p;
}

// Second differences combined from stacked values: one row per base point.
DenseMatrix combine_laplacian(const DenseMatrix& stacked, int b, int d,
                              double eps) {
  const int k = stacked.cols();
  const double inv_eps2 = 1.0 / (eps * eps);
  DenseMatrix lap(b, k);
  for (int r = 0; r < b; ++r) {
    double* out = lap.row(r);
    const double* base = stacked.row(r);
    for (int i = 0; i < d; ++i) {
      const double* plus = stacked.row((1 + 2 * i) * b + r);
      const double* minus = stacked.row((2 + 2 * i) * b + r);
      for (int c = 0; c < k; ++c)
        out[c] += plus[c] + minus[c] - 2.0 * base[c];
    }
    for (int c = 0; c < k; ++c) out[c] *= inv_eps2;
  }
  return lap;
}

}  // namespace

DenseMatrix fd_laplacian_apply(const BatchFn& f, const DenseMatrix& x,
                               double eps) {
  require(eps > 0.0, "fd_laplacian_apply: eps must be positive");
  DenseMatrix stacked = stack_fd_points(x, eps);
  DenseMatrix values = f(stacked);
  require(values.rows() == stacked.rows(),
          "fd_laplacian_apply: evaluator returned wrong row count");
  return combine_laplacian(values, x.rows(), x.cols(), eps);
}

Direction kernel_direction(const KernelOp& /*op*/) {
  return Direction::Minimize;
}

DenseMatrix pair_kernel_pi_hat(const FeatureBatch& features_x,
                               const FeatureBatch& features_x_prime,
                               std::span<const double> kernel_values) {
  require(features_x.same_shape(features_x_prime),
          "pair_kernel_pi_hat: feature batches must match");
  require(static_cast<int>(kernel_values.size()) == features_x.rows(),
          "pair_kernel_pi_hat: one kernel value per pair required");
  const int b = features_x.rows();
  DenseMatrix weighted = features_x;
  for (int r = 0; r < b; ++r) {
    double* row = weighted.row(r);
    for (int c = 0; c < weighted.cols(); ++c) row[c] *= kernel_values[r];
  }
  DenseMatrix raw = kernels::matmul_tn(weighted, features_x_prime, 1.0 / b);
  return symmetrize(raw);
}

DenseMatrix slowness_pi_hat(const FeatureBatch& features_x,
                            const FeatureBatch& features_x_prime) {
  require(features_x.same_shape(features_x_prime),
          "slowness_pi_hat: feature batches must match");
  DenseMatrix diff = features_x;
  for (size_t i = 0; i < diff.size(); ++i)
    diff.data()[i] -= features_x_prime.data()[i];
  return kernels::matmul_tn(diff, diff, 1.0 / features_x.rows());
}

DenseMatrix hamiltonian_pi_hat(const FeatureNet& net,
                               const funcnet::ParamVector& params,
                               const DenseMatrix& batch, double eps,
                               const Potential& potential) {
  KernelOp op{LocalHamiltonian{eps, potential}};
  PairBatch pb{batch, {}};
  PiEstimator est(op, net, params, pb);
  return est.pi();
}

// ---------------------------------------------------------------------------
// PiEstimator

PiEstimator::PiEstimator(const KernelOp& op, const FeatureNet& net,
                         const funcnet::ParamVector& params,
                         const PairBatch& batch)
    : op_(op), net_(net), params_(params), batch_(batch) {
  const int b = batch.first.rows();
  require(b > 0, "PiEstimator: empty batch");

  if (const auto* local = std::get_if<LocalHamiltonian>(&op.kernel)) {
    const int d = batch.first.cols();
    const double eps = local->fd_step;
    stacked_points_ = stack_fd_points(batch.first, eps);
    stacked_cache_ =
        net.forward_cached(params, stacked_points_, &stacked_values_);

    u_first_ = DenseMatrix(b, stacked_values_.cols());
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < u_first_.cols(); ++c)
        u_first_(r, c) = stacked_values_(r, c);
    // base-batch view with its own cache for the covariance Jacobian passes
    base_features_ = u_first_;
    base_cache_ = net.forward_cached(params, batch.first, nullptr);

    DenseMatrix lap = combine_laplacian(stacked_values_, b, d, eps);
    v_at_points_.resize(b);
    for (int r = 0; r < b; ++r)
      v_at_points_[r] = local->potential(
          std::span<const double>(batch.first.row(r), static_cast<size_t>(d)));

    hu_ = DenseMatrix(b, u_first_.cols());
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < hu_.cols(); ++c)
        hu_(r, c) = -lap(r, c) + v_at_points_[r] * u_first_(r, c);

    pi_ = symmetrize(kernels::matmul_tn(u_first_, hu_, 1.0 / b));
    return;
  }

  require(batch.second.rows() == b,
          "PiEstimator: pair kernel needs matched batches");
  require(batch.second.cols() == batch.first.cols(),
          "PiEstimator: pair batches must share the input width");

  // one stacked evaluation [first; second] shares its cache between the
  // estimator backward and the covariance Jacobian passes
  const int d = batch.first.cols();
  stacked_points_ = DenseMatrix(2 * b, d);
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < d; ++c) {
      stacked_points_(r, c) = batch.first(r, c);
      stacked_points_(b + r, c) = batch.second(r, c);
    }
  stacked_cache_ =
      net.forward_cached(params, stacked_points_, &stacked_values_);
  const int k = stacked_values_.cols();
  u_first_ = DenseMatrix(b, k);
  u_second_ = DenseMatrix(b, k);
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < k; ++c) {
      u_first_(r, c) = stacked_values_(r, c);
      u_second_(r, c) = stacked_values_(b + r, c);
    }

  if (const auto* tab = std::get_if<TabularKernel>(&op.kernel)) {
    kernel_values_.resize(b);
    for (int r = 0; r < b; ++r) {
      const int s = static_cast<int>(std::llround(batch.first(r, 0)));
      const int sp = static_cast<int>(std::llround(batch.second(r, 0)));
      kernel_values_[r] = tab->value(s, sp);
    }
    pi_ = pair_kernel_pi_hat(u_first_, u_second_, kernel_values_);
  } else {
    pi_ = slowness_pi_hat(u_first_, u_second_);
  }
}

const DenseMatrix& PiEstimator::jac_inputs() const {
  return op_.is_local() ? batch_.first : stacked_points_;
}

const FeatureBatch& PiEstimator::jac_features() const {
  return op_.is_local() ? base_features_ : stacked_values_;
}

const FeatureNet::Cache* PiEstimator::jac_cache() const {
  return op_.is_local() ? base_cache_.get() : stacked_cache_.get();
}

funcnet::ParamVector PiEstimator::vjp(const DenseMatrix& cotangent) const {
  const int k = pi_.rows();
  require(cotangent.rows() == k && cotangent.cols() == k,
          "PiEstimator::vjp: cotangent must be K x K");
  // Column-masked backward convention of the reference update: the flow into
  // feature j comes from column j of the cotangent on BOTH covariance slots
  // (u * G, never u * G^T). For an asymmetric masked cotangent this is what
  // keeps gradients of Lambda_kk away from features below k; a transposed
  // (exact-VJP) flow would leak across features and break the ordering. For
  // symmetric cotangents, and always at K=1, it coincides with the exact VJP.
  const DenseMatrix& g = cotangent;
  const int b = batch_.first.rows();
  const double inv_b = 1.0 / b;

  if (const auto* local = std::get_if<LocalHamiltonian>(&op_.kernel)) {
    const int d = batch_.first.cols();
    const double eps = local->fd_step;
    const double inv_eps2 = 1.0 / (eps * eps);

    // pi = (1/B) U^T Hu with Hu = -lap(U) + V U: the Hu-slot cotangent
    // distributes through the finite-difference stencil onto the stacked
    // evaluation rows.
    DenseMatrix g_w = kernels::matmul(u_first_, g);   // Hu-slot flow * B
    DenseMatrix g_u = kernels::matmul(hu_, g);        // u-slot flow * B

    DenseMatrix cot(stacked_points_.rows(), k);
    for (int r = 0; r < b; ++r) {
      double* out = cot.row(r);
      const double* gu = g_u.row(r);
      const double* gw = g_w.row(r);
      const double f = v_at_points_[r] + 2.0 * d * inv_eps2;
      for (int c = 0; c < k; ++c) out[c] = inv_b * (gu[c] + f * gw[c]);
    }
    for (int i = 0; i < d; ++i) {
      for (int r = 0; r < b; ++r) {
        const double* gw = g_w.row(r);
        double* plus = cot.row((1 + 2 * i) * b + r);
        double* minus = cot.row((2 + 2 * i) * b + r);
        for (int c = 0; c < k; ++c) {
          const double v = -inv_b * inv_eps2 * gw[c];
          plus[c] = v;
          minus[c] = v;
        }
      }
    }
    return net_.backward_cached(params_, stacked_points_, stacked_cache_.get(),
                                cot);
  }

  if (std::holds_alternative<TabularKernel>(op_.kernel)) {
    // pi = (1/B) sum_b k_b u_b u'_b^T
    DenseMatrix cot_first = kernels::matmul(u_second_, g);
    DenseMatrix cot_second = kernels::matmul(u_first_, g);
    DenseMatrix cot(2 * b, k);
    for (int r = 0; r < b; ++r) {
      const double w = inv_b * kernel_values_[r];
      for (int c = 0; c < k; ++c) {
        cot(r, c) = w * cot_first(r, c);
        cot(b + r, c) = w * cot_second(r, c);
      }
    }
    return net_.backward_cached(params_, stacked_points_, stacked_cache_.get(),
                                cot);
  }

  // slowness: pi = (1/B) sum_b (u_b - u'_b)(u_b - u'_b)^T; both slots hold
  // the difference, so the flows add
  DenseMatrix diff = u_first_;
  for (size_t i = 0; i < diff.size(); ++i)
    diff.data()[i] -= u_second_.data()[i];
  DenseMatrix flow = kernels::matmul(diff, g);
  DenseMatrix cot(2 * b, k);
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < k; ++c) {
      const double v = 2.0 * inv_b * flow(r, c);
      cot(r, c) = v;
      cot(b + r, c) = -v;
    }
  return net_.backward_cached(params_, stacked_points_, stacked_cache_.get(),
                              cot);
}

}  // namespace spinet::operators
