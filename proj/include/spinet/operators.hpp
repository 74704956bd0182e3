#ifndef SPINET_OPERATORS_HPP
#define SPINET_OPERATORS_HPP

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spinet/funcnet.hpp"
#include "spinet/matrix.hpp"

namespace spinet::operators {

using funcnet::FeatureNet;

// -1 / max(|x|, r_min): attractive Coulomb potential with a radial clamp.
double coulomb_potential(std::span<const double> x, double r_min);

// Potential sampled on a rectangular grid, bilinearly interpolated.
struct GridPotential {
  int rows = 0;
  int cols = 0;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  std::vector<double> values;  // row-major

  double operator()(double x, double y) const;
};

// Text format: header line "rows cols xmin xmax ymin ymax", then rows*cols
// whitespace-separated reals, row-major.
GridPotential load_grid_potential(const std::string& path);

struct Potential {
  enum class Kind { Zero, Coulomb2D, Grid };
  Kind kind = Kind::Zero;
  double r_min = 1e-3;
  std::shared_ptr<const GridPotential> grid;

  static Potential zero() { return {}; }
  static Potential coulomb(double r_min) {
    Potential p;
    p.kind = Kind::Coulomb2D;
    p.r_min = r_min;
    return p;
  }
  static Potential from_grid(GridPotential g) {
    Potential p;
    p.kind = Kind::Grid;
    p.grid = std::make_shared<GridPotential>(std::move(g));
    return p;
  }

  double operator()(std::span<const double> x) const;
};

// Batch-evaluable function handed to the finite-difference Laplacian:
// takes B x d points, returns B x K values.
using BatchFn = std::function<DenseMatrix(const DenseMatrix&)>;

// (1/eps^2) sum_i [f(x + eps e_i) + f(x - eps e_i) - 2 f(x)], one row per
// batch point, one column per output of f. Exactly 2d+1 evaluations per
// point, performed as a single stacked batch.
DenseMatrix fd_laplacian_apply(const BatchFn& f, const DenseMatrix& x,
                               double eps);

// The three operator variants.
struct TabularKernel {
  DenseMatrix matrix;  // M x M symmetric
  bool negate = false;

  // Kernel value for a state pair under uniform sampling. Includes the
  // 1/p(s') density compensation (a factor of M) so that the induced
  // operator is plain multiplication by the matrix and the trained
  // eigenvalues line up with its spectrum.
  double value(int s, int s_prime) const {
    const double sign = negate ? -1.0 : 1.0;
    return sign * matrix.rows() * matrix(s, s_prime);
  }
};

struct SlownessKernel {};

struct LocalHamiltonian {
  double fd_step = 0.1;
  Potential potential;
};

using KernelVariant = std::variant<TabularKernel, SlownessKernel, LocalHamiltonian>;

struct KernelOp {
  KernelVariant kernel;

  bool is_local() const {
    return std::holds_alternative<LocalHamiltonian>(kernel);
  }
  bool is_pairwise() const { return !is_local(); }
};

enum class Direction { Minimize, Maximize };

// The trainer always minimizes sum_i Lambda_ii. Operators whose top
// eigenvalues are wanted must arrive negated (TabularKernel::negate), so
// every variant reports Minimize.
Direction kernel_direction(const KernelOp& op);

// A minibatch for the operator estimators. Local operators use `first`
// only; pair kernels sample (first, second) jointly.
struct PairBatch {
  DenseMatrix first;
  DenseMatrix second;
};

// Raw estimator forms (kernel values supplied by the caller):
// symmetrize((1/B) sum_b k_b u(x_b) u(x'_b)^T)
DenseMatrix pair_kernel_pi_hat(const FeatureBatch& features_x,
                               const FeatureBatch& features_x_prime,
                               std::span<const double> kernel_values);
// (1/B) sum_b (u(x_b) - u(x'_b))(u(x_b) - u(x'_b))^T
DenseMatrix slowness_pi_hat(const FeatureBatch& features_x,
                            const FeatureBatch& features_x_prime);
// symmetrize((1/B) sum_b u(x_b) (Hu)(x_b)^T) with Hu = -laplacian(u) + V u.
DenseMatrix hamiltonian_pi_hat(const FeatureNet& net,
                               const funcnet::ParamVector& params,
                               const DenseMatrix& batch, double eps,
                               const Potential& potential);

// One-step estimator of Pi-hat that keeps its forward caches so the exact
// VJP (and the feature batches for Sigma-hat) can reuse them.
class PiEstimator {
 public:
  PiEstimator(const KernelOp& op, const FeatureNet& net,
              const funcnet::ParamVector& params, const PairBatch& batch);

  const DenseMatrix& pi() const { return pi_; }
  // Features for the covariance estimate. For local operators both views
  // alias the same batch.
  const FeatureBatch& features_first() const { return u_first_; }
  const FeatureBatch& features_second() const {
    return u_second_.rows() > 0 ? u_second_ : u_first_;
  }
  // Batch view for the covariance estimate and its Jacobian: the base batch
  // for local operators, the two batches stacked for pair kernels. The cache
  // lets every backward pass skip the forward recompute.
  const DenseMatrix& jac_inputs() const;
  const FeatureBatch& jac_features() const;
  const FeatureNet::Cache* jac_cache() const;

  // Masked backward through the estimator with matrix cotangent `cotangent`
  // applied in the reference one-sided form (u * G on both slots).
  funcnet::ParamVector vjp(const DenseMatrix& cotangent) const;

 private:
  const KernelOp& op_;
  const FeatureNet& net_;
  const funcnet::ParamVector& params_;
  const PairBatch& batch_;

  DenseMatrix pi_;
  FeatureBatch u_first_;
  FeatureBatch u_second_;

  // stacked evaluation: fd stencil points for the local operator, or the
  // two pair batches concatenated
  DenseMatrix stacked_points_;
  FeatureBatch stacked_values_;
  std::unique_ptr<FeatureNet::Cache> stacked_cache_;
  FeatureBatch base_features_;  // local mode: rows 0..B of the stack
  std::unique_ptr<FeatureNet::Cache> base_cache_;
  DenseMatrix hu_;
  std::vector<double> v_at_points_;
  std::vector<double> kernel_values_;
};

}  // namespace spinet::operators

#endif  // SPINET_OPERATORS_HPP
