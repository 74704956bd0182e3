#ifndef SPINET_SPIN_HPP
#define SPINET_SPIN_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spinet/funcnet.hpp"
#include "spinet/linalg.hpp"
#include "spinet/matrix.hpp"
#include "spinet/operators.hpp"

namespace spinet::spin {

using funcnet::FeatureNet;
using funcnet::ParamVector;

// Moving averages of the covariance and of its parameter Jacobian. The
// Jacobian tensor is stored flat with slice (i*K + j)*P .. +P holding
// d Sigma[i,j] / d theta.
struct AveragedState {
  DenseMatrix sigma_bar;            // K x K, starts at identity
  std::vector<double> jac_sigma_bar;  // K*K*P, starts at zero
  double beta = 0.01;

  int k() const { return sigma_bar.rows(); }
  size_t param_count() const {
    const size_t kk = static_cast<size_t>(k()) * k();
    return kk == 0 ? 0 : jac_sigma_bar.size() / kk;
  }

  static AveragedState initial(int k, size_t p, double beta) {
    AveragedState s;
    s.sigma_bar = DenseMatrix::identity(k);
    s.jac_sigma_bar.assign(static_cast<size_t>(k) * k * p, 0.0);
    s.beta = beta;
    return s;
  }
};

struct RmsState {
  std::vector<double> mean_square;
  double decay = 0.999;
  double epsilon = 1e-10;
  double learning_rate = 1e-5;
};

struct TrainState {
  std::uint64_t step = 0;
  ParamVector params;
  AveragedState averages;
  RmsState opt;
  std::uint64_t seed = 0;
};

struct EigenReport {
  std::vector<double> lambdas;   // diag of Lambda
  LowerTriangular chol;          // L with L L^T = sigma_bar (+ jitter)
  DenseMatrix lambda_full;       // Lambda = L^-1 Pi L^-T
  double applied_jitter = 0.0;
  std::optional<linalg::SymEig> full_eigs;  // sym_eig(Lambda) on request
};

// 0.5 * (mean outer product of a + mean outer product of b).
DenseMatrix sigma_hat(const FeatureBatch& features_a,
                      const FeatureBatch& features_b);

struct MaskedGradients {
  DenseMatrix d_pi;     // L^-T diag(L)^-1
  DenseMatrix d_sigma;  // -L^-T triu_inc_diag(Lambda diag(L)^-1)
  EigenReport report;
};

// Closed-form masked gradient of sum_i Lambda_ii with respect to Pi and
// Sigma, evaluated at (pi_hat, sigma_bar).
MaskedGradients masked_gradient_matrices(const DenseMatrix& pi_hat,
                                         const DenseMatrix& sigma_bar,
                                         const linalg::JitterPolicy& jitter = {});

// One batch view for the covariance Jacobian; cache may be null.
struct SigmaBatch {
  const DenseMatrix* inputs = nullptr;
  const FeatureBatch* features = nullptr;
  const FeatureNet::Cache* cache = nullptr;
};

// d Sigma-hat[i,j] / d theta for all i,j, where Sigma-hat averages the
// per-batch second moments with equal weight. K(K+1)/2 backward passes per
// batch; the (j,i) slice is copied from (i,j).
std::vector<double> jacobian_of_sigma(const FeatureNet& net,
                                      const ParamVector& params,
                                      const std::vector<SigmaBatch>& batches);

// VJP through the Pi estimator with matrix cotangent d_pi, plus the frozen
// Sigma path sum_ij d_sigma[i,j] * jac_sigma_bar[i,j,:].
ParamVector assemble_param_gradient(const operators::PiEstimator& estimator,
                                    const DenseMatrix& d_pi,
                                    const DenseMatrix& d_sigma,
                                    const std::vector<double>& jac_sigma_bar);

// Convex-combination update of both averages.
void moving_average_update(AveragedState& state, const DenseMatrix& sigma_hat,
                           const std::vector<double>& jac_sigma_hat,
                           double beta_t);

// ms <- decay*ms + (1-decay)*g^2 ; theta <- theta - alpha*g/(sqrt(ms)+eps)
void rmsprop_step(RmsState& opt, ParamVector& params, const ParamVector& grad);

// Deterministic minibatch source: a pure function of (seed, step).
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual operators::PairBatch batch(std::uint64_t seed,
                                     std::uint64_t step) const = 0;
};

struct LogRecord {
  std::uint64_t step = 0;
  std::vector<double> lambdas;
  double grad_norm = 0.0;
  double sigma_cond = 0.0;
};

struct TrainConfig {
  std::uint64_t iterations = 0;
  std::uint64_t seed = 0;
  double beta = 0.01;
  double learning_rate = 1e-5;
  double rmsprop_decay = 0.999;
  double rmsprop_epsilon = 1e-10;
  // Robbins-Monro decay of the parameter step (alpha_t = alpha * t^-0.7)
  // instead of a constant rate.
  bool robbins_monro = false;
  std::function<void(const LogRecord&)> log_sink;
  // Callback after each step; may be used for checkpointing. Optional.
  std::function<void(const TrainState&)> step_hook;
};

// Validates the two-timescale requirement beta > 1 - rmsprop_decay.
void validate_timescales(double beta, double rmsprop_decay);

// Runs Alg-style training from `initial` (or a fresh state when the params
// are empty) and returns the final state.
TrainState train_loop(const TrainConfig& config,
                      const operators::KernelOp& kernel, const FeatureNet& net,
                      const BatchSource& source,
                      std::optional<TrainState> initial = std::nullopt);

enum class ExtractionMode { CholeskyOnly, FullDiagonalize };

// Orthogonalized (and optionally rotated) eigenfunction evaluator.
struct OrderedEigenfunctions {
  LowerTriangular chol_inverse;          // L^-1
  std::optional<DenseMatrix> rotation;   // V from sym_eig(Lambda), full mode
  std::vector<double> eigenvalues;       // diag Lambda, or sorted ascending

  // Rows are v(x)^T = (L^-1 u(x))^T, rotated by V when present.
  DenseMatrix evaluate(const FeatureNet& net, const ParamVector& params,
                       const DenseMatrix& inputs) const;
  DenseMatrix apply(const FeatureBatch& features) const;
};

OrderedEigenfunctions ordered_eigenfunctions(const DenseMatrix& sigma_bar,
                                             const DenseMatrix& lambda_full,
                                             ExtractionMode mode);

// Prepends a parameterless constant-one output; gradients to it vanish.
class ConstantFirstNet : public FeatureNet {
 public:
  explicit ConstantFirstNet(std::shared_ptr<const FeatureNet> inner)
      : inner_(std::move(inner)) {}

  int input_dim() const override { return inner_->input_dim(); }
  int n_outputs() const override { return inner_->n_outputs() + 1; }
  std::shared_ptr<const funcnet::ParamLayout> layout() const override {
    return inner_->layout();
  }
  ParamVector init_params(std::uint64_t seed) const override {
    return inner_->init_params(seed);
  }
  FeatureBatch forward(const ParamVector& params,
                       const DenseMatrix& inputs) const override;
  ParamVector backward(const ParamVector& params, const DenseMatrix& inputs,
                       const DenseMatrix& cotangent) const override;
  std::unique_ptr<Cache> forward_cached(const ParamVector& params,
                                        const DenseMatrix& inputs,
                                        FeatureBatch* out) const override;
  ParamVector backward_cached(const ParamVector& params,
                              const DenseMatrix& inputs, const Cache* cache,
                              const DenseMatrix& cotangent) const override;

 private:
  DenseMatrix strip_first(const DenseMatrix& cotangent) const;
  std::shared_ptr<const FeatureNet> inner_;
};

// --- checkpoint format -----------------------------------------------------
// "SPIN" magic, u32 version, u32 K, u32 P, sigma_bar (K^2 f64), jac
// (K^2 P f64), params (P f64), rms accumulator (P f64), u64 step, u64 seed,
// trailing CRC32 over everything before it. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainState& state);
// The layout for the loaded parameters comes from `net`, which must match
// the stored K and P.
TrainState load_checkpoint(const std::string& path, const FeatureNet& net);

}  // namespace spinet::spin

#endif  // SPINET_SPIN_HPP
