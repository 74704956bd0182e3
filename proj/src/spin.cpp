#include "spinet/spin.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <zlib.h>

#include "spinet/kernels.hpp"

namespace spinet::spin {

DenseMatrix sigma_hat(const FeatureBatch& features_a,
                      const FeatureBatch& features_b) {
  require(features_a.cols() == features_b.cols(),
          "sigma_hat: feature widths differ");
  require(features_a.rows() > 0 && features_b.rows() > 0,
          "sigma_hat: empty batch");
  DenseMatrix sa =
      kernels::matmul_tn(features_a, features_a, 1.0 / features_a.rows());
  if (&features_a == &features_b ||
      features_a.data() == features_b.data()) {
    return sa;
  }
  DenseMatrix sb =
      kernels::matmul_tn(features_b, features_b, 1.0 / features_b.rows());
  for (size_t i = 0; i < sa.size(); ++i)
    sa.data()[i] = 0.5 * (sa.data()[i] + sb.data()[i]);
  return sa;
}

MaskedGradients masked_gradient_matrices(const DenseMatrix& pi_hat,
                                         const DenseMatrix& sigma_bar,
                                         const linalg::JitterPolicy& jitter) {
  require(pi_hat.rows() == pi_hat.cols(), "masked gradients: Pi must be square");
  require(sigma_bar.rows() == pi_hat.rows(),
          "masked gradients: Pi and Sigma sizes differ");

  auto chol = linalg::cholesky(sigma_bar, jitter);
  const int k = sigma_bar.rows();
  LowerTriangular linv = linalg::lower_inverse(chol.factor);
  DenseMatrix linv_d = linv.dense();
  DenseMatrix linv_t = linv_d.transposed();

  // Lambda = L^-1 Pi L^-T
  DenseMatrix lambda =
      kernels::matmul(kernels::matmul(linv_d, pi_hat), linv_t);

  // diag(L)^-1 (equals the diagonal of L^-1)
  DenseMatrix dl(k, k);
  for (int i = 0; i < k; ++i) dl(i, i) = linv_d(i, i);

  MaskedGradients out;
  out.d_pi = kernels::matmul(linv_t, dl);
  DenseMatrix triu = linalg::triu_inc_diag(kernels::matmul(lambda, dl));
  out.d_sigma = kernels::matmul(linv_t, triu);
  for (size_t i = 0; i < out.d_sigma.size(); ++i)
    out.d_sigma.data()[i] = -out.d_sigma.data()[i];

  out.report.lambdas.resize(k);
  for (int i = 0; i < k; ++i) out.report.lambdas[i] = lambda(i, i);
  out.report.chol = chol.factor;
  out.report.lambda_full = std::move(lambda);
  out.report.applied_jitter = chol.applied_jitter;
  return out;
}

std::vector<double> jacobian_of_sigma(const FeatureNet& net,
                                      const ParamVector& params,
                                      const std::vector<SigmaBatch>& batches) {
  require(!batches.empty(), "jacobian_of_sigma: at least one batch required");
  const int k = net.n_outputs();
  const size_t p = params.size();
  std::vector<double> jac(static_cast<size_t>(k) * k * p, 0.0);
  const double batch_weight = 1.0 / batches.size();

  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      ParamVector grad;
      bool first = true;
      for (const SigmaBatch& sb : batches) {
        const FeatureBatch& u = *sb.features;
        const int b = u.rows();
        const double w = batch_weight / b;
        DenseMatrix cot(b, k);
        // d Sigma[i,j] / d U = (1/B) (e_i u_j^T + e_j u_i^T) as columns
        for (int r = 0; r < b; ++r) {
          cot(r, i) += w * u(r, j);
          cot(r, j) += w * u(r, i);
        }
        ParamVector g = net.backward_cached(params, *sb.inputs, sb.cache, cot);
        if (first) {
          grad = std::move(g);
          first = false;
        } else {
          funcnet::axpy(1.0, g, grad);
        }
      }
      double* slice = jac.data() + (static_cast<size_t>(i) * k + j) * p;
      std::memcpy(slice, grad.values.data(), p * sizeof(double));
      if (i != j) {
        double* mirror = jac.data() + (static_cast<size_t>(j) * k + i) * p;
        std::memcpy(mirror, grad.values.data(), p * sizeof(double));
      }
    }
  }
  return jac;
}

ParamVector assemble_param_gradient(const operators::PiEstimator& estimator,
                                    const DenseMatrix& d_pi,
                                    const DenseMatrix& d_sigma,
                                    const std::vector<double>& jac_sigma_bar) {
  ParamVector grad = estimator.vjp(d_pi);
  const int k = d_sigma.rows();
  const size_t p = grad.size();
  require(jac_sigma_bar.size() == static_cast<size_t>(k) * k * p,
          "assemble_param_gradient: Jacobian tensor size mismatch");
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double w = d_sigma(i, j);
      if (w == 0.0) continue;
      const double* slice =
          jac_sigma_bar.data() + (static_cast<size_t>(i) * k + j) * p;
      for (size_t q = 0; q < p; ++q) grad.values[q] += w * slice[q];
    }
  }
  return grad;
}

void moving_average_update(AveragedState& state, const DenseMatrix& sigma_hat,
                           const std::vector<double>& jac_sigma_hat,
                           double beta_t) {
  require(beta_t > 0.0 && beta_t <= 1.0,
          "moving_average_update: beta must lie in (0, 1]");
  require(sigma_hat.rows() == state.sigma_bar.rows() &&
              sigma_hat.cols() == state.sigma_bar.cols(),
          "moving_average_update: Sigma shape mismatch");
  require(jac_sigma_hat.size() == state.jac_sigma_bar.size(),
          "moving_average_update: Jacobian shape mismatch");
  const double keep = 1.0 - beta_t;
  for (size_t i = 0; i < state.sigma_bar.size(); ++i)
    state.sigma_bar.data()[i] =
        keep * state.sigma_bar.data()[i] + beta_t * sigma_hat.data()[i];
  for (size_t i = 0; i < state.jac_sigma_bar.size(); ++i)
    state.jac_sigma_bar[i] =
        keep * state.jac_sigma_bar[i] + beta_t * jac_sigma_hat[i];
}

void rmsprop_step(RmsState& opt, ParamVector& params, const ParamVector& grad) {
  require(params.size() == grad.size(), "rmsprop_step: size mismatch");
  if (opt.mean_square.size() != params.size())
    throw DimensionMismatch("rmsprop_step: accumulator size mismatch");
  const double d = opt.decay;
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grad.values[i];
    opt.mean_square[i] = d * opt.mean_square[i] + (1.0 - d) * g * g;
    params.values[i] -=
        opt.learning_rate * g / (std::sqrt(opt.mean_square[i]) + opt.epsilon);
  }
}

void validate_timescales(double beta, double rmsprop_decay) {
  if (!(beta > 0.0) || beta > 1.0)
    throw ConfigError("beta must lie in (0, 1]");
  if (!(rmsprop_decay >= 0.0) || rmsprop_decay >= 1.0)
    throw ConfigError("rmsprop_decay must lie in [0, 1)");
  if (!(beta > 1.0 - rmsprop_decay))
    throw ConfigError(
        "timescale rule violated: the covariance average must forget faster "
        "than the optimizer accumulator (beta > 1 - rmsprop_decay); got beta=" +
        std::to_string(beta) + ", 1-rmsprop_decay=" +
        std::to_string(1.0 - rmsprop_decay));
}

namespace {

double condition_number(const DenseMatrix& sigma) {
  auto eig = linalg::sym_eig(sigma);
  const double hi = eig.values.front();
  const double lo = eig.values.back();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

TrainState train_loop(const TrainConfig& config,
                      const operators::KernelOp& kernel, const FeatureNet& net,
                      const BatchSource& source,
                      std::optional<TrainState> initial) {
  validate_timescales(config.beta, config.rmsprop_decay);

  const int k = net.n_outputs();
  TrainState state;
  if (initial && !initial->params.values.empty()) {
    state = std::move(*initial);
    require(state.averages.k() == k, "train_loop: checkpoint K mismatch");
  } else {
    state.params = net.init_params(config.seed);
    state.averages =
        AveragedState::initial(k, state.params.size(), config.beta);
    state.opt.mean_square.assign(state.params.size(), 0.0);
    state.seed = config.seed;
    state.step = 0;
  }
  state.opt.decay = config.rmsprop_decay;
  state.opt.epsilon = config.rmsprop_epsilon;

  for (std::uint64_t t = state.step + 1; t <= config.iterations; ++t) {
    operators::PairBatch batch = source.batch(state.seed, t);
    operators::PiEstimator estimator(kernel, net, state.params, batch);

    const FeatureBatch& jac_u = estimator.jac_features();
    DenseMatrix sig_hat = sigma_hat(jac_u, jac_u);

    std::vector<SigmaBatch> sigma_batches = {
        {&estimator.jac_inputs(), &jac_u, estimator.jac_cache()}};
    std::vector<double> jac_hat =
        jacobian_of_sigma(net, state.params, sigma_batches);

    double alpha_t = config.learning_rate;
    const double beta_t = config.beta;
    if (config.robbins_monro) {
      // decay the slow (parameter) timescale only; beta is already the fast
      // one, so alpha_t/beta -> 0 gives the required separation
      alpha_t = config.learning_rate / std::pow(static_cast<double>(t), 0.7);
    }

    moving_average_update(state.averages, sig_hat, jac_hat, beta_t);

    MaskedGradients masked;
    try {
      masked = masked_gradient_matrices(estimator.pi(), state.averages.sigma_bar);
    } catch (const NotPositiveDefinite& e) {
      throw NotPositiveDefinite(
          std::string(e.what()) + " at step " + std::to_string(t) +
          " with sigma_bar condition number " +
          std::to_string(condition_number(state.averages.sigma_bar)));
    }

    ParamVector grad = assemble_param_gradient(
        estimator, masked.d_pi, masked.d_sigma, state.averages.jac_sigma_bar);

    state.opt.learning_rate = alpha_t;
    rmsprop_step(state.opt, state.params, grad);
    state.step = t;

    if (config.log_sink) {
      LogRecord rec;
      rec.step = t;
      rec.lambdas = masked.report.lambdas;
      rec.grad_norm = funcnet::norm(grad);
      rec.sigma_cond = condition_number(state.averages.sigma_bar);
      config.log_sink(rec);
    }
    if (config.step_hook) config.step_hook(state);
  }
  return state;
}

DenseMatrix OrderedEigenfunctions::apply(const FeatureBatch& features) const {
  DenseMatrix linv_t = chol_inverse.dense().transposed();
  DenseMatrix v = kernels::matmul(features, linv_t);
  if (rotation) v = kernels::matmul(v, *rotation);
  return v;
}

DenseMatrix OrderedEigenfunctions::evaluate(const FeatureNet& net,
                                            const ParamVector& params,
                                            const DenseMatrix& inputs) const {
  return apply(net.forward(params, inputs));
}

OrderedEigenfunctions ordered_eigenfunctions(const DenseMatrix& sigma_bar,
                                             const DenseMatrix& lambda_full,
                                             ExtractionMode mode) {
  OrderedEigenfunctions out;
  auto chol = linalg::cholesky(sigma_bar);
  out.chol_inverse = linalg::lower_inverse(chol.factor);

  const int k = sigma_bar.rows();
  if (mode == ExtractionMode::CholeskyOnly) {
    out.eigenvalues.resize(k);
    for (int i = 0; i < k; ++i) out.eigenvalues[i] = lambda_full(i, i);
    return out;
  }

  // Post-hoc diagonalization: w(x) = V^T L^-1 u(x); eigenvalues ascending to
  // match the minimization convention.
  auto eig = linalg::sym_eig(lambda_full);
  DenseMatrix v_asc(k, k);
  out.eigenvalues.resize(k);
  for (int c = 0; c < k; ++c) {
    const int src = k - 1 - c;
    out.eigenvalues[c] = eig.values[src];
    for (int r = 0; r < k; ++r) v_asc(r, c) = eig.vectors(r, src);
  }
  out.rotation = std::move(v_asc);
  return out;
}

// ---------------------------------------------------------------------------
// ConstantFirstNet

DenseMatrix ConstantFirstNet::strip_first(const DenseMatrix& cotangent) const {
  DenseMatrix inner_cot(cotangent.rows(), cotangent.cols() - 1);
  for (int r = 0; r < cotangent.rows(); ++r)
    for (int c = 1; c < cotangent.cols(); ++c)
      inner_cot(r, c - 1) = cotangent(r, c);
  return inner_cot;
}

FeatureBatch ConstantFirstNet::forward(const ParamVector& params,
                                       const DenseMatrix& inputs) const {
  FeatureBatch out;
  auto cache = forward_cached(params, inputs, &out);
  (void)cache;
  return out;
}

std::unique_ptr<FeatureNet::Cache> ConstantFirstNet::forward_cached(
    const ParamVector& params, const DenseMatrix& inputs,
    FeatureBatch* out) const {
  FeatureBatch inner_out;
  auto cache = inner_->forward_cached(params, inputs, out ? &inner_out : nullptr);
  if (out) {
    FeatureBatch full(inner_out.rows(), inner_out.cols() + 1);
    for (int r = 0; r < inner_out.rows(); ++r) {
      full(r, 0) = 1.0;
      for (int c = 0; c < inner_out.cols(); ++c) full(r, c + 1) = inner_out(r, c);
    }
    *out = std::move(full);
  }
  return cache;
}

ParamVector ConstantFirstNet::backward(const ParamVector& params,
                                       const DenseMatrix& inputs,
                                       const DenseMatrix& cotangent) const {
  require(cotangent.cols() == n_outputs(),
          "ConstantFirstNet: cotangent width mismatch");
  return inner_->backward(params, inputs, strip_first(cotangent));
}

ParamVector ConstantFirstNet::backward_cached(const ParamVector& params,
                                              const DenseMatrix& inputs,
                                              const Cache* cache,
                                              const DenseMatrix& cotangent) const {
  require(cotangent.cols() == n_outputs(),
          "ConstantFirstNet: cotangent width mismatch");
  return inner_->backward_cached(params, inputs, cache, strip_first(cotangent));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_bytes(std::string& buf, const void* data, size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

template <typename T>
void put_scalar(std::string& buf, T v) {
  put_bytes(buf, &v, sizeof(T));
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  void read(void* out, size_t n) {
    if (p + n > end) throw CorruptChecksum("checkpoint: truncated payload");
    std::memcpy(out, p, n);
    p += n;
  }
  template <typename T>
  T scalar() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  const std::uint32_t k = static_cast<std::uint32_t>(state.averages.k());
  const std::uint32_t p = static_cast<std::uint32_t>(state.params.size());

  std::string buf;
  buf.reserve(16 + state.averages.jac_sigma_bar.size() * 8 +
              state.params.size() * 16 + state.averages.sigma_bar.size() * 8);
  put_bytes(buf, "SPIN", 4);
  put_scalar<std::uint32_t>(buf, kCheckpointVersion);
  put_scalar<std::uint32_t>(buf, k);
  put_scalar<std::uint32_t>(buf, p);
  put_bytes(buf, state.averages.sigma_bar.data(),
            state.averages.sigma_bar.size() * sizeof(double));
  put_bytes(buf, state.averages.jac_sigma_bar.data(),
            state.averages.jac_sigma_bar.size() * sizeof(double));
  put_bytes(buf, state.params.values.data(), state.params.size() * sizeof(double));
  put_bytes(buf, state.opt.mean_square.data(),
            state.opt.mean_square.size() * sizeof(double));
  put_scalar<std::uint64_t>(buf, state.step);
  put_scalar<std::uint64_t>(buf, state.seed);

  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size())));
  put_scalar<std::uint32_t>(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("save_checkpoint: short write to " + path);
}

TrainState load_checkpoint(const std::string& path, const FeatureNet& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 + 4 + 4 + 4 + 16 + 4)
    throw CorruptChecksum("checkpoint: file too short");

  const std::uint32_t stored_crc = [&] {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + buf.size() - 4, 4);
    return v;
  }();
  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc)
    throw CorruptChecksum("checkpoint: CRC mismatch, file damaged or truncated");

  Reader r{reinterpret_cast<const unsigned char*>(buf.data()),
           reinterpret_cast<const unsigned char*>(buf.data()) + buf.size() - 4};
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "SPIN", 4) != 0)
    throw IoError("checkpoint: bad magic, not a checkpoint file");
  const std::uint32_t version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatVersionMismatch("checkpoint: format version " +
                                std::to_string(version) + ", expected " +
                                std::to_string(kCheckpointVersion));
  const std::uint32_t k = r.scalar<std::uint32_t>();
  const std::uint32_t p = r.scalar<std::uint32_t>();
  if (static_cast<int>(k) != net.n_outputs() ||
      static_cast<size_t>(p) != net.layout()->total_size())
    throw DimensionMismatch("checkpoint: stored K/P do not match the network");

  TrainState state;
  state.averages.sigma_bar = DenseMatrix(k, k);
  r.read(state.averages.sigma_bar.data(), static_cast<size_t>(k) * k * 8);
  state.averages.jac_sigma_bar.resize(static_cast<size_t>(k) * k * p);
  r.read(state.averages.jac_sigma_bar.data(),
         state.averages.jac_sigma_bar.size() * 8);
  state.params.layout = net.layout();
  state.params.values.resize(p);
  r.read(state.params.values.data(), static_cast<size_t>(p) * 8);
  state.opt.mean_square.resize(p);
  r.read(state.opt.mean_square.data(), static_cast<size_t>(p) * 8);
  state.step = r.scalar<std::uint64_t>();
  state.seed = r.scalar<std::uint64_t>();
  return state;
}

}  // namespace spinet::spin
