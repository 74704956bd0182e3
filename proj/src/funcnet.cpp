#include "spinet/funcnet.hpp"

#include <cmath>
#include <memory>

#include "spinet/kernels.hpp"
#include "spinet/rng.hpp"

namespace spinet::funcnet {

ParamVector zeros_like(const ParamVector& p) {
  ParamVector z;
  z.layout = p.layout;
  z.values.assign(p.values.size(), 0.0);
  return z;
}

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  require(x.values.size() == y.values.size(), "axpy: parameter sizes differ");
  for (size_t i = 0; i < x.values.size(); ++i)
    y.values[i] += alpha * x.values[i];
}

double norm(const ParamVector& p) {
  double s = 0.0;
  for (double v : p.values) s += v * v;
  return std::sqrt(s);
}

std::unique_ptr<FeatureNet::Cache> FeatureNet::forward_cached(
    const ParamVector& params, const DenseMatrix& inputs,
    FeatureBatch* out) const {
  if (out) *out = forward(params, inputs);
  return nullptr;
}

ParamVector FeatureNet::backward_cached(const ParamVector& params,
                                        const DenseMatrix& inputs,
                                        const Cache* /*cache*/,
                                        const DenseMatrix& cotangent) const {
  return backward(params, inputs, cotangent);
}

DenseMatrix block_mask(int layer, int n_layers, int in_width, int out_width,
                       int groups) {
  DenseMatrix mask(in_width, out_width);
  if (groups < 2 || layer <= 1) {
    for (int i = 0; i < in_width; ++i)
      for (int j = 0; j < out_width; ++j) mask(i, j) = 1.0;
    return mask;
  }

  const double depth = static_cast<double>(layer - 1) / n_layers;
  const double span = static_cast<double>(n_layers - layer + 1) / n_layers;
  const int wm = static_cast<int>(std::ceil(span * in_width));
  const int wn = static_cast<int>(std::ceil(span * out_width));
  for (int k = 0; k < groups; ++k) {
    const double frac = static_cast<double>(k) / (groups - 1);
    const int sm = static_cast<int>(std::floor(frac * depth * in_width));
    const int sn = static_cast<int>(std::floor(frac * depth * out_width));
    for (int i = sm; i < sm + wm && i < in_width; ++i)
      for (int j = sn; j < sn + wn && j < out_width; ++j) mask(i, j) = 1.0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Mlp

namespace {

struct MlpCache : FeatureNet::Cache {
  std::vector<DenseMatrix> acts;  // acts[l] is the input to weight layer l
  std::vector<DenseMatrix> sigs;  // sigmoid(z) per hidden layer
  std::vector<double> env;        // per-row envelope factor
};

void check_params(const ParamVector& params,
                  const std::shared_ptr<const ParamLayout>& layout,
                  const char* who) {
  if (!params.layout || params.values.size() != layout->total_size())
    throw DimensionMismatch(std::string(who) +
                            ": parameter vector does not match the layout");
}

// Weights for layer l with the block mask applied, so masked entries are
// structurally absent from the function no matter what the raw values hold.
DenseMatrix masked_weights(const ParamVector& params, const ParamLayout& layout,
                           int layer, const DenseMatrix& mask) {
  const auto& s = layout.segment(2 * layer);
  DenseMatrix w(s.rows, s.cols);
  const double* src = params.values.data() + s.offset;
  std::copy(src, src + static_cast<size_t>(s.rows) * s.cols, w.data());
  if (mask.rows() > 0)
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] *= mask.data()[i];
  return w;
}

}  // namespace

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim < 1 || spec_.n_outputs < 1)
    throw DimensionMismatch("Mlp: input_dim and n_outputs must be positive");
  if (spec_.block_sparse && spec_.n_groups == 0) spec_.n_groups = spec_.n_outputs;
  if (spec_.block_sparse)
    for (int h : spec_.hidden)
      if (h < spec_.n_groups)
        throw DimensionMismatch(
            "Mlp: block-sparse hidden widths must be >= n_groups");

  widths_.push_back(spec_.input_dim);
  for (int h : spec_.hidden) widths_.push_back(h);
  widths_.push_back(spec_.n_outputs);

  auto layout = std::make_shared<ParamLayout>();
  const int n_layers = spec_.n_layers();
  for (int l = 0; l < n_layers; ++l) {
    layout->add("W" + std::to_string(l), widths_[l + 1], widths_[l]);
    layout->add("b" + std::to_string(l), widths_[l + 1], 1);
  }
  layout_ = std::move(layout);

  masks_.resize(n_layers);
  if (spec_.block_sparse && spec_.n_groups >= 2) {
    for (int l = 0; l < n_layers; ++l) {
      DenseMatrix m = block_mask(l + 1, n_layers, widths_[l], widths_[l + 1],
                                 spec_.n_groups);
      masks_[l] = m.transposed();  // stored weights are out x in
    }
  }
}

double Mlp::envelope_factor(const double* x, int dim, double halfwidth) {
  double f = 1.0;
  for (int i = 0; i < dim; ++i) {
    if (std::fabs(x[i]) > halfwidth)
      throw DomainViolation("envelope: input coordinate outside the box");
    f *= std::sqrt(2.0 * halfwidth * halfwidth - x[i] * x[i]) - halfwidth;
  }
  return f;
}

ParamVector Mlp::init_params(std::uint64_t seed) const {
  ParamVector p;
  p.layout = layout_;
  p.values.assign(layout_->total_size(), 0.0);
  auto eng = make_engine(seed, 0x4D4C50 /* MLP */);
  const int n_layers = spec_.n_layers();
  for (int l = 0; l < n_layers; ++l) {
    const auto& seg = layout_->segment(2 * l);
    const double a = std::sqrt(3.0) / std::sqrt(static_cast<double>(seg.cols));
    double* w = p.values.data() + seg.offset;
    const size_t n = static_cast<size_t>(seg.rows) * seg.cols;
    for (size_t i = 0; i < n; ++i) w[i] = uniform_in(eng, -a, a);
    if (masks_[l].rows() > 0)
      for (size_t i = 0; i < n; ++i) w[i] *= masks_[l].data()[i];
    // biases stay zero
  }
  return p;
}

FeatureBatch Mlp::forward(const ParamVector& params,
                          const DenseMatrix& inputs) const {
  FeatureBatch out;
  auto cache = forward_cached(params, inputs, &out);
  (void)cache;
  return out;
}

std::unique_ptr<FeatureNet::Cache> Mlp::forward_cached(
    const ParamVector& params, const DenseMatrix& inputs,
    FeatureBatch* out) const {
  check_params(params, layout_, "mlp_forward");
  if (inputs.cols() != spec_.input_dim)
    throw DimensionMismatch("mlp_forward: input width does not match spec");

  auto cache = std::make_unique<MlpCache>();
  const int n_layers = spec_.n_layers();
  cache->acts.reserve(n_layers);
  cache->acts.push_back(inputs);

  for (int l = 0; l < n_layers - 1; ++l) {
    const auto& wseg = layout_->segment(2 * l);
    const auto& bseg = layout_->segment(2 * l + 1);
    DenseMatrix w = masked_weights(params, *layout_, l, masks_[l]);
    std::span<const double> bias(params.values.data() + bseg.offset,
                                 static_cast<size_t>(wseg.rows));
    DenseMatrix z = kernels::affine(cache->acts.back(), w, bias);
    DenseMatrix act, sig;
    kernels::softplus_sig(z, act, sig);
    cache->sigs.push_back(std::move(sig));
    cache->acts.push_back(std::move(act));
  }

  const int lo = n_layers - 1;
  const auto& wseg = layout_->segment(2 * lo);
  const auto& bseg = layout_->segment(2 * lo + 1);
  DenseMatrix w = masked_weights(params, *layout_, lo, masks_[lo]);
  std::span<const double> bias(params.values.data() + bseg.offset,
                               static_cast<size_t>(wseg.rows));
  DenseMatrix y = kernels::affine(cache->acts.back(), w, bias);

  if (spec_.envelope_halfwidth) {
    const double d = *spec_.envelope_halfwidth;
    cache->env.resize(inputs.rows());
    for (int b = 0; b < inputs.rows(); ++b) {
      const double f = envelope_factor(inputs.row(b), inputs.cols(), d);
      cache->env[b] = f;
      double* yr = y.row(b);
      for (int k = 0; k < y.cols(); ++k) yr[k] *= f;
    }
  }

  if (out) *out = std::move(y);
  return cache;
}

ParamVector Mlp::backward(const ParamVector& params, const DenseMatrix& inputs,
                          const DenseMatrix& cotangent) const {
  return backward_cached(params, inputs, nullptr, cotangent);
}

ParamVector Mlp::backward_cached(const ParamVector& params,
                                 const DenseMatrix& inputs, const Cache* cache,
                                 const DenseMatrix& cotangent) const {
  check_params(params, layout_, "param_backward");
  if (cotangent.rows() != inputs.rows() || cotangent.cols() != spec_.n_outputs)
    throw DimensionMismatch("param_backward: cotangent shape mismatch");

  std::unique_ptr<Cache> own;
  const MlpCache* mc = dynamic_cast<const MlpCache*>(cache);
  if (!mc) {
    own = forward_cached(params, inputs, nullptr);
    mc = static_cast<const MlpCache*>(own.get());
  }

  ParamVector grad;
  grad.layout = layout_;
  grad.values.assign(layout_->total_size(), 0.0);

  DenseMatrix delta = cotangent;
  if (spec_.envelope_halfwidth) {
    for (int b = 0; b < delta.rows(); ++b) {
      const double f = mc->env[b];
      double* dr = delta.row(b);
      for (int k = 0; k < delta.cols(); ++k) dr[k] *= f;
    }
  }

  const int n_layers = spec_.n_layers();
  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& wseg = layout_->segment(2 * l);
    const auto& bseg = layout_->segment(2 * l + 1);
    const DenseMatrix& x = mc->acts[l];

    DenseMatrix dw = kernels::matmul_tn(delta, x, 1.0);
    if (masks_[l].rows() > 0)
      for (size_t i = 0; i < dw.size(); ++i)
        dw.data()[i] *= masks_[l].data()[i];
    std::copy(dw.data(), dw.data() + dw.size(),
              grad.values.data() + wseg.offset);

    double* db = grad.values.data() + bseg.offset;
    for (int b = 0; b < delta.rows(); ++b) {
      const double* dr = delta.row(b);
      for (int o = 0; o < delta.cols(); ++o) db[o] += dr[o];
    }

    if (l > 0) {
      DenseMatrix w = masked_weights(params, *layout_, l, masks_[l]);
      DenseMatrix prev = kernels::matmul(delta, w);
      const DenseMatrix& sig = mc->sigs[l - 1];
      for (size_t i = 0; i < prev.size(); ++i)
        prev.data()[i] *= sig.data()[i];
      delta = std::move(prev);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// TabularNet

TabularNet::TabularNet(int n_states, int n_outputs)
    : n_states_(n_states), n_outputs_(n_outputs) {
  if (n_states < 1 || n_outputs < 1)
    throw DimensionMismatch("TabularNet: counts must be positive");
  auto layout = std::make_shared<ParamLayout>();
  layout->add("table", n_states, n_outputs);
  layout_ = std::move(layout);
}

ParamVector TabularNet::init_params(std::uint64_t seed) const {
  ParamVector p;
  p.layout = layout_;
  p.values.resize(layout_->total_size());
  auto eng = make_engine(seed, 0x544142 /* TAB */);
  for (double& v : p.values) v = uniform_in(eng, -1.0, 1.0);
  return p;
}

namespace {

int state_index(const DenseMatrix& state_indices, int b, int n_states) {
  const double raw = state_indices(b, 0);
  const long long s = std::llround(raw);
  if (s < 0 || s >= n_states)
    throw IndexOutOfRange("tabular: state index " + std::to_string(s) +
                          " outside [0, " + std::to_string(n_states) + ")");
  return static_cast<int>(s);
}

}  // namespace

FeatureBatch TabularNet::forward(const ParamVector& params,
                                 const DenseMatrix& state_indices) const {
  check_params(params, layout_, "tabular_forward");
  if (state_indices.cols() != 1)
    throw DimensionMismatch("tabular_forward: expected a single index column");
  FeatureBatch out(state_indices.rows(), n_outputs_);
  for (int b = 0; b < state_indices.rows(); ++b) {
    const int s = state_index(state_indices, b, n_states_);
    const double* row = params.values.data() +
                        static_cast<size_t>(s) * n_outputs_;
    std::copy(row, row + n_outputs_, out.row(b));
  }
  return out;
}

ParamVector TabularNet::backward(const ParamVector& params,
                                 const DenseMatrix& state_indices,
                                 const DenseMatrix& cotangent) const {
  check_params(params, layout_, "tabular backward");
  if (cotangent.rows() != state_indices.rows() ||
      cotangent.cols() != n_outputs_)
    throw DimensionMismatch("tabular backward: cotangent shape mismatch");
  ParamVector grad;
  grad.layout = layout_;
  grad.values.assign(layout_->total_size(), 0.0);
  for (int b = 0; b < state_indices.rows(); ++b) {
    const int s = state_index(state_indices, b, n_states_);
    double* row = grad.values.data() + static_cast<size_t>(s) * n_outputs_;
    const double* c = cotangent.row(b);
    for (int k = 0; k < n_outputs_; ++k) row[k] += c[k];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Stateless op forms

FeatureBatch mlp_forward(const MlpSpec& spec, const ParamVector& params,
                         const DenseMatrix& inputs) {
  return Mlp(spec).forward(params, inputs);
}

ParamVector param_backward(const MlpSpec& spec, const ParamVector& params,
                           const DenseMatrix& inputs,
                           const DenseMatrix& cotangent) {
  return Mlp(spec).backward(params, inputs, cotangent);
}

FeatureBatch tabular_forward(const DenseMatrix& table,
                             const std::vector<int>& state_indices) {
  FeatureBatch out(static_cast<int>(state_indices.size()), table.cols());
  for (size_t b = 0; b < state_indices.size(); ++b) {
    const int s = state_indices[b];
    if (s < 0 || s >= table.rows())
      throw IndexOutOfRange("tabular_forward: state index " +
                            std::to_string(s) + " outside [0, " +
                            std::to_string(table.rows()) + ")");
    for (int k = 0; k < table.cols(); ++k)
      out(static_cast<int>(b), k) = table(s, k);
  }
  return out;
}

}  // namespace spinet::funcnet
