#ifndef SPINET_FUNCNET_HPP
#define SPINET_FUNCNET_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spinet/matrix.hpp"

namespace spinet::funcnet {

// Immutable description of how a flat parameter vector is carved into named
// (rows x cols) segments.
class ParamLayout {
 public:
  struct Segment {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
  };

  int add(const std::string& name, int rows, int cols) {
    Segment s{name, rows, cols, total_};
    total_ += static_cast<size_t>(rows) * cols;
    segments_.push_back(std::move(s));
    return static_cast<int>(segments_.size()) - 1;
  }

  const Segment& segment(int i) const { return segments_[i]; }
  int segment_count() const { return static_cast<int>(segments_.size()); }
  size_t total_size() const { return total_; }

 private:
  std::vector<Segment> segments_;
  size_t total_ = 0;
};

// Flat vector of all trainable parameters plus its layout.
struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  size_t size() const { return values.size(); }
  double* segment(int i) { return values.data() + layout->segment(i).offset; }
  const double* segment(int i) const {
    return values.data() + layout->segment(i).offset;
  }
};

ParamVector zeros_like(const ParamVector& p);
void axpy(double alpha, const ParamVector& x, ParamVector& y);  // y += alpha*x
double norm(const ParamVector& p);

// A parametric function family u_theta: R^d -> R^K with exact reverse-mode
// parameter derivatives. Forward and backward are pure given (params, inputs).
class FeatureNet {
 public:
  virtual ~FeatureNet() = default;

  virtual int input_dim() const = 0;
  virtual int n_outputs() const = 0;
  virtual std::shared_ptr<const ParamLayout> layout() const = 0;
  virtual ParamVector init_params(std::uint64_t seed) const = 0;

  virtual FeatureBatch forward(const ParamVector& params,
                               const DenseMatrix& inputs) const = 0;

  // Returns sum_b sum_k cotangent[b,k] * du_k(x_b)/dtheta.
  virtual ParamVector backward(const ParamVector& params,
                               const DenseMatrix& inputs,
                               const DenseMatrix& cotangent) const = 0;

  // Optional forward that keeps intermediate activations so that several
  // backward passes over the same batch can skip the recomputation.
  struct Cache {
    virtual ~Cache() = default;
  };
  virtual std::unique_ptr<Cache> forward_cached(const ParamVector& params,
                                                const DenseMatrix& inputs,
                                                FeatureBatch* out) const;
  virtual ParamVector backward_cached(const ParamVector& params,
                                      const DenseMatrix& inputs,
                                      const Cache* cache,
                                      const DenseMatrix& cotangent) const;
};

// Block-sparse softplus MLP with an optional boundary envelope.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int n_outputs = 0;
  bool block_sparse = false;
  int n_groups = 0;  // defaults to n_outputs when block_sparse
  std::optional<double> envelope_halfwidth;

  int n_layers() const { return static_cast<int>(hidden.size()) + 1; }
};

// App-style block mask for layer `layer` (1-based) of `n_layers`, with
// in_width inputs, out_width outputs and `groups` output groups. Entries are
// 0.0/1.0; mask(i, j) refers to input i, output j. Intervals are half-open
// with floor/ceil rounding.
DenseMatrix block_mask(int layer, int n_layers, int in_width, int out_width,
                       int groups);

class Mlp : public FeatureNet {
 public:
  explicit Mlp(MlpSpec spec);

  int input_dim() const override { return spec_.input_dim; }
  int n_outputs() const override { return spec_.n_outputs; }
  std::shared_ptr<const ParamLayout> layout() const override { return layout_; }
  ParamVector init_params(std::uint64_t seed) const override;

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

  const MlpSpec& spec() const { return spec_; }
  // Weight mask for weight layer l (0-based), oriented out x in like the
  // stored weights. Empty matrix when the layer is dense.
  const DenseMatrix& weight_mask(int l) const { return masks_[l]; }

  // Envelope factor prod_i (sqrt(2 D^2 - x_i^2) - D) for one point.
  static double envelope_factor(const double* x, int dim, double halfwidth);

 private:
  MlpSpec spec_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<int> widths_;          // input_dim, hidden..., n_outputs
  std::vector<DenseMatrix> masks_;   // per weight layer, out x in; empty if dense
};

// Trainable lookup table over M discrete states: u(s) = table[s, :].
class TabularNet : public FeatureNet {
 public:
  TabularNet(int n_states, int n_outputs);

  int input_dim() const override { return 1; }  // takes state indices
  int n_outputs() const override { return n_outputs_; }
  std::shared_ptr<const ParamLayout> layout() const override { return layout_; }
  ParamVector init_params(std::uint64_t seed) const override;

  FeatureBatch forward(const ParamVector& params,
                       const DenseMatrix& state_indices) const override;
  ParamVector backward(const ParamVector& params,
                       const DenseMatrix& state_indices,
                       const DenseMatrix& cotangent) const override;

  int n_states() const { return n_states_; }

 private:
  int n_states_;
  int n_outputs_;
  std::shared_ptr<const ParamLayout> layout_;
};

// Stateless op forms; thin wrappers over the classes above.
FeatureBatch mlp_forward(const MlpSpec& spec, const ParamVector& params,
                         const DenseMatrix& inputs);
ParamVector param_backward(const MlpSpec& spec, const ParamVector& params,
                           const DenseMatrix& inputs,
                           const DenseMatrix& cotangent);
FeatureBatch tabular_forward(const DenseMatrix& table,
                             const std::vector<int>& state_indices);

}  // namespace spinet::funcnet

#endif  // SPINET_FUNCNET_HPP
