#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcb/compact_bilinear.hpp"
#include "mcb/fft.hpp"

namespace mcb {
class Rng;
}

namespace mcb::nn {

/// Guard used by the normalization layers.
inline constexpr double kNormDelta = 1e-12;

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// y = W v + b. An empty bias means the layer has none.
struct LinearLayer {
  Matrix weight;  // out x in
  RealVec bias;

  /// Weights uniform in +-sqrt(6 / (in + out)), bias zero.
  static LinearLayer init(std::size_t in, std::size_t out, bool with_bias, Rng& rng);
  /// Same shape, all zeros. Used as a gradient accumulator.
  static LinearLayer zeros_like(const LinearLayer& other);

  std::size_t in_dim() const noexcept { return weight.cols; }
  std::size_t out_dim() const noexcept { return weight.rows; }
  bool has_bias() const noexcept { return !bias.empty(); }
  std::size_t param_count() const noexcept { return weight.data.size() + bias.size(); }

  bool operator==(const LinearLayer&) const = default;
};

RealVec linear_forward(const LinearLayer& layer, std::span<const double> v);

struct LinearGrad {
  Matrix weight;
  RealVec bias;
  RealVec input;
};

LinearGrad linear_backward(const LinearLayer& layer, std::span<const double> v, std::span<const double> g);

/// Adds g v^T into acc.weight and g into acc.bias; returns W^T g.
RealVec linear_backward_into(const LinearLayer& layer, std::span<const double> v, std::span<const double> g,
                             LinearLayer& acc);

RealVec relu_forward(std::span<const double> v);
/// g masked by pre > 0.
RealVec relu_backward(std::span<const double> pre, std::span<const double> g);

/// y[i] = sign(v[i]) sqrt(|v[i]|).
RealVec signed_sqrt_forward(std::span<const double> v);
/// g[i] / (2 sqrt(|v[i]| + kNormDelta)).
RealVec signed_sqrt_backward(std::span<const double> v, std::span<const double> g);

/// v / max(||v||, kNormDelta).
RealVec l2_normalize_forward(std::span<const double> v);
/// (g - y <y, g>) / ||v||, or g / kNormDelta inside the guard.
RealVec l2_normalize_backward(std::span<const double> v, std::span<const double> g);

/// Max-subtracted softmax.
RealVec softmax(std::span<const double> logits);
/// Vector-Jacobian product of softmax given its output y.
RealVec softmax_backward(std::span<const double> y, std::span<const double> g);

struct CrossEntropy {
  double loss;
  RealVec grad_logits;
};

/// -log softmax(logits)[label] and its gradient softmax - onehot.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> v);

struct AdamConfig {
  double lr = 0.0007;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double stab_eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  RealVec m;
  RealVec v;

  static AdamState zeros(std::size_t size, AdamConfig config = {});
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

enum class PoolingKind { eltwise_sum, eltwise_product, concat, concat_fc, full_bilinear, mcb };

struct PoolingMethod {
  PoolingKind kind = PoolingKind::mcb;
  std::size_t d = 0;                // mcb only
  std::vector<std::size_t> hidden;  // ReLU FC widths after pooling

  /// Accepts the canonical names and the short aliases sum, product, bilinear.
  static PoolingMethod parse(std::string_view name);

  std::string name() const;
  /// Bilinear methods are not resized when matching parameter budgets.
  bool is_bilinear() const noexcept { return kind == PoolingKind::full_bilinear || kind == PoolingKind::mcb; }

  bool operator==(const PoolingMethod&) const = default;
};

std::string_view pooling_name(PoolingKind kind);

/// Combines two modalities: element-wise sum/product, concatenation, the
/// flattened outer product, or MCB; then optionally signed-sqrt + L2, then the
/// ReLU FC stack.
class PoolingLayer {
 public:
  struct Cache {
    RealVec x;
    RealVec q;
    std::optional<McbForwardRecord> mcb;
    RealVec combined;
    RealVec rooted;
    std::vector<RealVec> fc_inputs;
    std::vector<RealVec> fc_pre;
  };

  PoolingLayer(PoolingMethod method, std::size_t n1, std::size_t n2, bool normalize, std::uint64_t seed);

  const PoolingMethod& method() const noexcept { return method_; }
  bool normalizes() const noexcept { return normalize_; }
  std::size_t combined_dim() const noexcept { return combined_dim_; }
  std::size_t output_dim() const noexcept;
  const std::optional<CompactBilinear>& bilinear_op() const noexcept { return op_; }

  std::vector<LinearLayer>& fc() noexcept { return fc_; }
  const std::vector<LinearLayer>& fc() const noexcept { return fc_; }

  RealVec forward(std::span<const double> x, std::span<const double> q, Cache* cache = nullptr) const;

  struct InputGrads {
    RealVec x;
    RealVec q;
  };

  /// Accumulates FC gradients into fc_grads (same shapes as fc()).
  InputGrads backward(const Cache& cache, std::span<const double> g, std::span<LinearLayer> fc_grads) const;

 private:
  PoolingMethod method_;
  std::size_t n1_;
  std::size_t n2_;
  bool normalize_;
  std::size_t combined_dim_;
  std::optional<CompactBilinear> op_;
  std::vector<LinearLayer> fc_;
};

RealVec pool(const PoolingLayer& layer, std::span<const double> x, std::span<const double> q);

}  // namespace mcb::nn
