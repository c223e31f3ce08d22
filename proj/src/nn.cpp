#include "mcb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mcb/random.hpp"

namespace mcb::nn {
namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  if (in == 0 || out == 0) throw std::invalid_argument("linear layer: dimensions must be positive");
  LinearLayer layer;
  layer.weight = Matrix(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : layer.weight.data) w = rng.uniform(-limit, limit);
  if (with_bias) layer.bias.assign(out, 0.0);
  return layer;
}

LinearLayer LinearLayer::zeros_like(const LinearLayer& other) {
  LinearLayer layer;
  layer.weight = Matrix(other.weight.rows, other.weight.cols);
  layer.bias.assign(other.bias.size(), 0.0);
  return layer;
}

RealVec linear_forward(const LinearLayer& layer, std::span<const double> v) {
  require_same(v.size(), layer.in_dim(), "linear_forward");
  RealVec y(layer.out_dim());
  for (std::size_t r = 0; r < y.size(); ++r) {
    y[r] = dot(layer.weight.row(r), v) + (layer.has_bias() ? layer.bias[r] : 0.0);
  }
  return y;
}

LinearGrad linear_backward(const LinearLayer& layer, std::span<const double> v, std::span<const double> g) {
  LinearLayer acc = LinearLayer::zeros_like(layer);
  RealVec input = linear_backward_into(layer, v, g, acc);
  return {std::move(acc.weight), std::move(acc.bias), std::move(input)};
}

RealVec linear_backward_into(const LinearLayer& layer, std::span<const double> v, std::span<const double> g,
                             LinearLayer& acc) {
  require_same(v.size(), layer.in_dim(), "linear_backward input");
  require_same(g.size(), layer.out_dim(), "linear_backward gradient");
  if (acc.weight.rows != layer.weight.rows || acc.weight.cols != layer.weight.cols ||
      acc.bias.size() != layer.bias.size()) {
    throw std::invalid_argument("linear_backward: accumulator shape mismatch");
  }
  RealVec input(layer.in_dim(), 0.0);
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* acc_row = acc.weight.data.data() + r * layer.in_dim();
    const auto w_row = layer.weight.row(r);
    for (std::size_t c = 0; c < layer.in_dim(); ++c) {
      acc_row[c] += gr * v[c];
      input[c] += w_row[c] * gr;
    }
    if (layer.has_bias()) acc.bias[r] += gr;
  }
  return input;
}

RealVec relu_forward(std::span<const double> v) {
  RealVec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] > 0.0 ? v[i] : 0.0;
  return y;
}

RealVec relu_backward(std::span<const double> pre, std::span<const double> g) {
  require_same(pre.size(), g.size(), "relu_backward");
  RealVec r(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) r[i] = pre[i] > 0.0 ? g[i] : 0.0;
  return r;
}

RealVec signed_sqrt_forward(std::span<const double> v) {
  RealVec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double root = std::sqrt(std::abs(v[i]));
    y[i] = v[i] < 0.0 ? -root : root;
  }
  return y;
}

RealVec signed_sqrt_backward(std::span<const double> v, std::span<const double> g) {
  require_same(v.size(), g.size(), "signed_sqrt_backward");
  RealVec r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = g[i] / (2.0 * std::sqrt(std::abs(v[i]) + kNormDelta));
  return r;
}

RealVec l2_normalize_forward(std::span<const double> v) {
  const double scale = 1.0 / std::max(norm(v), kNormDelta);
  RealVec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] * scale;
  return y;
}

RealVec l2_normalize_backward(std::span<const double> v, std::span<const double> g) {
  require_same(v.size(), g.size(), "l2_normalize_backward");
  const double n = norm(v);
  RealVec r(v.size());
  if (n <= kNormDelta) {
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = g[i] / kNormDelta;
    return r;
  }
  double yg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) yg += v[i] / n * g[i];
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = (g[i] - v[i] / n * yg) / n;
  return r;
}

RealVec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double top = *std::max_element(logits.begin(), logits.end());
  RealVec y(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::exp(logits[i] - top);
    total += y[i];
  }
  for (auto& p : y) p /= total;
  return y;
}

RealVec softmax_backward(std::span<const double> y, std::span<const double> g) {
  require_same(y.size(), g.size(), "softmax_backward");
  const double yg = dot(y, g);
  RealVec r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] * (g[i] - yg);
  return r;
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  const double log_total = std::log(total);
  CrossEntropy out;
  out.loss = -(logits[label] - top - log_total);
  out.grad_logits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad_logits[i] = std::exp(logits[i] - top - log_total) - (i == label ? 1.0 : 0.0);
  }
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

AdamState AdamState::zeros(std::size_t size, AdamConfig config) {
  if (!(config.lr > 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 ||
      config.beta2 >= 1.0) {
    throw std::invalid_argument("adam: require lr > 0 and 0 <= beta1, beta2 < 1");
  }
  AdamState state;
  state.config = config;
  state.m.assign(size, 0.0);
  state.v.assign(size, 0.0);
  return state;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  require_same(params.size(), grads.size(), "adam_step");
  require_same(params.size(), state.m.size(), "adam_step state");
  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.stab_eps);
  }
}

std::string_view pooling_name(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::eltwise_sum: return "eltwise-sum";
    case PoolingKind::eltwise_product: return "eltwise-product";
    case PoolingKind::concat: return "concat";
    case PoolingKind::concat_fc: return "concat-fc";
    case PoolingKind::full_bilinear: return "full-bilinear";
    case PoolingKind::mcb: return "mcb";
  }
  return "unknown";
}

PoolingMethod PoolingMethod::parse(std::string_view name) {
  PoolingMethod m;
  if (name == "eltwise-sum" || name == "sum") {
    m.kind = PoolingKind::eltwise_sum;
  } else if (name == "eltwise-product" || name == "product") {
    m.kind = PoolingKind::eltwise_product;
  } else if (name == "concat") {
    m.kind = PoolingKind::concat;
  } else if (name == "concat-fc") {
    m.kind = PoolingKind::concat_fc;
  } else if (name == "full-bilinear" || name == "bilinear") {
    m.kind = PoolingKind::full_bilinear;
  } else if (name == "mcb") {
    m.kind = PoolingKind::mcb;
  } else {
    throw std::invalid_argument("unknown pooling method '" + std::string(name) + "'");
  }
  return m;
}

std::string PoolingMethod::name() const { return std::string(pooling_name(kind)); }

PoolingLayer::PoolingLayer(PoolingMethod method, std::size_t n1, std::size_t n2, bool normalize,
                           std::uint64_t seed)
    : method_(std::move(method)), n1_(n1), n2_(n2), normalize_(normalize), combined_dim_(0) {
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("pooling: input dimensions must be positive");
  switch (method_.kind) {
    case PoolingKind::eltwise_sum:
    case PoolingKind::eltwise_product:
      if (n1 != n2) {
        throw std::invalid_argument(method_.name() + " pooling needs equal input lengths (" +
                                    std::to_string(n1) + " vs " + std::to_string(n2) + ")");
      }
      combined_dim_ = n1;
      break;
    case PoolingKind::concat:
    case PoolingKind::concat_fc:
      combined_dim_ = n1 + n2;
      break;
    case PoolingKind::full_bilinear:
      combined_dim_ = n1 * n2;
      break;
    case PoolingKind::mcb:
      if (method_.d == 0) throw std::invalid_argument("mcb pooling requires d > 0");
      combined_dim_ = method_.d;
      op_.emplace(CompactBilinear::sample(derive_seed(seed, 1), n1, n2, method_.d));
      break;
  }
  if (method_.kind == PoolingKind::concat_fc && method_.hidden.empty()) {
    throw std::invalid_argument("concat-fc pooling requires at least one hidden width");
  }
  Rng rng(derive_seed(seed, 2));
  std::size_t in = combined_dim_;
  for (std::size_t width : method_.hidden) {
    fc_.push_back(LinearLayer::init(in, width, true, rng));
    in = width;
  }
}

std::size_t PoolingLayer::output_dim() const noexcept {
  return fc_.empty() ? combined_dim_ : fc_.back().out_dim();
}

RealVec PoolingLayer::forward(std::span<const double> x, std::span<const double> q, Cache* cache) const {
  require_same(x.size(), n1_, "pool first input");
  require_same(q.size(), n2_, "pool second input");
  RealVec combined;
  std::optional<McbForwardRecord> record;
  switch (method_.kind) {
    case PoolingKind::eltwise_sum:
      combined.resize(n1_);
      for (std::size_t i = 0; i < n1_; ++i) combined[i] = x[i] + q[i];
      break;
    case PoolingKind::eltwise_product:
      combined.resize(n1_);
      for (std::size_t i = 0; i < n1_; ++i) combined[i] = x[i] * q[i];
      break;
    case PoolingKind::concat:
    case PoolingKind::concat_fc:
      combined.assign(x.begin(), x.end());
      combined.insert(combined.end(), q.begin(), q.end());
      break;
    case PoolingKind::full_bilinear:
      combined.resize(n1_ * n2_);
      for (std::size_t i = 0; i < n1_; ++i) {
        for (std::size_t j = 0; j < n2_; ++j) combined[i * n2_ + j] = x[i] * q[j];
      }
      break;
    case PoolingKind::mcb:
      record = op_->forward(x, q);
      combined = record->output;
      break;
  }

  RealVec h;
  RealVec rooted;
  if (normalize_) {
    rooted = signed_sqrt_forward(combined);
    h = l2_normalize_forward(rooted);
  } else {
    h = combined;
  }

  std::vector<RealVec> fc_inputs;
  std::vector<RealVec> fc_pre;
  for (const auto& layer : fc_) {
    RealVec pre = linear_forward(layer, h);
    RealVec next = relu_forward(pre);
    if (cache) {
      fc_inputs.push_back(std::move(h));
      fc_pre.push_back(std::move(pre));
    }
    h = std::move(next);
  }

  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->q.assign(q.begin(), q.end());
    cache->mcb = std::move(record);
    cache->combined = std::move(combined);
    cache->rooted = std::move(rooted);
    cache->fc_inputs = std::move(fc_inputs);
    cache->fc_pre = std::move(fc_pre);
  }
  return h;
}

PoolingLayer::InputGrads PoolingLayer::backward(const Cache& cache, std::span<const double> g,
                                                std::span<LinearLayer> fc_grads) const {
  require_same(g.size(), output_dim(), "pool backward");
  require_same(fc_grads.size(), fc_.size(), "pool backward fc gradients");
  RealVec grad(g.begin(), g.end());
  for (std::size_t l = fc_.size(); l-- > 0;) {
    const RealVec through_relu = relu_backward(cache.fc_pre[l], grad);
    grad = linear_backward_into(fc_[l], cache.fc_inputs[l], through_relu, fc_grads[l]);
  }
  if (normalize_) {
    grad = l2_normalize_backward(cache.rooted, grad);
    grad = signed_sqrt_backward(cache.combined, grad);
  }

  InputGrads out{RealVec(n1_, 0.0), RealVec(n2_, 0.0)};
  switch (method_.kind) {
    case PoolingKind::eltwise_sum:
      out.x = grad;
      out.q = grad;
      break;
    case PoolingKind::eltwise_product:
      for (std::size_t i = 0; i < n1_; ++i) {
        out.x[i] = grad[i] * cache.q[i];
        out.q[i] = grad[i] * cache.x[i];
      }
      break;
    case PoolingKind::concat:
    case PoolingKind::concat_fc:
      std::copy(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(n1_), out.x.begin());
      std::copy(grad.begin() + static_cast<std::ptrdiff_t>(n1_), grad.end(), out.q.begin());
      break;
    case PoolingKind::full_bilinear:
      for (std::size_t i = 0; i < n1_; ++i) {
        for (std::size_t j = 0; j < n2_; ++j) {
          out.x[i] += grad[i * n2_ + j] * cache.q[j];
          out.q[j] += grad[i * n2_ + j] * cache.x[i];
        }
      }
      break;
    case PoolingKind::mcb: {
      auto grads = op_->backward(*cache.mcb, grad);
      out.x = std::move(grads[0]);
      out.q = std::move(grads[1]);
      break;
    }
  }
  return out;
}

RealVec pool(const PoolingLayer& layer, std::span<const double> x, std::span<const double> q) {
  return layer.forward(x, q);
}

}  // namespace mcb::nn
