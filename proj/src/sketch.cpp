#include "mcb/sketch.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "mcb/random.hpp"

namespace mcb::sketch {

CountSketchParams::CountSketchParams(std::vector<std::uint32_t> buckets, std::vector<std::int8_t> signs,
                                     std::size_t output_dim, std::uint64_t seed)
    : buckets_(std::move(buckets)), signs_(std::move(signs)), output_dim_(output_dim), seed_(seed) {
  if (buckets_.empty()) throw std::invalid_argument("count sketch: input dimension must be positive");
  if (output_dim_ == 0) throw std::invalid_argument("count sketch: output dimension must be positive");
  if (buckets_.size() != signs_.size()) {
    throw std::invalid_argument("count sketch: h and s lengths differ");
  }
  for (std::size_t i = 0; i < buckets_.size(); ++i) {
    if (buckets_[i] >= output_dim_) {
      throw std::invalid_argument("count sketch: bucket out of range at index " + std::to_string(i));
    }
    if (signs_[i] != 1 && signs_[i] != -1) {
      throw std::invalid_argument("count sketch: sign must be +1 or -1 at index " + std::to_string(i));
    }
  }
}

CountSketchParams sample_params(std::uint64_t seed, std::size_t n, std::size_t d) {
  if (n == 0 || d == 0) throw std::invalid_argument("sample_params: n and d must be positive");
  if (d > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("sample_params: d exceeds 32-bit bucket range");
  }
  Rng rng(seed);
  std::vector<std::uint32_t> h(n);
  std::vector<std::int8_t> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = static_cast<std::uint32_t>(rng.uniform_below(d));
    s[i] = static_cast<std::int8_t>(rng.sign());
  }
  return CountSketchParams(std::move(h), std::move(s), d, seed);
}

RealVec apply(const CountSketchParams& p, std::span<const double> v) {
  if (v.size() != p.input_dim()) {
    throw std::invalid_argument("count sketch apply: expected input of length " +
                                std::to_string(p.input_dim()) + ", got " + std::to_string(v.size()));
  }
  RealVec y(p.output_dim(), 0.0);
  const auto h = p.buckets();
  const auto s = p.signs();
  for (std::size_t i = 0; i < v.size(); ++i) y[h[i]] += s[i] * v[i];
  return y;
}

RealVec apply_adjoint(const CountSketchParams& p, std::span<const double> g) {
  if (g.size() != p.output_dim()) {
    throw std::invalid_argument("count sketch adjoint: expected gradient of length " +
                                std::to_string(p.output_dim()) + ", got " + std::to_string(g.size()));
  }
  RealVec r(p.input_dim());
  const auto h = p.buckets();
  const auto s = p.signs();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = s[i] * g[h[i]];
  return r;
}

CountSketchParams outer_product_params(const CountSketchParams& p1, const CountSketchParams& p2) {
  if (p1.output_dim() != p2.output_dim()) {
    throw std::invalid_argument("outer_product_params: output dimensions differ");
  }
  const std::size_t d = p1.output_dim();
  const std::size_t n1 = p1.input_dim();
  const std::size_t n2 = p2.input_dim();
  std::vector<std::uint32_t> h(n1 * n2);
  std::vector<std::int8_t> s(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      h[i * n2 + j] = static_cast<std::uint32_t>((std::size_t{p1.buckets()[i]} + p2.buckets()[j]) % d);
      s[i * n2 + j] = static_cast<std::int8_t>(p1.signs()[i] * p2.signs()[j]);
    }
  }
  return CountSketchParams(std::move(h), std::move(s), d, derive_seed(p1.seed(), p2.seed()));
}

}  // namespace mcb::sketch
