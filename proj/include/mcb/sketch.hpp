#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcb/fft.hpp"

namespace mcb::sketch {

/// The fixed random pair (h, s) of one Count Sketch projection R^n -> R^d.
///
/// Buckets are stored 0-based; serialized files use 1-based indices. The
/// object is immutable after construction: the projection never changes once
/// sampled.
class CountSketchParams {
 public:
  /// Validates every bucket < d and every sign in {-1, +1}.
  CountSketchParams(std::vector<std::uint32_t> buckets, std::vector<std::int8_t> signs,
                    std::size_t output_dim, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return buckets_.size(); }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::span<const std::uint32_t> buckets() const noexcept { return buckets_; }
  std::span<const std::int8_t> signs() const noexcept { return signs_; }

  bool operator==(const CountSketchParams&) const = default;

 private:
  std::vector<std::uint32_t> buckets_;
  std::vector<std::int8_t> signs_;
  std::size_t output_dim_;
  std::uint64_t seed_;
};

/// Draws h uniformly from {0..d-1}^n and s uniformly from {-1,1}^n with an
/// Rng seeded by `seed`, interleaved per index (h[i] then s[i]).
CountSketchParams sample_params(std::uint64_t seed, std::size_t n, std::size_t d);

/// y[h[i]] += s[i] * v[i] over a fresh zero vector of length d.
RealVec apply(const CountSketchParams& p, std::span<const double> v);

/// Transpose of apply: r[i] = s[i] * g[h[i]].
RealVec apply_adjoint(const CountSketchParams& p, std::span<const double> g);

/// Sketch of the flattened outer product vec(x q^T) (row-major, index i*n2+j):
/// h'(i,j) = (h1[i] + h2[j]) mod d, s'(i,j) = s1[i] * s2[j]. Applying it to
/// vec(x q^T) equals the circular convolution of the two individual sketches.
CountSketchParams outer_product_params(const CountSketchParams& p1, const CountSketchParams& p2);

}  // namespace mcb::sketch
