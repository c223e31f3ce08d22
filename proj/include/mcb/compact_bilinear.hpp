#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcb/fft.hpp"
#include "mcb/sketch.hpp"

namespace mcb {

/// Everything the backward pass needs from one forward evaluation.
struct McbForwardRecord {
  std::vector<RealVec> inputs;
  std::vector<RealVec> sketches;
  std::vector<ComplexVec> spectra;
  RealVec output;
};

/// Multimodal compact bilinear pooling: each of k >= 2 inputs is count
/// sketched to R^d, the sketches are multiplied in the frequency domain and
/// transformed back. For k = 2 the result is the count sketch of vec(x q^T);
/// for larger k it is the sketch of the flattened k-way outer product.
///
/// The operator holds no learned state. Its sketches are fixed at
/// construction and the object can be shared freely between threads.
class CompactBilinear {
 public:
  explicit CompactBilinear(std::vector<sketch::CountSketchParams> sketches);

  /// Modality k is sketched with sample_params(derive_seed(seed, k), dims[k], d).
  static CompactBilinear sample(std::uint64_t seed, std::span<const std::size_t> input_dims,
                                std::size_t output_dim);
  static CompactBilinear sample(std::uint64_t seed, std::size_t n1, std::size_t n2, std::size_t output_dim);

  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t arity() const noexcept { return sketches_.size(); }
  std::size_t input_dim(std::size_t k) const { return sketches_.at(k).input_dim(); }
  std::span<const sketch::CountSketchParams> sketches() const noexcept { return sketches_; }
  /// False for buckets no index tuple maps to; the output is exactly zero there.
  bool reachable(std::size_t bucket) const { return reachable_.at(bucket) != 0; }

  McbForwardRecord forward(std::span<const RealVec> inputs) const;
  McbForwardRecord forward(std::span<const double> x, std::span<const double> q) const;

  /// Output only, without keeping the record.
  RealVec operator()(std::span<const double> x, std::span<const double> q) const;

  /// Gradient of <g, output> with respect to every input.
  std::vector<RealVec> backward(const McbForwardRecord& record, std::span<const double> g) const;

  /// Independent evaluation of each tuple in the batch. Members may run on
  /// separate threads (see MCB_THREADS); output i depends only on batch[i].
  std::vector<RealVec> forward_batch(std::span<const std::vector<RealVec>> batch) const;

 private:
  std::vector<sketch::CountSketchParams> sketches_;
  std::size_t output_dim_;
  std::vector<std::uint8_t> reachable_;
};

/// n1 * n2 * outputs, the weight count of a linear model on vec(x q^T).
/// Throws std::invalid_argument on zero arguments or 64-bit overflow.
std::uint64_t full_bilinear_param_count(std::uint64_t n1, std::uint64_t n2, std::uint64_t outputs);

/// d * outputs: the classifier over the pooled feature. The sketches add none.
std::uint64_t mcb_param_count(std::uint64_t d, std::uint64_t outputs);

}  // namespace mcb
