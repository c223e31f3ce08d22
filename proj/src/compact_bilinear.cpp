#include "mcb/compact_bilinear.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mcb/parallel.hpp"
#include "mcb/random.hpp"

namespace mcb {
namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* what) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw std::invalid_argument(std::string(what) + ": result overflows 64 bits");
  }
  return out;
}

}  // namespace

CompactBilinear::CompactBilinear(std::vector<sketch::CountSketchParams> sketches)
    : sketches_(std::move(sketches)), output_dim_(0) {
  if (sketches_.size() < 2) {
    throw std::invalid_argument("compact bilinear: need at least two inputs, got " +
                                std::to_string(sketches_.size()));
  }
  output_dim_ = sketches_.front().output_dim();
  for (const auto& p : sketches_) {
    if (p.output_dim() != output_dim_) {
      throw std::invalid_argument("compact bilinear: all sketches must share the output dimension");
    }
  }
  // Buckets hit by at least one index tuple: the sumset of the occupied
  // buckets of every sketch, mod d.
  reachable_.assign(output_dim_, 0);
  for (auto b : sketches_.front().buckets()) reachable_[b] = 1;
  for (std::size_t k = 1; k < sketches_.size(); ++k) {
    std::vector<std::uint8_t> seen(output_dim_, 0);
    std::vector<std::size_t> occupied;
    for (auto b : sketches_[k].buckets()) {
      if (!seen[b]) occupied.push_back(b);
      seen[b] = 1;
    }
    std::vector<std::uint8_t> next(output_dim_, 0);
    for (std::size_t a = 0; a < output_dim_; ++a) {
      if (!reachable_[a]) continue;
      for (std::size_t b : occupied) next[(a + b) % output_dim_] = 1;
    }
    reachable_ = std::move(next);
  }
}

CompactBilinear CompactBilinear::sample(std::uint64_t seed, std::span<const std::size_t> input_dims,
                                        std::size_t output_dim) {
  std::vector<sketch::CountSketchParams> sketches;
  sketches.reserve(input_dims.size());
  for (std::size_t k = 0; k < input_dims.size(); ++k) {
    sketches.push_back(sketch::sample_params(derive_seed(seed, k), input_dims[k], output_dim));
  }
  return CompactBilinear(std::move(sketches));
}

CompactBilinear CompactBilinear::sample(std::uint64_t seed, std::size_t n1, std::size_t n2,
                                        std::size_t output_dim) {
  const std::size_t dims[] = {n1, n2};
  return sample(seed, dims, output_dim);
}

McbForwardRecord CompactBilinear::forward(std::span<const RealVec> inputs) const {
  if (inputs.size() != arity()) {
    throw std::invalid_argument("compact bilinear forward: expected " + std::to_string(arity()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  McbForwardRecord rec;
  rec.inputs.assign(inputs.begin(), inputs.end());
  rec.sketches.reserve(arity());
  rec.spectra.reserve(arity());
  double scale = 1.0;
  for (std::size_t k = 0; k < arity(); ++k) {
    rec.sketches.push_back(sketch::apply(sketches_[k], inputs[k]));
    rec.spectra.push_back(fft::forward(std::span<const double>(rec.sketches.back())));
    scale *= l2_norm(rec.sketches.back());
  }
  ComplexVec product = rec.spectra.front();
  for (std::size_t k = 1; k < arity(); ++k) {
    for (std::size_t i = 0; i < output_dim_; ++i) product[i] *= rec.spectra[k][i];
  }
  rec.output = fft::checked_real(fft::inverse(product), 1e-9 * scale);
  // No index tuple lands in these buckets, so their exact value is zero.
  // Flushing the transform's roundoff keeps signed sqrt from inflating it.
  for (std::size_t i = 0; i < output_dim_; ++i) {
    if (!reachable_[i]) rec.output[i] = 0.0;
  }
  return rec;
}

McbForwardRecord CompactBilinear::forward(std::span<const double> x, std::span<const double> q) const {
  const RealVec inputs[] = {RealVec(x.begin(), x.end()), RealVec(q.begin(), q.end())};
  return forward(inputs);
}

RealVec CompactBilinear::operator()(std::span<const double> x, std::span<const double> q) const {
  return forward(x, q).output;
}

std::vector<RealVec> CompactBilinear::backward(const McbForwardRecord& record,
                                               std::span<const double> g) const {
  if (g.size() != output_dim_) {
    throw std::invalid_argument("compact bilinear backward: expected gradient of length " +
                                std::to_string(output_dim_) + ", got " + std::to_string(g.size()));
  }
  if (record.spectra.size() != arity() || record.sketches.size() != arity()) {
    throw std::invalid_argument("compact bilinear backward: record does not match operator arity");
  }
  const std::size_t k = arity();
  const std::size_t d = output_dim_;
  RealVec g_reachable(g.begin(), g.end());
  for (std::size_t i = 0; i < d; ++i) {
    if (!reachable_[i]) g_reachable[i] = 0.0;
  }
  const ComplexVec grad_spectrum = fft::forward(std::span<const double>(g_reachable));

  // prefix[j] = product of spectra before j, suffix[j] = after j. Avoids
  // dividing by spectra that may contain zeros.
  std::vector<ComplexVec> prefix(k, ComplexVec(d, Complex{1.0, 0.0}));
  std::vector<ComplexVec> suffix(k, ComplexVec(d, Complex{1.0, 0.0}));
  for (std::size_t j = 1; j < k; ++j) {
    for (std::size_t i = 0; i < d; ++i) prefix[j][i] = prefix[j - 1][i] * record.spectra[j - 1][i];
  }
  for (std::size_t j = k - 1; j-- > 0;) {
    for (std::size_t i = 0; i < d; ++i) suffix[j][i] = suffix[j + 1][i] * record.spectra[j + 1][i];
  }

  std::vector<RealVec> grads;
  grads.reserve(k);
  const double g_norm = l2_norm(g_reachable);
  for (std::size_t j = 0; j < k; ++j) {
    double others = 1.0;
    for (std::size_t m = 0; m < k; ++m) {
      if (m != j) others *= l2_norm(record.sketches[m]);
    }
    ComplexVec spectrum(d);
    for (std::size_t i = 0; i < d; ++i) {
      spectrum[i] = grad_spectrum[i] * std::conj(prefix[j][i] * suffix[j][i]);
    }
    const RealVec grad_sketch = fft::checked_real(fft::inverse(spectrum), 1e-9 * g_norm * others);
    grads.push_back(sketch::apply_adjoint(sketches_[j], grad_sketch));
  }
  return grads;
}

std::vector<RealVec> CompactBilinear::forward_batch(std::span<const std::vector<RealVec>> batch) const {
  std::vector<RealVec> out(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) { out[b] = forward(batch[b]).output; });
  return out;
}

std::uint64_t full_bilinear_param_count(std::uint64_t n1, std::uint64_t n2, std::uint64_t outputs) {
  if (n1 == 0 || n2 == 0 || outputs == 0) {
    throw std::invalid_argument("full_bilinear_param_count: all arguments must be positive");
  }
  return checked_mul(checked_mul(n1, n2, "full_bilinear_param_count"), outputs, "full_bilinear_param_count");
}

std::uint64_t mcb_param_count(std::uint64_t d, std::uint64_t outputs) {
  if (d == 0 || outputs == 0) throw std::invalid_argument("mcb_param_count: all arguments must be positive");
  return checked_mul(d, outputs, "mcb_param_count");
}

}  // namespace mcb
