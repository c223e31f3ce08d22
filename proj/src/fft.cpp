#include "mcb/fft.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mcb/error.hpp"

namespace mcb::fft {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::shared_ptr<const Plan> Plan::get(std::size_t n) {
  static std::mutex mutex;
  static std::unordered_map<std::size_t, std::shared_ptr<const Plan>> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  // Built outside the lock: Bluestein plans recurse into get().
  auto plan = std::make_shared<const Plan>(n);
  std::lock_guard lock(mutex);
  return cache.try_emplace(n, std::move(plan)).first->second;
}

Plan::Plan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("fft plan: length must be positive");

  if (is_power_of_two(n)) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      }
      bitrev_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
    return;
  }

  const std::size_t m = next_power_of_two(2 * n - 1);
  inner_ = get(m);
  chirp_.resize(n);
  const std::size_t period = 2 * n;
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 reduced mod 2n keeps the angle argument small and exact.
    const std::size_t k2 = static_cast<std::size_t>((static_cast<unsigned __int128>(k) * k) % period);
    const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(angle), std::sin(angle)};
  }
  filter_spectrum_.assign(m, Complex{});
  filter_spectrum_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    filter_spectrum_[k] = std::conj(chirp_[k]);
    filter_spectrum_[m - k] = std::conj(chirp_[k]);
  }
  inner_->execute(filter_spectrum_, false);
}

void Plan::execute(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) {
    throw std::invalid_argument("fft plan: expected length " + std::to_string(n_) + ", got " +
                                std::to_string(data.size()));
  }
  if (n_ == 1) return;
  if (inner_) {
    bluestein(data, inverse);
  } else {
    radix2(data, inverse);
  }
}

void Plan::radix2(std::span<Complex> data, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      Complex* lo = data.data() + start;
      Complex* hi = lo + half;
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = twiddles_[k * stride];
        if (inverse) w = std::conj(w);
        // Written out to avoid the NaN/Inf branches of std::complex operator*.
        const double tr = hi[k].real() * w.real() - hi[k].imag() * w.imag();
        const double ti = hi[k].real() * w.imag() + hi[k].imag() * w.real();
        const Complex t{tr, ti};
        hi[k] = lo[k] - t;
        lo[k] += t;
      }
    }
  }
}

void Plan::bluestein(std::span<Complex> data, bool inverse) const {
  // The inverse transform is conj(DFT(conj(x))).
  const std::size_t m = inner_->size();
  ComplexVec work(m, Complex{});
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex x = inverse ? std::conj(data[k]) : data[k];
    work[k] = x * chirp_[k];
  }
  inner_->execute(work, false);
  for (std::size_t k = 0; k < m; ++k) work[k] *= filter_spectrum_[k];
  inner_->execute(work, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex y = work[k] * chirp_[k] * scale;
    data[k] = inverse ? std::conj(y) : y;
  }
}

ComplexVec forward(std::span<const Complex> v) {
  if (v.empty()) throw std::invalid_argument("fft_forward: empty input");
  ComplexVec out(v.begin(), v.end());
  Plan::get(out.size())->execute(out, false);
  return out;
}

ComplexVec forward(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("fft_forward: empty input");
  ComplexVec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = {v[i], 0.0};
  Plan::get(out.size())->execute(out, false);
  return out;
}

ComplexVec inverse(std::span<const Complex> spectrum) {
  if (spectrum.empty()) throw std::invalid_argument("fft_inverse: empty input");
  ComplexVec out(spectrum.begin(), spectrum.end());
  Plan::get(out.size())->execute(out, true);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& c : out) c *= scale;
  return out;
}

RealVec checked_real(std::span<const Complex> v, double floor) {
  RealVec out(v.size());
  double residue = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i].real();
    residue = std::max(residue, std::abs(v[i].imag()));
  }
  const double limit = 1e-6 * std::max(l2_norm(out), floor);
  if (residue > limit) {
    throw NumericalError("imaginary residue " + std::to_string(residue) + " exceeds " +
                         std::to_string(limit) + " in a nominally real signal");
  }
  return out;
}

RealVec circular_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("circular_convolve: length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("circular_convolve: empty input");
  ComplexVec fa = forward(a);
  const ComplexVec fb = forward(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  return checked_real(inverse(fa), 1e-9 * l2_norm(a) * l2_norm(b));
}

}  // namespace mcb::fft
