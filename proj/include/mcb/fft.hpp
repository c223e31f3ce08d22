#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace mcb {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;
using RealVec = std::vector<double>;

namespace fft {

/// Precomputed tables for one transform length. Power-of-two lengths use an
/// iterative radix-2 Cooley-Tukey kernel; any other length goes through
/// Bluestein's chirp-z reformulation on a padded power-of-two transform.
///
/// Plans are immutable once built and shared through a process-wide cache,
/// so they are safe to use from several threads at once.
class Plan {
 public:
  static std::shared_ptr<const Plan> get(std::size_t n);

  explicit Plan(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  bool uses_bluestein() const noexcept { return inner_ != nullptr; }

  /// Unscaled in-place transform. `inverse` flips the sign of the exponent.
  void execute(std::span<Complex> data, bool inverse) const;

 private:
  void radix2(std::span<Complex> data, bool inverse) const;
  void bluestein(std::span<Complex> data, bool inverse) const;

  std::size_t n_;
  // radix-2 tables
  std::vector<std::size_t> bitrev_;
  ComplexVec twiddles_;  // exp(-2*pi*i*k/n), k < n/2
  // Bluestein tables
  std::shared_ptr<const Plan> inner_;
  ComplexVec chirp_;           // exp(-i*pi*k^2/n), k < n
  ComplexVec filter_spectrum_;  // FFT of the conjugate chirp, padded
};

/// X[k] = sum_j v[j] exp(-2 pi i jk/n). Throws std::invalid_argument on empty input.
ComplexVec forward(std::span<const Complex> v);
ComplexVec forward(std::span<const double> v);

/// Inverse transform with 1/n scaling.
ComplexVec inverse(std::span<const Complex> spectrum);

/// Real part of a nominally real signal. Throws NumericalError when the
/// largest imaginary magnitude exceeds 1e-6 * max(||re||_2, floor).
RealVec checked_real(std::span<const Complex> v, double floor = 0.0);

/// c[k] = sum_j a[j] b[(k - j) mod n], evaluated through the frequency domain.
RealVec circular_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace fft
}  // namespace mcb
