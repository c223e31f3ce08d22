#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mcb/fft.hpp"
#include "mcb/sketch.hpp"

// Slow reference computations. Nothing here calls into the FFT or the
// compact bilinear code path; the checks that use these stay independent of
// the implementation they validate.
namespace mcb::oracle {

/// O(n^2) DFT; `inverse` uses the positive exponent and 1/n scaling.
ComplexVec naive_dft(std::span<const Complex> v, bool inverse = false);

/// O(n^2) c[k] = sum_j a[j] b[(k - j) mod n].
RealVec naive_circular_convolution(std::span<const double> a, std::span<const double> b);

/// vec(x q^T), row-major.
RealVec outer_product(std::span<const double> x, std::span<const double> q);

/// Count sketch of the flattened k-way outer product, enumerating every index
/// tuple: bucket (sum of h) mod d, sign product of s.
RealVec brute_force_tensor_sketch(std::span<const sketch::CountSketchParams> sketches,
                                  std::span<const RealVec> inputs);

/// (f(x + h) - f(x - h)) / 2h, restoring x afterwards.
double central_difference(const std::function<double()>& f, double& x, double h);

/// Magnitudes below this are compared absolutely in relative_error.
inline constexpr double kGradientFloor = 1e-3;

/// |a - b| / max(|a|, |b|, kGradientFloor).
double relative_error(double analytic, double numeric);

}  // namespace mcb::oracle
