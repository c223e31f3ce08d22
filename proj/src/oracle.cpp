#include "mcb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mcb::oracle {

ComplexVec naive_dft(std::span<const Complex> v, bool inverse) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("naive_dft: empty input");
  const double sign = inverse ? 1.0 : -1.0;
  ComplexVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      acc += v[j] * Complex{std::cos(angle), std::sin(angle)};
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

RealVec naive_circular_convolution(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("naive_circular_convolution: length mismatch");
  const std::size_t n = a.size();
  RealVec c(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) c[k] += a[j] * b[(k + n - j) % n];
  }
  return c;
}

RealVec outer_product(std::span<const double> x, std::span<const double> q) {
  RealVec out;
  out.reserve(x.size() * q.size());
  for (double xi : x) {
    for (double qj : q) out.push_back(xi * qj);
  }
  return out;
}

RealVec brute_force_tensor_sketch(std::span<const sketch::CountSketchParams> sketches,
                                  std::span<const RealVec> inputs) {
  if (sketches.empty() || sketches.size() != inputs.size()) {
    throw std::invalid_argument("brute_force_tensor_sketch: arity mismatch");
  }
  const std::size_t d = sketches.front().output_dim();
  const std::size_t k = sketches.size();
  for (std::size_t m = 0; m < k; ++m) {
    if (inputs[m].size() != sketches[m].input_dim() || sketches[m].output_dim() != d) {
      throw std::invalid_argument("brute_force_tensor_sketch: dimension mismatch");
    }
  }
  RealVec y(d, 0.0);
  std::vector<std::size_t> index(k, 0);
  for (;;) {
    std::size_t bucket = 0;
    double value = 1.0;
    for (std::size_t m = 0; m < k; ++m) {
      bucket += sketches[m].buckets()[index[m]];
      value *= sketches[m].signs()[index[m]] * inputs[m][index[m]];
    }
    y[bucket % d] += value;
    std::size_t m = 0;
    while (m < k && ++index[m] == inputs[m].size()) index[m++] = 0;
    if (m == k) break;
  }
  return y;
}

double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace mcb::oracle
