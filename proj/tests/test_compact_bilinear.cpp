#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "mcb/compact_bilinear.hpp"
#include "mcb/oracle.hpp"
#include "mcb/random.hpp"
#include "mcb/sketch.hpp"

using namespace mcb;
using sketch::CountSketchParams;

namespace {

RealVec random_real(Rng& rng, std::size_t n) {
  RealVec v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_abs_diff(const RealVec& a, const RealVec& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

CompactBilinear scalar_op(std::int8_t s1, std::int8_t s2) {
  return CompactBilinear({CountSketchParams({0}, {s1}, 1, 0), CountSketchParams({0}, {s2}, 1, 0)});
}

}  // namespace

TEST_SUITE("compact_bilinear") {
  TEST_CASE("scalar case") {
    const auto op = scalar_op(1, -1);
    CHECK(op(RealVec{3}, RealVec{4}) == RealVec{-12});
  }

  TEST_CASE("k = 2 matches the sketch of the explicit outer product") {
    Rng rng(1);
    const auto op = CompactBilinear::sample(77, 8, 8, 16);
    const RealVec x = random_real(rng, 8);
    const RealVec q = random_real(rng, 8);
    const auto oracle_params = sketch::outer_product_params(op.sketches()[0], op.sketches()[1]);
    CHECK(max_abs_diff(op(x, q), sketch::apply(oracle_params, oracle::outer_product(x, q))) < 1e-9);
  }

  TEST_CASE("k = 3 matches the brute-force triple outer product") {
    Rng rng(2);
    const std::size_t dims[] = {4, 4, 4};
    const auto op = CompactBilinear::sample(5, dims, 8);
    const std::vector<RealVec> in{random_real(rng, 4), random_real(rng, 4), random_real(rng, 4)};
    // Written out independently: bucket (sum of 1-based h minus 1) mod d, product of signs.
    RealVec expected(8, 0.0);
    const auto sk = op.sketches();
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t c = 0; c < 4; ++c) {
          const std::size_t h = ((sk[0].buckets()[a] + 1) + (sk[1].buckets()[b] + 1) + (sk[2].buckets()[c] + 1) - 3) % 8;
          expected[h] += sk[0].signs()[a] * sk[1].signs()[b] * sk[2].signs()[c] * in[0][a] * in[1][b] * in[2][c];
        }
      }
    }
    const RealVec got = op.forward(in).output;
    CHECK(max_abs_diff(got, expected) < 1e-9);
    CHECK(max_abs_diff(got, oracle::brute_force_tensor_sketch(op.sketches(), in)) < 1e-9);
  }

  TEST_CASE("oracle equivalence over 100 seeds including non-power-of-two d") {
    Rng rng(3);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t n1 = 1 + rng.uniform_below(32);
      const std::size_t n2 = 1 + rng.uniform_below(32);
      const std::size_t d = 1 + rng.uniform_below(64);
      const auto op = CompactBilinear::sample(derive_seed(1234, t), n1, n2, d);
      const RealVec x = random_real(rng, n1);
      const RealVec q = random_real(rng, n2);
      const auto params = sketch::outer_product_params(op.sketches()[0], op.sketches()[1]);
      worst = std::max(worst, max_abs_diff(op(x, q), sketch::apply(params, oracle::outer_product(x, q))));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("multilinear in each input") {
    Rng rng(4);
    const std::size_t dims[] = {5, 6, 3};
    const auto op = CompactBilinear::sample(9, dims, 13);
    std::vector<RealVec> in{random_real(rng, 5), random_real(rng, 6), random_real(rng, 3)};
    const RealVec base = op.forward(in).output;
    for (std::size_t k = 0; k < 3; ++k) {
      auto scaled = in;
      for (auto& v : scaled[k]) v *= -2.5;
      const RealVec out = op.forward(scaled).output;
      for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(out[i] + 2.5 * base[i]) < 1e-10);
    }
  }

  TEST_CASE("unreachable buckets are exactly zero") {
    const auto op = CompactBilinear::sample(11, 3, 3, 40);
    Rng rng(5);
    const RealVec out = op(random_real(rng, 3), random_real(rng, 3));
    std::size_t unreachable = 0;
    for (std::size_t b = 0; b < 40; ++b) {
      bool hit = false;
      for (auto h1 : op.sketches()[0].buckets()) {
        for (auto h2 : op.sketches()[1].buckets()) hit = hit || (h1 + h2) % 40 == b;
      }
      CHECK(op.reachable(b) == hit);
      if (!hit) {
        ++unreachable;
        CHECK(out[b] == 0.0);
      }
    }
    CHECK(unreachable >= 31);
  }

  TEST_CASE("invalid construction and inputs are rejected") {
    CHECK_THROWS_AS(CompactBilinear({sketch::sample_params(1, 3, 4)}), std::invalid_argument);
    CHECK_THROWS_AS(CompactBilinear({sketch::sample_params(1, 3, 4), sketch::sample_params(1, 3, 5)}),
                    std::invalid_argument);
    const auto op = CompactBilinear::sample(1, 3, 2, 4);
    CHECK_THROWS_AS(op(RealVec{1, 2}, RealVec{1, 2}), std::invalid_argument);
    const std::vector<RealVec> three{RealVec(3), RealVec(2), RealVec(2)};
    CHECK_THROWS_AS(op.forward(three), std::invalid_argument);
    const auto rec = op.forward(RealVec{1, 2, 3}, RealVec{1, 2});
    CHECK_THROWS_AS(op.backward(rec, RealVec{1, 2, 3}), std::invalid_argument);
  }

  TEST_CASE("forward record keeps the intermediate values") {
    const auto op = CompactBilinear::sample(2, 4, 3, 6);
    const RealVec x{1, 2, 3, 4};
    const RealVec q{-1, 0.5, 2};
    const auto rec = op.forward(x, q);
    REQUIRE(rec.inputs.size() == 2);
    CHECK(rec.inputs[0] == x);
    CHECK(rec.sketches[0] == sketch::apply(op.sketches()[0], x));
    CHECK(rec.sketches[1] == sketch::apply(op.sketches()[1], q));
    CHECK(rec.spectra.size() == 2);
    CHECK(rec.output.size() == 6);
  }
}

TEST_SUITE("compact_bilinear") {
  TEST_CASE("backward of a zero gradient is zero") {
    Rng rng(6);
    const auto op = CompactBilinear::sample(3, 5, 4, 7);
    const auto rec = op.forward(random_real(rng, 5), random_real(rng, 4));
    const auto grads = op.backward(rec, RealVec(7, 0.0));
    CHECK(grads[0] == RealVec(5, 0.0));
    CHECK(grads[1] == RealVec(4, 0.0));
  }

  TEST_CASE("scalar product rule") {
    const auto op = scalar_op(1, 1);
    const auto grads = op.backward(op.forward(RealVec{3}, RealVec{4}), RealVec{1});
    CHECK(grads[0][0] == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(grads[1][0] == doctest::Approx(3.0).epsilon(1e-14));
  }

  TEST_CASE("backward matches central differences over 100 cases including k = 3") {
    Rng rng(7);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t k = t < 50 ? 2 : 3;
      std::vector<std::size_t> dims(k);
      for (auto& n : dims) n = t < 10 ? 4 : 1 + rng.uniform_below(6);
      const std::size_t d = t < 10 ? 8 : 1 + rng.uniform_below(20);
      const auto op = CompactBilinear::sample(rng.next_u64(), dims, d);
      std::vector<RealVec> in;
      for (auto n : dims) in.push_back(random_real(rng, n));
      const RealVec g = random_real(rng, d);
      const auto grads = op.backward(op.forward(in), g);
      for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t i = 0; i < dims[m]; ++i) {
          const double numeric = oracle::central_difference(
              [&] {
                const RealVec out = op.forward(in).output;
                return std::inner_product(out.begin(), out.end(), g.begin(), 0.0);
              },
              in[m][i], 1e-6);
          worst = std::max(worst, oracle::relative_error(grads[m][i], numeric));
        }
      }
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("batched forward equals per-item forward for any thread cap") {
    Rng rng(8);
    const auto op = CompactBilinear::sample(4, 10, 12, 30);
    std::vector<std::vector<RealVec>> batch;
    for (int b = 0; b < 9; ++b) batch.push_back({random_real(rng, 10), random_real(rng, 12)});
    const char* saved = std::getenv("MCB_THREADS");
    const std::string restore = saved ? saved : "";
    for (const char* threads : {"1", "3", "8"}) {
      setenv("MCB_THREADS", threads, 1);
      const auto out = op.forward_batch(batch);
      REQUIRE(out.size() == batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) CHECK(out[b] == op.forward(batch[b]).output);
    }
    if (saved) {
      setenv("MCB_THREADS", restore.c_str(), 1);
    } else {
      unsetenv("MCB_THREADS");
    }
  }
}

TEST_SUITE("compact_bilinear") {
  TEST_CASE("parameter counts") {
    CHECK(full_bilinear_param_count(2048, 2048, 3000) == 12582912000ULL);
    CHECK(full_bilinear_param_count(1, 1, 1) == 1);
    CHECK(full_bilinear_param_count(128, 128, 16000) == 262144000ULL);
    CHECK(mcb_param_count(16000, 3000) == 48000000ULL);
    CHECK(mcb_param_count(1, 1) == 1);
    CHECK(mcb_param_count(4096, 3000) == 12288000ULL);
  }

  TEST_CASE("parameter counts reject zero and overflow") {
    CHECK_THROWS_AS(full_bilinear_param_count(0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(mcb_param_count(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(full_bilinear_param_count(1ULL << 32, 1ULL << 32, 2), std::invalid_argument);
    CHECK_THROWS_AS(mcb_param_count(1ULL << 40, 1ULL << 30), std::invalid_argument);
  }
}
