#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mcb/attention.hpp"
#include "mcb/oracle.hpp"
#include "mcb/random.hpp"

using namespace mcb;
using doctest::Approx;

namespace {

attention::SpatialGrid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t dim) {
  RealVec values(h * w * dim);
  for (auto& v : values) v = rng.uniform(-1.0, 1.0);
  return attention::SpatialGrid(h, w, dim, std::move(values));
}

RealVec random_real(Rng& rng, std::size_t n) {
  RealVec v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double dot(const RealVec& a, const RealVec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("maps are distributions over locations") {
    Rng rng(1);
    const auto head = attention::AttentionHead::create(6, 5, 32, 8, 3, 11);
    const auto grid = random_grid(rng, 3, 4, 6);
    const auto out = attention::attention_forward(head, grid, random_real(rng, 5));
    REQUIRE(out.maps.size() == 3);
    CHECK(out.attended.size() == 18);
    for (const auto& m : out.maps) {
      REQUIRE(m.size() == 12);
      CHECK(std::accumulate(m.begin(), m.end(), 0.0) == Approx(1.0).epsilon(1e-12));
      for (double a : m) CHECK(a >= 0.0);
    }
  }

  TEST_CASE("zero logits give uniform maps and the grid mean") {
    Rng rng(2);
    auto head = attention::AttentionHead::create(4, 4, 16, 5, 2, 3);
    std::fill(head.proj2.weight.data.begin(), head.proj2.weight.data.end(), 0.0);
    std::fill(head.proj2.bias.begin(), head.proj2.bias.end(), 0.0);
    const auto grid = random_grid(rng, 2, 3, 4);
    const auto out = attention::attention_forward(head, grid, random_real(rng, 4));
    for (const auto& m : out.maps) {
      for (double a : m) CHECK(a == Approx(1.0 / 6.0).epsilon(1e-14));
    }
    for (std::size_t glimpse = 0; glimpse < 2; ++glimpse) {
      for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (std::size_t g = 0; g < 6; ++g) mean += grid.location(g)[c];
        CHECK(out.attended[glimpse * 4 + c] == Approx(mean / 6.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("a single location gets all the weight") {
    Rng rng(3);
    const auto head = attention::AttentionHead::create(3, 3, 8, 4, 2, 5);
    const auto grid = random_grid(rng, 1, 1, 3);
    const auto out = attention::attention_forward(head, grid, random_real(rng, 3));
    for (const auto& m : out.maps) CHECK(m == RealVec{1.0});
    CHECK(RealVec(out.attended.begin(), out.attended.begin() + 3) == grid.data);
  }

  TEST_CASE("zero upstream gradient gives zero gradients") {
    Rng rng(4);
    const auto head = attention::AttentionHead::create(4, 3, 16, 5, 2, 7);
    const auto grid = random_grid(rng, 2, 2, 4);
    const auto out = attention::attention_forward(head, grid, random_real(rng, 3));
    const auto grads = attention::attention_backward(head, out.cache, RealVec(8, 0.0));
    auto all_zero = [](const RealVec& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
    CHECK(all_zero(grads.grid));
    CHECK(all_zero(grads.query));
    CHECK(all_zero(grads.proj1.weight.data));
    CHECK(all_zero(grads.proj2.weight.data));
  }

  TEST_CASE("backward against central differences") {
    for (std::size_t glimpses : {1u, 2u, 4u}) {
      CAPTURE(glimpses);
      Rng rng(10 + glimpses);
      auto head = attention::AttentionHead::create(4, 4, 16, 6, glimpses, 20 + glimpses);
      for (auto& b : head.proj1.bias) b = rng.uniform(0.2, 0.5);
      auto grid = random_grid(rng, 2, 2, 4);
      RealVec query = random_real(rng, 4);
      const RealVec g = random_real(rng, glimpses * 4);
      const auto out = attention::attention_forward(head, grid, query);
      const auto grads = attention::attention_backward(head, out.cache, g);
      auto loss = [&] { return dot(g, attention::attention_forward(head, grid, query).attended); };
      double worst = 0.0;
      for (std::size_t i = 0; i < grid.data.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(grads.grid[i], oracle::central_difference(loss, grid.data[i], 1e-6)));
      }
      for (std::size_t i = 0; i < query.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(grads.query[i], oracle::central_difference(loss, query[i], 1e-6)));
      }
      for (std::size_t i = 0; i < head.proj1.weight.data.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(grads.proj1.weight.data[i],
                                                       oracle::central_difference(loss, head.proj1.weight.data[i], 1e-6)));
      }
      for (std::size_t i = 0; i < head.proj2.weight.data.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(grads.proj2.weight.data[i],
                                                       oracle::central_difference(loss, head.proj2.weight.data[i], 1e-6)));
      }
      for (std::size_t i = 0; i < head.proj2.bias.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(grads.proj2.bias[i],
                                                       oracle::central_difference(loss, head.proj2.bias[i], 1e-6)));
      }
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("dimension errors") {
    Rng rng(5);
    const auto head = attention::AttentionHead::create(4, 3, 16, 5, 2, 7);
    CHECK_THROWS_AS(attention::attention_forward(head, random_grid(rng, 2, 2, 5), random_real(rng, 3)),
                    std::invalid_argument);
    CHECK_THROWS_AS(attention::attention_forward(head, random_grid(rng, 2, 2, 4), random_real(rng, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(attention::SpatialGrid(2, 2, 3, RealVec(11)), std::invalid_argument);
    CHECK_THROWS_AS(attention::SpatialGrid(0, 2, 3, RealVec{}), std::invalid_argument);
    CHECK_THROWS_AS(attention::AttentionHead::create(4, 3, 16, 5, 0, 7), std::invalid_argument);
    const auto out = attention::attention_forward(head, random_grid(rng, 2, 2, 4), random_real(rng, 3));
    CHECK_THROWS_AS(attention::attention_backward(head, out.cache, RealVec(7)), std::invalid_argument);
  }

  TEST_CASE("parameter count covers both projections") {
    const auto head = attention::AttentionHead::create(10, 10, 64, 32, 2, 1);
    CHECK(head.param_count() == 64 * 32 + 32 + 32 * 2 + 2);
  }
}
