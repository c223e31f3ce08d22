#include "mcb/attention.hpp"

#include <stdexcept>
#include <string>

#include "mcb/random.hpp"

namespace mcb::attention {

SpatialGrid::SpatialGrid(std::size_t h, std::size_t w, std::size_t d, RealVec values)
    : height(h), width(w), dim(d), data(std::move(values)) {
  if (h == 0 || w == 0 || d == 0) throw std::invalid_argument("spatial grid: dimensions must be positive");
  if (data.size() != h * w * d) {
    throw std::invalid_argument("spatial grid: expected " + std::to_string(h * w * d) + " values, got " +
                                std::to_string(data.size()));
  }
}

AttentionHead AttentionHead::create(std::size_t grid_dim, std::size_t query_dim, std::size_t d,
                                    std::size_t hidden, std::size_t glimpses, std::uint64_t seed) {
  if (glimpses == 0) throw std::invalid_argument("attention: glimpses must be positive");
  Rng rng(derive_seed(seed, 3));
  auto proj1 = nn::LinearLayer::init(d, hidden, true, rng);
  auto proj2 = nn::LinearLayer::init(hidden, glimpses, true, rng);
  return AttentionHead{CompactBilinear::sample(derive_seed(seed, 4), grid_dim, query_dim, d), std::move(proj1),
                       std::move(proj2)};
}

AttentionOutput attention_forward(const AttentionHead& head, const SpatialGrid& grid,
                                  std::span<const double> query) {
  if (grid.dim != head.grid_dim()) {
    throw std::invalid_argument("attention: grid vectors have dimension " + std::to_string(grid.dim) +
                                ", head expects " + std::to_string(head.grid_dim()));
  }
  if (query.size() != head.query_dim()) {
    throw std::invalid_argument("attention: query has dimension " + std::to_string(query.size()) +
                                ", head expects " + std::to_string(head.query_dim()));
  }
  const std::size_t locations = grid.locations();
  const std::size_t glimpses = head.glimpses();
  if (locations == 0) throw std::invalid_argument("attention: empty grid");

  AttentionOutput out;
  auto& cache = out.cache;
  cache.grid = grid;
  cache.query.assign(query.begin(), query.end());

  std::vector<RealVec> logits(glimpses, RealVec(locations));
  for (std::size_t g = 0; g < locations; ++g) {
    auto pooled = head.mcb.forward(grid.location(g), query);
    RealVec rooted = nn::signed_sqrt_forward(pooled.output);
    RealVec normalized = nn::l2_normalize_forward(rooted);
    RealVec pre = nn::linear_forward(head.proj1, normalized);
    RealVec hidden = nn::relu_forward(pre);
    const RealVec scores = nn::linear_forward(head.proj2, hidden);
    for (std::size_t j = 0; j < glimpses; ++j) logits[j][g] = scores[j];
    cache.pooled.push_back(std::move(pooled));
    cache.rooted.push_back(std::move(rooted));
    cache.normalized.push_back(std::move(normalized));
    cache.hidden_pre.push_back(std::move(pre));
    cache.hidden.push_back(std::move(hidden));
  }

  out.attended.assign(glimpses * grid.dim, 0.0);
  for (std::size_t j = 0; j < glimpses; ++j) {
    RealVec map = nn::softmax(logits[j]);
    double* dst = out.attended.data() + j * grid.dim;
    for (std::size_t g = 0; g < locations; ++g) {
      const auto v = grid.location(g);
      for (std::size_t c = 0; c < grid.dim; ++c) dst[c] += map[g] * v[c];
    }
    cache.maps.push_back(std::move(map));
  }
  out.maps = cache.maps;
  return out;
}

AttentionGradients attention_backward(const AttentionHead& head, const AttentionCache& cache,
                                      std::span<const double> grad_attended) {
  const std::size_t glimpses = head.glimpses();
  const std::size_t dim = cache.grid.dim;
  const std::size_t locations = cache.grid.locations();
  if (grad_attended.size() != glimpses * dim) {
    throw std::invalid_argument("attention backward: expected gradient of length " +
                                std::to_string(glimpses * dim) + ", got " + std::to_string(grad_attended.size()));
  }
  if (cache.maps.size() != glimpses || cache.pooled.size() != locations) {
    throw std::invalid_argument("attention backward: cache does not match head");
  }

  AttentionGradients out{nn::LinearLayer::zeros_like(head.proj1), nn::LinearLayer::zeros_like(head.proj2),
                         RealVec(cache.grid.data.size(), 0.0), RealVec(head.query_dim(), 0.0)};

  // Weighted sum: attended_j = sum_g map_j[g] grid[g].
  std::vector<RealVec> grad_logits(glimpses);
  for (std::size_t j = 0; j < glimpses; ++j) {
    const auto gj = grad_attended.subspan(j * dim, dim);
    RealVec grad_map(locations, 0.0);
    for (std::size_t g = 0; g < locations; ++g) {
      const auto v = cache.grid.location(g);
      double* grid_grad = out.grid.data() + g * dim;
      for (std::size_t c = 0; c < dim; ++c) {
        grad_map[g] += gj[c] * v[c];
        grid_grad[c] += cache.maps[j][g] * gj[c];
      }
    }
    grad_logits[j] = nn::softmax_backward(cache.maps[j], grad_map);
  }

  RealVec grad_scores(glimpses);
  for (std::size_t g = 0; g < locations; ++g) {
    for (std::size_t j = 0; j < glimpses; ++j) grad_scores[j] = grad_logits[j][g];
    RealVec grad = nn::linear_backward_into(head.proj2, cache.hidden[g], grad_scores, out.proj2);
    grad = nn::relu_backward(cache.hidden_pre[g], grad);
    grad = nn::linear_backward_into(head.proj1, cache.normalized[g], grad, out.proj1);
    grad = nn::l2_normalize_backward(cache.rooted[g], grad);
    grad = nn::signed_sqrt_backward(cache.pooled[g].output, grad);
    const auto inputs = head.mcb.backward(cache.pooled[g], grad);
    double* grid_grad = out.grid.data() + g * dim;
    for (std::size_t c = 0; c < dim; ++c) grid_grad[c] += inputs[0][c];
    for (std::size_t c = 0; c < out.query.size(); ++c) out.query[c] += inputs[1][c];
  }
  return out;
}

}  // namespace mcb::attention
