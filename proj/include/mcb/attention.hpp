#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcb/compact_bilinear.hpp"
#include "mcb/nn.hpp"

namespace mcb::attention {

/// G = height * width feature vectors of length dim, stored row-major.
struct SpatialGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  RealVec data;

  SpatialGrid() = default;
  SpatialGrid(std::size_t h, std::size_t w, std::size_t d, RealVec values);

  std::size_t locations() const noexcept { return height * width; }
  std::span<const double> location(std::size_t g) const { return {data.data() + g * dim, dim}; }
};

/// Per-location MCB with the query, signed-sqrt + L2, then two shared
/// projections (1x1 convolutions over the grid) producing one logit per
/// glimpse. The sketches are shared by every location.
struct AttentionHead {
  CompactBilinear mcb;
  nn::LinearLayer proj1;  // d -> hidden, ReLU
  nn::LinearLayer proj2;  // hidden -> glimpses

  static AttentionHead create(std::size_t grid_dim, std::size_t query_dim, std::size_t d, std::size_t hidden,
                              std::size_t glimpses, std::uint64_t seed);

  std::size_t glimpses() const noexcept { return proj2.out_dim(); }
  std::size_t grid_dim() const { return mcb.input_dim(0); }
  std::size_t query_dim() const { return mcb.input_dim(1); }
  std::size_t param_count() const noexcept { return proj1.param_count() + proj2.param_count(); }
};

struct AttentionCache {
  SpatialGrid grid;
  RealVec query;
  std::vector<McbForwardRecord> pooled;
  std::vector<RealVec> rooted;
  std::vector<RealVec> normalized;
  std::vector<RealVec> hidden_pre;
  std::vector<RealVec> hidden;
  std::vector<RealVec> maps;  // glimpses x G
};

struct AttentionOutput {
  RealVec attended;           // glimpses * dim, glimpse-major
  std::vector<RealVec> maps;  // glimpses x G, each sums to one
  AttentionCache cache;
};

AttentionOutput attention_forward(const AttentionHead& head, const SpatialGrid& grid,
                                  std::span<const double> query);

struct AttentionGradients {
  nn::LinearLayer proj1;
  nn::LinearLayer proj2;
  RealVec grid;  // same layout as SpatialGrid::data
  RealVec query;
};

AttentionGradients attention_backward(const AttentionHead& head, const AttentionCache& cache,
                                      std::span<const double> grad_attended);

}  // namespace mcb::attention
