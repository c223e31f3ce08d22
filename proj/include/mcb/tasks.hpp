#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcb/fft.hpp"
#include "mcb/nn.hpp"

namespace mcb::tasks {

/// One labeled pair. With grid_locations > 1, `x` holds that many vectors of
/// length n1 back to back.
struct Sample {
  RealVec x;
  RealVec q;
  std::size_t label = 0;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Labels come from a planted family of bilinear forms:
/// label = argmax_c (x^T W_c q + N(0, noise_sigma^2)).
///
/// When grid_locations > 1 each sample carries a grid of unit vectors; the
/// location that decides the label is the argmax of a planted relevance form
/// x_g^T R q, so finding it requires attending jointly to grid and query.
struct BilinearClassificationTask {
  std::size_t n1 = 16;
  std::size_t n2 = 16;
  std::size_t classes = 8;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;
  std::size_t grid_locations = 1;
};

/// The ground-truth scorer of a classification task.
class PlantedClassifier {
 public:
  explicit PlantedClassifier(const BilinearClassificationTask& task);

  const BilinearClassificationTask& task() const noexcept { return task_; }
  /// Seed actually used for the planted matrices (task seed + retries).
  std::uint64_t plant_seed() const noexcept { return plant_seed_; }
  const std::vector<nn::Matrix>& class_maps() const noexcept { return class_maps_; }

  std::size_t salient_location(const Sample& s) const;
  /// Noise-free scores x^T W_c q on the salient location.
  RealVec logits(const Sample& s) const;

 private:
  BilinearClassificationTask task_;
  std::uint64_t plant_seed_ = 0;
  std::vector<nn::Matrix> class_maps_;
  nn::Matrix relevance_;
};

/// Samples [first_index, first_index + count). Sample i depends only on the
/// task and i, so disjoint index ranges give disjoint splits.
Dataset gen_classification(const BilinearClassificationTask& task, std::size_t count, std::size_t first_index = 0);
Dataset gen_classification(const PlantedClassifier& planted, std::size_t count, std::size_t first_index = 0);

struct GroundingItem {
  RealVec phrase;
  std::vector<RealVec> proposals;
  std::size_t correct = 0;

  bool operator==(const GroundingItem&) const = default;
};

using GroundingDataset = std::vector<GroundingItem>;

/// correct = argmax_p (phrase^T S v_p + N(0, noise_sigma^2)).
struct GroundingRankingTask {
  std::size_t n_v = 8;
  std::size_t n_p = 8;
  std::size_t proposals = 8;
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;
};

class PlantedRanker {
 public:
  explicit PlantedRanker(const GroundingRankingTask& task);

  const GroundingRankingTask& task() const noexcept { return task_; }
  std::uint64_t plant_seed() const noexcept { return plant_seed_; }
  const nn::Matrix& scorer() const noexcept { return scorer_; }

  /// Noise-free score of every proposal.
  RealVec scores(const GroundingItem& item) const;

 private:
  GroundingRankingTask task_;
  std::uint64_t plant_seed_ = 0;
  nn::Matrix scorer_;  // n_p x n_v
};

GroundingDataset gen_grounding(const GroundingRankingTask& task, std::size_t count, std::size_t first_index = 0);
GroundingDataset gen_grounding(const PlantedRanker& planted, std::size_t count, std::size_t first_index = 0);

/// FNV-1a over the bit patterns of every value and label.
std::uint64_t content_hash(const Dataset& data);
std::uint64_t content_hash(const GroundingDataset& data);

/// Largest class frequency of the dataset's labels.
double max_label_frequency(const Dataset& data, std::size_t classes);

}  // namespace mcb::tasks
