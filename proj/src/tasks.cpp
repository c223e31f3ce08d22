#include "mcb/tasks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mcb/error.hpp"
#include "mcb/random.hpp"

namespace mcb::tasks {
namespace {

constexpr std::uint64_t kPlantStream = 0x504c414e54ULL;
constexpr std::uint64_t kSampleStream = 0x53414d504c45ULL;
constexpr std::uint64_t kProbeStream = 0x50524f4245ULL;
constexpr std::size_t kPlantRetries = 16;
constexpr std::size_t kProbeCount = 4000;
constexpr double kMaxLabelFrequency = 0.9;

nn::Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  nn::Matrix m(rows, cols);
  double frob = 0.0;
  for (auto& w : m.data) {
    w = rng.gaussian();
    frob += w * w;
  }
  const double inv = 1.0 / std::sqrt(frob);
  for (auto& w : m.data) w *= inv;
  return m;
}

double bilinear(const nn::Matrix& m, std::span<const double> left, std::span<const double> right) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) row += m(i, j) * right[j];
    total += left[i] * row;
  }
  return total;
}

Rng sample_rng(std::uint64_t seed, std::size_t index) {
  return Rng(derive_seed(derive_seed(seed, kSampleStream), index));
}

void hash_bytes(std::uint64_t& h, std::uint64_t value) {
  for (int b = 0; b < 8; ++b) {
    h ^= (value >> (8 * b)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

void hash_values(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) hash_bytes(h, std::bit_cast<std::uint64_t>(v));
}

Sample draw_sample(const PlantedClassifier& planted, Rng& rng) {
  const auto& task = planted.task();
  Sample s;
  for (std::size_t g = 0; g < task.grid_locations; ++g) {
    const RealVec v = rng.unit_vector(task.n1);
    s.x.insert(s.x.end(), v.begin(), v.end());
  }
  s.q = rng.unit_vector(task.n2);
  RealVec scores = planted.logits(s);
  for (auto& z : scores) z += task.noise_sigma * rng.gaussian();
  s.label = nn::argmax(scores);
  return s;
}

GroundingItem draw_item(const PlantedRanker& planted, Rng& rng) {
  const auto& task = planted.task();
  GroundingItem item;
  item.phrase = rng.unit_vector(task.n_p);
  for (std::size_t p = 0; p < task.proposals; ++p) item.proposals.push_back(rng.unit_vector(task.n_v));
  RealVec scores = planted.scores(item);
  for (auto& z : scores) z += task.noise_sigma * rng.gaussian();
  item.correct = nn::argmax(scores);
  return item;
}

}  // namespace

PlantedClassifier::PlantedClassifier(const BilinearClassificationTask& task) : task_(task) {
  if (task.n1 == 0 || task.n2 == 0) throw std::invalid_argument("classification task: dimensions must be positive");
  if (task.classes < 2) throw std::invalid_argument("classification task: need at least two classes");
  if (task.grid_locations == 0) throw std::invalid_argument("classification task: grid_locations must be positive");
  if (!(task.noise_sigma >= 0.0)) throw std::invalid_argument("classification task: noise_sigma must be >= 0");

  for (std::size_t attempt = 0; attempt < kPlantRetries; ++attempt) {
    plant_seed_ = task.seed + attempt;
    Rng rng(derive_seed(plant_seed_, kPlantStream));
    class_maps_.clear();
    for (std::size_t c = 0; c < task.classes; ++c) class_maps_.push_back(gaussian_matrix(rng, task.n1, task.n2));
    relevance_ = gaussian_matrix(rng, task.n1, task.n2);

    Dataset probe;
    probe.reserve(kProbeCount);
    Rng probe_rng(derive_seed(plant_seed_, kProbeStream));
    for (std::size_t i = 0; i < kProbeCount; ++i) probe.push_back(draw_sample(*this, probe_rng));
    if (max_label_frequency(probe, task.classes) <= kMaxLabelFrequency) return;
  }
  throw ConfigError("classification task: labels stayed degenerate after " + std::to_string(kPlantRetries) +
                    " planting attempts");
}

std::size_t PlantedClassifier::salient_location(const Sample& s) const {
  if (task_.grid_locations == 1) return 0;
  RealVec relevance(task_.grid_locations);
  for (std::size_t g = 0; g < task_.grid_locations; ++g) {
    relevance[g] = bilinear(relevance_, std::span<const double>(s.x).subspan(g * task_.n1, task_.n1), s.q);
  }
  return nn::argmax(relevance);
}

RealVec PlantedClassifier::logits(const Sample& s) const {
  if (s.x.size() != task_.grid_locations * task_.n1 || s.q.size() != task_.n2) {
    throw std::invalid_argument("planted classifier: sample dimensions do not match the task");
  }
  const auto x = std::span<const double>(s.x).subspan(salient_location(s) * task_.n1, task_.n1);
  RealVec out(task_.classes);
  for (std::size_t c = 0; c < task_.classes; ++c) out[c] = bilinear(class_maps_[c], x, s.q);
  return out;
}

Dataset gen_classification(const PlantedClassifier& planted, std::size_t count, std::size_t first_index) {
  if (count == 0) throw std::invalid_argument("gen_classification: count must be positive");
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = sample_rng(planted.task().seed, first_index + i);
    out.push_back(draw_sample(planted, rng));
  }
  return out;
}

Dataset gen_classification(const BilinearClassificationTask& task, std::size_t count, std::size_t first_index) {
  return gen_classification(PlantedClassifier(task), count, first_index);
}

PlantedRanker::PlantedRanker(const GroundingRankingTask& task) : task_(task) {
  if (task.n_v == 0 || task.n_p == 0) throw std::invalid_argument("grounding task: dimensions must be positive");
  if (task.proposals < 2) throw std::invalid_argument("grounding task: need at least two proposals per item");
  if (!(task.noise_sigma >= 0.0)) throw std::invalid_argument("grounding task: noise_sigma must be >= 0");

  for (std::size_t attempt = 0; attempt < kPlantRetries; ++attempt) {
    plant_seed_ = task.seed + attempt;
    Rng rng(derive_seed(plant_seed_, kPlantStream));
    scorer_ = gaussian_matrix(rng, task.n_p, task.n_v);

    std::vector<std::size_t> counts(task.proposals, 0);
    Rng probe_rng(derive_seed(plant_seed_, kProbeStream));
    for (std::size_t i = 0; i < kProbeCount; ++i) ++counts[draw_item(*this, probe_rng).correct];
    const auto top = *std::max_element(counts.begin(), counts.end());
    if (static_cast<double>(top) / kProbeCount <= kMaxLabelFrequency) return;
  }
  throw ConfigError("grounding task: correct indices stayed degenerate after " + std::to_string(kPlantRetries) +
                    " planting attempts");
}

RealVec PlantedRanker::scores(const GroundingItem& item) const {
  if (item.phrase.size() != task_.n_p) throw std::invalid_argument("planted ranker: phrase dimension mismatch");
  RealVec out;
  out.reserve(item.proposals.size());
  for (const auto& v : item.proposals) {
    if (v.size() != task_.n_v) throw std::invalid_argument("planted ranker: proposal dimension mismatch");
    out.push_back(bilinear(scorer_, item.phrase, v));
  }
  return out;
}

GroundingDataset gen_grounding(const PlantedRanker& planted, std::size_t count, std::size_t first_index) {
  if (count == 0) throw std::invalid_argument("gen_grounding: count must be positive");
  GroundingDataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = sample_rng(planted.task().seed, first_index + i);
    out.push_back(draw_item(planted, rng));
  }
  return out;
}

GroundingDataset gen_grounding(const GroundingRankingTask& task, std::size_t count, std::size_t first_index) {
  return gen_grounding(PlantedRanker(task), count, first_index);
}

std::uint64_t content_hash(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : data) {
    hash_values(h, s.x);
    hash_values(h, s.q);
    hash_bytes(h, s.label);
  }
  return h;
}

std::uint64_t content_hash(const GroundingDataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& item : data) {
    hash_values(h, item.phrase);
    for (const auto& p : item.proposals) hash_values(h, p);
    hash_bytes(h, item.correct);
  }
  return h;
}

double max_label_frequency(const Dataset& data, std::size_t classes) {
  if (data.empty()) return 0.0;
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : data) {
    if (s.label >= classes) throw std::invalid_argument("max_label_frequency: label out of range");
    ++counts[s.label];
  }
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(data.size());
}

}  // namespace mcb::tasks
