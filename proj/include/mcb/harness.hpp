#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcb/attention.hpp"
#include "mcb/nn.hpp"
#include "mcb/tasks.hpp"

namespace mcb::harness {

/// Classification pipeline:
///   [attention over the grid] -> pooling with q -> [signed sqrt + L2]
///   -> [ReLU FC stack] -> bias-free linear classifier.
struct ModelSpec {
  nn::PoolingMethod pooling;
  bool use_attention = false;
  std::size_t glimpses = 1;
  std::size_t attention_hidden = 64;
  std::size_t attention_d = 64;
  bool normalization = true;
  std::size_t n1 = 16;
  std::size_t n2 = 16;
  std::size_t classes = 8;
  std::size_t grid_locations = 1;
  std::uint64_t seed = 1;
};

class Model {
 public:
  struct Cache {
    std::optional<attention::AttentionCache> attention;
    nn::PoolingLayer::Cache pool;
    RealVec features;
    RealVec logits;
  };

  /// Same layout as layers(), plus the input gradients of the last backward.
  struct Gradients {
    std::vector<nn::LinearLayer> layers;
    RealVec x;
    RealVec q;
  };

  struct Step {
    double loss;
    bool correct;
  };

  explicit Model(const ModelSpec& spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::optional<attention::AttentionHead>& attention_head() const noexcept { return attention_; }
  const nn::PoolingLayer& pooling() const noexcept { return pooling_; }
  const nn::LinearLayer& classifier() const noexcept { return classifier_; }

  RealVec forward(const tasks::Sample& sample, Cache* cache = nullptr) const;
  RealVec logits(const tasks::Sample& sample) const { return forward(sample); }
  std::size_t predict(const tasks::Sample& sample) const;

  /// Adds d(loss)/d(theta) for grad_logits into grads.layers, overwrites grads.x / grads.q.
  void backward(const Cache& cache, std::span<const double> grad_logits, Gradients& grads) const;
  /// Forward, cross-entropy, backward.
  Step accumulate(const tasks::Sample& sample, Gradients& grads) const;
  double loss(const tasks::Sample& sample) const;

  Gradients zero_gradients() const;

  /// Learned tensors: attention proj1, proj2, pooling FC stack, classifier.
  std::vector<nn::LinearLayer*> layers();
  std::vector<const nn::LinearLayer*> layers() const;
  std::uint64_t param_count() const;

  /// Per-sample attention maps (glimpses x G). Empty without attention.
  std::vector<RealVec> attention_maps(const tasks::Sample& sample) const;

  bool same_weights(const Model& other) const;

 private:
  ModelSpec spec_;
  std::optional<attention::AttentionHead> attention_;
  nn::PoolingLayer pooling_;
  nn::LinearLayer classifier_;
};

inline std::size_t target_of(const tasks::Sample& s) { return s.label; }
inline std::size_t target_of(const tasks::GroundingItem& item) { return item.correct; }

/// Fraction of items whose argmax (lowest index on ties) matches the target.
/// Works for anything exposing logits(Sample).
template <typename Scorer>
double evaluate(const Scorer& model, const tasks::Dataset& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t hits = 0;
  for (const auto& s : data) hits += nn::argmax(model.logits(s)) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Top-1 ranking accuracy for anything exposing scores(GroundingItem).
template <typename Ranker>
double evaluate(const Ranker& model, const tasks::GroundingDataset& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t hits = 0;
  for (const auto& item : data) hits += nn::argmax(model.scores(item)) == item.correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::size_t patience = 15;
  nn::AdamConfig adam;
};

struct EpochStats {
  std::size_t epoch;
  double loss;
  double train_accuracy;  // running accuracy during the epoch
  double val_accuracy;
};

template <typename ModelT>
struct TrainResult {
  ModelT model;  // best-validation snapshot
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Adam on mean batch cross-entropy with epoch-level early stopping. Epoch 0
/// is the untrained model. Throws TrainingDiverged on a non-finite loss.
TrainResult<Model> train(const ModelSpec& spec, const tasks::Dataset& train_set, const tasks::Dataset& val_set,
                         const TrainConfig& config);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
};

/// Central-difference step used by every gradient check.
inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Every parameter and both inputs against central differences.
GradCheckReport grad_check(const ModelSpec& spec, const tasks::Sample& sample);

// Grounding -----------------------------------------------------------------

/// Proposal embedding (n_v -> n_p), L2 normalization of the embedded proposal
/// and of the phrase, pooling, then a linear scorer to one value per proposal.
/// Softmax runs over the proposals of an item.
struct GroundingSpec {
  nn::PoolingMethod pooling;
  bool normalization = true;
  std::size_t n_v = 8;
  std::size_t n_p = 8;
  std::uint64_t seed = 1;
};

class GroundingModel {
 public:
  struct ProposalCache {
    RealVec embedded;
    RealVec embedded_unit;
    nn::PoolingLayer::Cache pool;
    RealVec features;
  };
  struct Cache {
    RealVec phrase_unit;
    std::vector<ProposalCache> proposals;
    RealVec scores;
  };
  struct Gradients {
    std::vector<nn::LinearLayer> layers;
    RealVec phrase;
    std::vector<RealVec> proposals;
  };
  struct Step {
    double loss;
    bool correct;
  };

  explicit GroundingModel(const GroundingSpec& spec);

  const GroundingSpec& spec() const noexcept { return spec_; }

  RealVec scores(const tasks::GroundingItem& item, Cache* cache = nullptr) const;
  std::size_t predict(const tasks::GroundingItem& item) const;
  void backward(const tasks::GroundingItem& item, const Cache& cache, std::span<const double> grad_scores,
                Gradients& grads) const;
  Step accumulate(const tasks::GroundingItem& item, Gradients& grads) const;
  double loss(const tasks::GroundingItem& item) const;

  Gradients zero_gradients() const;
  std::vector<nn::LinearLayer*> layers();
  std::vector<const nn::LinearLayer*> layers() const;
  std::uint64_t param_count() const;
  bool same_weights(const GroundingModel& other) const;

 private:
  GroundingSpec spec_;
  nn::LinearLayer embed_;
  nn::PoolingLayer pooling_;
  nn::LinearLayer scorer_;
};

TrainResult<GroundingModel> train_grounding(const GroundingSpec& spec, const tasks::GroundingDataset& train_set,
                                            const tasks::GroundingDataset& val_set, const TrainConfig& config);

GradCheckReport grad_check(const GroundingSpec& spec, const tasks::GroundingItem& item);

// Ablation ------------------------------------------------------------------

struct AblationRow {
  std::string method;
  std::size_t d = 0;
  std::vector<std::size_t> hidden;
  std::uint64_t param_count = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;

  /// "d=256", "fc=50", "fc=64x64" or "-".
  std::string config() const;
};

struct AblationSummary {
  std::string method;
  std::string config;
  std::uint64_t param_count = 0;
  std::size_t runs = 0;
  double mean_test = 0.0;
  double std_test = 0.0;  // sample standard deviation
  double mean_train = 0.0;
  double std_train = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // sorted by method, d, hidden, seed
  std::vector<AblationSummary> summary;

  /// Summary for method (and config when non-empty). Throws std::out_of_range.
  const AblationSummary& find(const std::string& method, const std::string& config = "") const;
};

/// Classification ablation. Seed s sets the task seed (planted maps and data)
/// and the model initialization of every method in that cell.
struct AblationConfig {
  tasks::BilinearClassificationTask task;
  std::vector<nn::PoolingMethod> methods;
  std::vector<std::uint64_t> seeds;
  bool budget_match = false;
  std::size_t reference_d = 256;  // MCB d defining the budget when methods lack mcb
  bool normalization = true;
  bool use_attention = false;
  std::size_t glimpses = 1;
  std::size_t train_count = 4000;
  std::size_t test_count = 1000;
  std::size_t val_count = 500;
  TrainConfig train;
};

/// Learned-parameter budget tolerance of budget matching.
inline constexpr double kBudgetTolerance = 0.10;

/// Resizes non-bilinear methods to one ReLU FC layer whose width brings the
/// parameter count within 10% of `target`. Throws ConfigError naming the
/// method when that is impossible.
nn::PoolingMethod budget_matched(const nn::PoolingMethod& method, const ModelSpec& base, std::uint64_t target);

AblationReport ablate(const AblationConfig& config);

/// MCB rows only, one per d.
AblationReport sweep_d(AblationConfig config, std::span<const std::size_t> ds);

struct GroundingAblationConfig {
  tasks::GroundingRankingTask task;
  std::vector<nn::PoolingMethod> methods;
  std::vector<std::uint64_t> seeds;
  bool budget_match = false;
  std::size_t reference_d = 128;
  bool normalization = true;
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::size_t val_count = 300;
  TrainConfig train;
};

AblationReport ablate_grounding(const GroundingAblationConfig& config);

/// Sample standard deviation (n - 1); zero for fewer than two values.
double sample_std(std::span<const double> values);

}  // namespace mcb::harness
