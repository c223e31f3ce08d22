#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mcb/error.hpp"
#include "mcb/harness.hpp"
#include "mcb/random.hpp"

namespace mcb::harness::detail {

template <typename ModelT, typename Item>
double accuracy(const ModelT& model, const std::vector<Item>& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& item : data) hits += model.predict(item) == target_of(item) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Shared loop for the classification and grounding models.
template <typename ModelT, typename Item>
TrainResult<ModelT> run_training(ModelT model, std::uint64_t seed, const std::vector<Item>& train_set,
                                 const std::vector<Item>& val_set, const TrainConfig& config) {
  if (config.batch == 0) throw std::invalid_argument("train: batch size must be positive");
  if (config.epochs > 0 && train_set.empty()) throw std::invalid_argument("train: empty training set");

  std::vector<nn::AdamState> adam;
  for (const auto* layer : model.layers()) {
    adam.push_back(nn::AdamState::zeros(layer->weight.data.size(), config.adam));
    adam.push_back(nn::AdamState::zeros(layer->bias.size(), config.adam));
  }

  TrainResult<ModelT> result{model, {}, 0, accuracy(model, val_set)};
  result.history.push_back({0, 0.0, accuracy(model, train_set), result.best_val_accuracy});

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(seed, 20));
  std::size_t stale = 0;
  // Reused across batches; reallocating per step makes malloc return and
  // re-request pages from the kernel.
  auto grads = model.zero_gradients();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      for (auto& layer : grads.layers) {
        std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      }
      for (std::size_t i = start; i < end; ++i) {
        const auto step = model.accumulate(train_set[order[i]], grads);
        if (!std::isfinite(step.loss)) throw TrainingDiverged(epoch, "non-finite loss");
        loss_sum += step.loss;
        hits += step.correct ? 1 : 0;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      auto layers = model.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (auto& g : grads.layers[l].weight.data) g *= scale;
        for (auto& g : grads.layers[l].bias) g *= scale;
        nn::adam_step(adam[2 * l], layers[l]->weight.data, grads.layers[l].weight.data);
        nn::adam_step(adam[2 * l + 1], layers[l]->bias, grads.layers[l].bias);
      }
    }
    const double n = static_cast<double>(order.size());
    const double val_acc = accuracy(model, val_set);
    result.history.push_back({epoch, loss_sum / n, static_cast<double>(hits) / n, val_acc});

    if (val_set.empty()) {
      continue;
    }
    if (val_acc > result.best_val_accuracy) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.model = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (val_set.empty()) {
    result.model = model;
    result.best_epoch = result.history.back().epoch;
  }
  return result;
}

}  // namespace mcb::harness::detail
