#include <stdexcept>
#include <string>

#include "mcb/harness.hpp"
#include "mcb/oracle.hpp"
#include "mcb/random.hpp"
#include "train_loop.hpp"

namespace mcb::harness {

GroundingModel::GroundingModel(const GroundingSpec& spec)
    : spec_(spec), pooling_(spec.pooling, spec.n_p, spec.n_p, spec.normalization, derive_seed(spec.seed, 10)) {
  Rng rng(derive_seed(spec.seed, 12));
  embed_ = nn::LinearLayer::init(spec.n_v, spec.n_p, true, rng);
  scorer_ = nn::LinearLayer::init(pooling_.output_dim(), 1, false, rng);
}

RealVec GroundingModel::scores(const tasks::GroundingItem& item, Cache* cache) const {
  if (item.phrase.size() != spec_.n_p) throw std::invalid_argument("grounding model: phrase dimension mismatch");
  if (item.proposals.empty()) throw std::invalid_argument("grounding model: item has no proposals");
  RealVec phrase_unit = nn::l2_normalize_forward(item.phrase);
  RealVec out;
  out.reserve(item.proposals.size());
  for (const auto& v : item.proposals) {
    if (v.size() != spec_.n_v) throw std::invalid_argument("grounding model: proposal dimension mismatch");
    ProposalCache pc;
    pc.embedded = nn::linear_forward(embed_, v);
    pc.embedded_unit = nn::l2_normalize_forward(pc.embedded);
    pc.features = pooling_.forward(pc.embedded_unit, phrase_unit, cache ? &pc.pool : nullptr);
    out.push_back(nn::linear_forward(scorer_, pc.features)[0]);
    if (cache) cache->proposals.push_back(std::move(pc));
  }
  if (cache) {
    cache->phrase_unit = std::move(phrase_unit);
    cache->scores = out;
  }
  return out;
}

std::size_t GroundingModel::predict(const tasks::GroundingItem& item) const { return nn::argmax(scores(item)); }

void GroundingModel::backward(const tasks::GroundingItem& item, const Cache& cache, std::span<const double> grad_scores,
                              Gradients& grads) const {
  const std::size_t fc_layers = pooling_.fc().size();
  if (grads.layers.size() != fc_layers + 2) throw std::invalid_argument("grounding backward: gradient layout mismatch");
  if (grad_scores.size() != item.proposals.size() || cache.proposals.size() != item.proposals.size()) {
    throw std::invalid_argument("grounding backward: proposal count mismatch");
  }
  auto fc_grads = std::span<nn::LinearLayer>(grads.layers).subspan(1, fc_layers);
  RealVec grad_phrase_unit(spec_.n_p, 0.0);
  grads.proposals.assign(item.proposals.size(), {});
  for (std::size_t p = 0; p < item.proposals.size(); ++p) {
    const auto& pc = cache.proposals[p];
    const double gs[] = {grad_scores[p]};
    const RealVec grad_features = nn::linear_backward_into(scorer_, pc.features, gs, grads.layers.back());
    auto inputs = pooling_.backward(pc.pool, grad_features, fc_grads);
    for (std::size_t i = 0; i < spec_.n_p; ++i) grad_phrase_unit[i] += inputs.q[i];
    const RealVec grad_embedded = nn::l2_normalize_backward(pc.embedded, inputs.x);
    grads.proposals[p] = nn::linear_backward_into(embed_, item.proposals[p], grad_embedded, grads.layers.front());
  }
  grads.phrase = nn::l2_normalize_backward(item.phrase, grad_phrase_unit);
}

GroundingModel::Step GroundingModel::accumulate(const tasks::GroundingItem& item, Gradients& grads) const {
  Cache cache;
  const RealVec s = scores(item, &cache);
  auto ce = nn::softmax_cross_entropy(s, item.correct);
  backward(item, cache, ce.grad_logits, grads);
  return {ce.loss, nn::argmax(s) == item.correct};
}

double GroundingModel::loss(const tasks::GroundingItem& item) const {
  return nn::softmax_cross_entropy(scores(item), item.correct).loss;
}

GroundingModel::Gradients GroundingModel::zero_gradients() const {
  Gradients g;
  for (const auto* layer : layers()) g.layers.push_back(nn::LinearLayer::zeros_like(*layer));
  return g;
}

std::vector<nn::LinearLayer*> GroundingModel::layers() {
  std::vector<nn::LinearLayer*> out{&embed_};
  for (auto& layer : pooling_.fc()) out.push_back(&layer);
  out.push_back(&scorer_);
  return out;
}

std::vector<const nn::LinearLayer*> GroundingModel::layers() const {
  std::vector<const nn::LinearLayer*> out{&embed_};
  for (const auto& layer : pooling_.fc()) out.push_back(&layer);
  out.push_back(&scorer_);
  return out;
}

std::uint64_t GroundingModel::param_count() const {
  std::uint64_t total = 0;
  for (const auto* layer : layers()) total += layer->param_count();
  return total;
}

bool GroundingModel::same_weights(const GroundingModel& other) const {
  const auto a = layers();
  const auto b = other.layers();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return true;
}

TrainResult<GroundingModel> train_grounding(const GroundingSpec& spec, const tasks::GroundingDataset& train_set,
                                            const tasks::GroundingDataset& val_set, const TrainConfig& config) {
  for (const auto* data : {&train_set, &val_set}) {
    for (const auto& item : *data) {
      if (item.phrase.size() != spec.n_p || item.correct >= item.proposals.size()) {
        throw std::invalid_argument("train_grounding: dataset does not match the spec");
      }
    }
  }
  return detail::run_training(GroundingModel(spec), spec.seed, train_set, val_set, config);
}

GradCheckReport grad_check(const GroundingSpec& spec, const tasks::GroundingItem& item) {
  GroundingModel model(spec);
  auto grads = model.zero_gradients();
  model.accumulate(item, grads);

  GradCheckReport report;
  auto record = [&report](double analytic, double numeric, std::string name) {
    const double err = oracle::relative_error(analytic, numeric);
    ++report.entries_checked;
    if (report.entries_checked == 1 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_entry = std::move(name);
    }
  };

  auto layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l]->weight.data.size(); ++i) {
      const double numeric = oracle::central_difference([&] { return model.loss(item); },
                                                        layers[l]->weight.data[i], kFiniteDifferenceStep);
      record(grads.layers[l].weight.data[i], numeric, "layer" + std::to_string(l) + ".weight[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < layers[l]->bias.size(); ++i) {
      const double numeric =
          oracle::central_difference([&] { return model.loss(item); }, layers[l]->bias[i], kFiniteDifferenceStep);
      record(grads.layers[l].bias[i], numeric, "layer" + std::to_string(l) + ".bias[" + std::to_string(i) + "]");
    }
  }
  tasks::GroundingItem probe = item;
  for (std::size_t i = 0; i < probe.phrase.size(); ++i) {
    const double numeric =
        oracle::central_difference([&] { return model.loss(probe); }, probe.phrase[i], kFiniteDifferenceStep);
    record(grads.phrase[i], numeric, "phrase[" + std::to_string(i) + "]");
  }
  for (std::size_t p = 0; p < probe.proposals.size(); ++p) {
    for (std::size_t i = 0; i < probe.proposals[p].size(); ++i) {
      const double numeric = oracle::central_difference([&] { return model.loss(probe); }, probe.proposals[p][i],
                                                        kFiniteDifferenceStep);
      record(grads.proposals[p][i], numeric, "proposal" + std::to_string(p) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

}  // namespace mcb::harness
