#include "mcb/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "mcb/error.hpp"
#include "mcb/oracle.hpp"
#include "mcb/parallel.hpp"
#include "mcb/random.hpp"
#include "train_loop.hpp"

namespace mcb::harness {
namespace {

std::size_t pooled_first_dim(const ModelSpec& spec) {
  return spec.use_attention ? spec.glimpses * spec.n1 : spec.n1;
}

void validate(const ModelSpec& spec) {
  if (spec.n1 == 0 || spec.n2 == 0) throw std::invalid_argument("model spec: input dimensions must be positive");
  if (spec.classes < 2) throw std::invalid_argument("model spec: need at least two classes");
  if (spec.grid_locations == 0) throw std::invalid_argument("model spec: grid_locations must be positive");
  if (spec.grid_locations > 1 && !spec.use_attention) {
    throw std::invalid_argument("model spec: grid-shaped inputs require attention");
  }
  if (spec.use_attention && spec.glimpses == 0) throw std::invalid_argument("model spec: glimpses must be positive");
}

}  // namespace

Model::Model(const ModelSpec& spec)
    : spec_(spec),
      pooling_((validate(spec), spec.pooling), pooled_first_dim(spec), spec.n2, spec.normalization,
               derive_seed(spec.seed, 10)) {
  if (spec.use_attention) {
    attention_.emplace(attention::AttentionHead::create(spec.n1, spec.n2, spec.attention_d, spec.attention_hidden,
                                                        spec.glimpses, derive_seed(spec.seed, 11)));
  }
  Rng rng(derive_seed(spec.seed, 12));
  classifier_ = nn::LinearLayer::init(pooling_.output_dim(), spec.classes, false, rng);
}

RealVec Model::forward(const tasks::Sample& sample, Cache* cache) const {
  if (sample.x.size() != spec_.grid_locations * spec_.n1 || sample.q.size() != spec_.n2) {
    throw std::invalid_argument("model: sample dimensions do not match the spec");
  }
  RealVec first;
  if (attention_) {
    attention::SpatialGrid grid(1, spec_.grid_locations, spec_.n1, sample.x);
    auto att = attention::attention_forward(*attention_, grid, sample.q);
    first = std::move(att.attended);
    if (cache) cache->attention = std::move(att.cache);
  } else {
    first = sample.x;
  }
  RealVec features = pooling_.forward(first, sample.q, cache ? &cache->pool : nullptr);
  RealVec logits = nn::linear_forward(classifier_, features);
  if (cache) {
    cache->features = std::move(features);
    cache->logits = logits;
  }
  return logits;
}

std::size_t Model::predict(const tasks::Sample& sample) const { return nn::argmax(forward(sample)); }

void Model::backward(const Cache& cache, std::span<const double> grad_logits, Gradients& grads) const {
  const std::size_t attention_layers = attention_ ? 2 : 0;
  const std::size_t fc_layers = pooling_.fc().size();
  if (grads.layers.size() != attention_layers + fc_layers + 1) {
    throw std::invalid_argument("model backward: gradient layout mismatch");
  }
  const RealVec grad_features = nn::linear_backward_into(classifier_, cache.features, grad_logits, grads.layers.back());
  auto fc_grads = std::span<nn::LinearLayer>(grads.layers).subspan(attention_layers, fc_layers);
  auto inputs = pooling_.backward(cache.pool, grad_features, fc_grads);
  grads.q = std::move(inputs.q);
  if (attention_) {
    auto att = attention::attention_backward(*attention_, *cache.attention, inputs.x);
    for (std::size_t i = 0; i < att.proj1.weight.data.size(); ++i) grads.layers[0].weight.data[i] += att.proj1.weight.data[i];
    for (std::size_t i = 0; i < att.proj1.bias.size(); ++i) grads.layers[0].bias[i] += att.proj1.bias[i];
    for (std::size_t i = 0; i < att.proj2.weight.data.size(); ++i) grads.layers[1].weight.data[i] += att.proj2.weight.data[i];
    for (std::size_t i = 0; i < att.proj2.bias.size(); ++i) grads.layers[1].bias[i] += att.proj2.bias[i];
    for (std::size_t i = 0; i < grads.q.size(); ++i) grads.q[i] += att.query[i];
    grads.x = std::move(att.grid);
  } else {
    grads.x = std::move(inputs.x);
  }
}

Model::Step Model::accumulate(const tasks::Sample& sample, Gradients& grads) const {
  Cache cache;
  const RealVec logits = forward(sample, &cache);
  auto ce = nn::softmax_cross_entropy(logits, sample.label);
  backward(cache, ce.grad_logits, grads);
  return {ce.loss, nn::argmax(logits) == sample.label};
}

double Model::loss(const tasks::Sample& sample) const {
  return nn::softmax_cross_entropy(forward(sample), sample.label).loss;
}

Model::Gradients Model::zero_gradients() const {
  Gradients g;
  for (const auto* layer : layers()) g.layers.push_back(nn::LinearLayer::zeros_like(*layer));
  return g;
}

std::vector<nn::LinearLayer*> Model::layers() {
  std::vector<nn::LinearLayer*> out;
  if (attention_) {
    out.push_back(&attention_->proj1);
    out.push_back(&attention_->proj2);
  }
  for (auto& layer : pooling_.fc()) out.push_back(&layer);
  out.push_back(&classifier_);
  return out;
}

std::vector<const nn::LinearLayer*> Model::layers() const {
  std::vector<const nn::LinearLayer*> out;
  if (attention_) {
    out.push_back(&attention_->proj1);
    out.push_back(&attention_->proj2);
  }
  for (const auto& layer : pooling_.fc()) out.push_back(&layer);
  out.push_back(&classifier_);
  return out;
}

std::uint64_t Model::param_count() const {
  std::uint64_t total = 0;
  for (const auto* layer : layers()) total += layer->param_count();
  return total;
}

std::vector<RealVec> Model::attention_maps(const tasks::Sample& sample) const {
  if (!attention_) return {};
  attention::SpatialGrid grid(1, spec_.grid_locations, spec_.n1, sample.x);
  return attention::attention_forward(*attention_, grid, sample.q).maps;
}

bool Model::same_weights(const Model& other) const {
  const auto a = layers();
  const auto b = other.layers();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return true;
}

TrainResult<Model> train(const ModelSpec& spec, const tasks::Dataset& train_set, const tasks::Dataset& val_set,
                         const TrainConfig& config) {
  const std::size_t x_dim = spec.grid_locations * spec.n1;
  for (const auto* data : {&train_set, &val_set}) {
    for (const auto& s : *data) {
      if (s.x.size() != x_dim || s.q.size() != spec.n2 || s.label >= spec.classes) {
        throw std::invalid_argument("train: dataset does not match the model spec");
      }
    }
  }
  return detail::run_training(Model(spec), spec.seed, train_set, val_set, config);
}

GradCheckReport grad_check(const ModelSpec& spec, const tasks::Sample& sample) {
  Model model(spec);
  auto grads = model.zero_gradients();
  model.accumulate(sample, grads);

  GradCheckReport report;
  auto record = [&report](double analytic, double numeric, const std::string& name) {
    const double err = oracle::relative_error(analytic, numeric);
    ++report.entries_checked;
    if (report.entries_checked == 1 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_entry = name;
    }
  };

  auto layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto check_tensor = [&](std::vector<double>& values, const std::vector<double>& analytic, const char* part) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double numeric = oracle::central_difference(
            [&] { return model.loss(sample); }, values[i], kFiniteDifferenceStep);
        record(analytic[i], numeric, "layer" + std::to_string(l) + "." + part + "[" + std::to_string(i) + "]");
      }
    };
    check_tensor(layers[l]->weight.data, grads.layers[l].weight.data, "weight");
    check_tensor(layers[l]->bias, grads.layers[l].bias, "bias");
  }

  tasks::Sample probe = sample;
  for (std::size_t i = 0; i < probe.x.size(); ++i) {
    const double numeric =
        oracle::central_difference([&] { return model.loss(probe); }, probe.x[i], kFiniteDifferenceStep);
    record(grads.x[i], numeric, "x[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < probe.q.size(); ++i) {
    const double numeric =
        oracle::central_difference([&] { return model.loss(probe); }, probe.q[i], kFiniteDifferenceStep);
    record(grads.q[i], numeric, "q[" + std::to_string(i) + "]");
  }
  return report;
}

// Ablation ------------------------------------------------------------------

std::string AblationRow::config() const {
  if (d > 0) return "d=" + std::to_string(d);
  if (hidden.empty()) return "-";
  std::string out = "fc=";
  for (std::size_t i = 0; i < hidden.size(); ++i) out += (i ? "x" : "") + std::to_string(hidden[i]);
  return out;
}

const AblationSummary& AblationReport::find(const std::string& method, const std::string& config) const {
  for (const auto& s : summary) {
    if (s.method == method && (config.empty() || s.config == config)) return s;
  }
  throw std::out_of_range("ablation report has no summary for " + method + (config.empty() ? "" : " " + config));
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

nn::PoolingMethod budget_matched(const nn::PoolingMethod& method, const ModelSpec& base, std::uint64_t target) {
  if (method.is_bilinear()) return method;
  ModelSpec probe = base;
  probe.pooling = method;
  probe.pooling.hidden.clear();
  if (probe.pooling.kind == nn::PoolingKind::concat_fc) probe.pooling.kind = nn::PoolingKind::concat;
  const Model plain(probe);
  const std::uint64_t fixed = plain.param_count() - plain.classifier().param_count();
  const double combined = static_cast<double>(plain.pooling().combined_dim());
  const double classes = static_cast<double>(base.classes);
  // One hidden layer of width h: combined*h + h + h*classes learned values.
  const double budget = static_cast<double>(target) - static_cast<double>(fixed);
  const auto width = static_cast<std::size_t>(std::llround(budget / (combined + 1.0 + classes)));
  const auto count = [&](std::size_t h) {
    return static_cast<double>(fixed) + static_cast<double>(h) * (combined + 1.0 + classes);
  };
  if (budget <= 0.0 || width == 0 ||
      std::abs(count(width) - static_cast<double>(target)) > kBudgetTolerance * static_cast<double>(target)) {
    throw ConfigError("budget match infeasible for method " + method.name() + ": target " +
                      std::to_string(target) + " learned parameters");
  }
  nn::PoolingMethod out = method;
  out.hidden = {width};
  return out;
}

namespace {

struct Cell {
  nn::PoolingMethod method;
  std::uint64_t seed;
};

AblationReport assemble(std::vector<AblationRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
    return std::tie(a.method, a.d, a.hidden, a.seed) < std::tie(b.method, b.d, b.hidden, b.seed);
  });
  AblationReport report;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    std::vector<double> test, train;
    while (j < rows.size() && rows[j].method == rows[i].method && rows[j].d == rows[i].d &&
           rows[j].hidden == rows[i].hidden) {
      test.push_back(rows[j].test_accuracy);
      train.push_back(rows[j].train_accuracy);
      ++j;
    }
    AblationSummary s;
    s.method = rows[i].method;
    s.config = rows[i].config();
    s.param_count = rows[i].param_count;
    s.runs = test.size();
    s.mean_test = std::accumulate(test.begin(), test.end(), 0.0) / static_cast<double>(test.size());
    s.std_test = sample_std(test);
    s.mean_train = std::accumulate(train.begin(), train.end(), 0.0) / static_cast<double>(train.size());
    s.std_train = sample_std(train);
    report.summary.push_back(std::move(s));
    i = j;
  }
  report.rows = std::move(rows);
  return report;
}

template <typename Fn>
std::vector<AblationRow> run_cells(const std::vector<Cell>& cells, Fn&& run_one) {
  std::vector<AblationRow> rows(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    rows[i] = run_one(cells[i]);
    rows[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows[i].method = cells[i].method.name();
    rows[i].d = cells[i].method.kind == nn::PoolingKind::mcb ? cells[i].method.d : 0;
    rows[i].hidden = cells[i].method.hidden;
    rows[i].seed = cells[i].seed;
  });
  return rows;
}

void require_nonempty(std::size_t methods, std::size_t seeds) {
  if (methods == 0) throw std::invalid_argument("ablate: at least one method is required");
  if (seeds == 0) throw std::invalid_argument("ablate: at least one seed is required");
}

}  // namespace

AblationReport ablate(const AblationConfig& config) {
  require_nonempty(config.methods.size(), config.seeds.size());
  ModelSpec base;
  base.n1 = config.task.n1;
  base.n2 = config.task.n2;
  base.classes = config.task.classes;
  base.grid_locations = config.task.grid_locations;
  base.normalization = config.normalization;
  base.use_attention = config.use_attention;
  base.glimpses = config.glimpses;

  std::vector<nn::PoolingMethod> methods = config.methods;
  for (auto& m : methods) {
    if (m.kind == nn::PoolingKind::mcb && m.d == 0) m.d = config.reference_d;
  }
  if (config.budget_match) {
    ModelSpec reference = base;
    reference.pooling = nn::PoolingMethod{nn::PoolingKind::mcb, config.reference_d, {}};
    for (const auto& m : methods) {
      if (m.kind == nn::PoolingKind::mcb) {
        reference.pooling = m;
        break;
      }
    }
    const std::uint64_t target = Model(reference).param_count();
    for (auto& m : methods) m = budget_matched(m, base, target);
  }

  std::vector<Cell> cells;
  for (const auto& m : methods) {
    for (auto seed : config.seeds) cells.push_back({m, seed});
  }
  auto rows = run_cells(cells, [&](const Cell& cell) {
    tasks::BilinearClassificationTask task = config.task;
    task.seed = cell.seed;
    const tasks::PlantedClassifier planted(task);
    const auto train_set = tasks::gen_classification(planted, config.train_count, 0);
    const auto test_set = tasks::gen_classification(planted, config.test_count, config.train_count);
    tasks::Dataset val_set;
    if (config.val_count > 0) {
      val_set = tasks::gen_classification(planted, config.val_count, config.train_count + config.test_count);
    }
    ModelSpec spec = base;
    spec.pooling = cell.method;
    spec.seed = cell.seed;
    auto result = train(spec, train_set, val_set, config.train);
    AblationRow row;
    row.param_count = result.model.param_count();
    row.train_accuracy = evaluate(result.model, train_set);
    row.test_accuracy = evaluate(result.model, test_set);
    row.best_epoch = result.best_epoch;
    return row;
  });
  return assemble(std::move(rows));
}

AblationReport sweep_d(AblationConfig config, std::span<const std::size_t> ds) {
  config.methods.clear();
  for (auto d : ds) config.methods.push_back(nn::PoolingMethod{nn::PoolingKind::mcb, d, {}});
  config.budget_match = false;
  return ablate(config);
}

AblationReport ablate_grounding(const GroundingAblationConfig& config) {
  require_nonempty(config.methods.size(), config.seeds.size());
  GroundingSpec base;
  base.n_v = config.task.n_v;
  base.n_p = config.task.n_p;
  base.normalization = config.normalization;

  std::vector<nn::PoolingMethod> methods = config.methods;
  for (auto& m : methods) {
    if (m.kind == nn::PoolingKind::mcb && m.d == 0) m.d = config.reference_d;
  }
  if (config.budget_match) {
    GroundingSpec reference = base;
    reference.pooling = nn::PoolingMethod{nn::PoolingKind::mcb, config.reference_d, {}};
    for (const auto& m : methods) {
      if (m.kind == nn::PoolingKind::mcb) reference.pooling = m;
    }
    const std::uint64_t target = GroundingModel(reference).param_count();
    for (auto& m : methods) {
      if (m.is_bilinear()) continue;
      GroundingSpec plain = base;
      plain.pooling = m;
      plain.pooling.hidden.clear();
      if (plain.pooling.kind == nn::PoolingKind::concat_fc) plain.pooling.kind = nn::PoolingKind::concat;
      const GroundingModel probe(plain);
      const std::uint64_t fixed = static_cast<std::uint64_t>(base.n_v) * base.n_p + base.n_p;
      // The scorer has one output, so its weight count is the combined dim.
      const double combined = static_cast<double>(probe.param_count() - fixed);
      const double budget = static_cast<double>(target) - static_cast<double>(fixed);
      const auto width = static_cast<std::size_t>(std::llround(budget / (combined + 2.0)));
      const double count = static_cast<double>(fixed) + static_cast<double>(width) * (combined + 2.0);
      if (budget <= 0.0 || width == 0 ||
          std::abs(count - static_cast<double>(target)) > kBudgetTolerance * static_cast<double>(target)) {
        throw ConfigError("budget match infeasible for method " + m.name() + ": target " + std::to_string(target) +
                          " learned parameters");
      }
      m.hidden = {width};
    }
  }

  std::vector<Cell> cells;
  for (const auto& m : methods) {
    for (auto seed : config.seeds) cells.push_back({m, seed});
  }
  auto rows = run_cells(cells, [&](const Cell& cell) {
    tasks::GroundingRankingTask task = config.task;
    task.seed = cell.seed;
    const tasks::PlantedRanker planted(task);
    const auto train_set = tasks::gen_grounding(planted, config.train_count, 0);
    const auto test_set = tasks::gen_grounding(planted, config.test_count, config.train_count);
    tasks::GroundingDataset val_set;
    if (config.val_count > 0) {
      val_set = tasks::gen_grounding(planted, config.val_count, config.train_count + config.test_count);
    }
    GroundingSpec spec = base;
    spec.pooling = cell.method;
    spec.seed = cell.seed;
    auto result = train_grounding(spec, train_set, val_set, config.train);
    AblationRow row;
    row.param_count = result.model.param_count();
    row.train_accuracy = evaluate(result.model, train_set);
    row.test_accuracy = evaluate(result.model, test_set);
    row.best_epoch = result.best_epoch;
    return row;
  });
  return assemble(std::move(rows));
}

}  // namespace mcb::harness
