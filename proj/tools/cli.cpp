#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcb/compact_bilinear.hpp"
#include "mcb/error.hpp"
#include "mcb/harness.hpp"
#include "mcb/io.hpp"
#include "mcb/random.hpp"
#include "mcb/sketch.hpp"
#include "mcb/tasks.hpp"
#include "mcb/verify.hpp"

namespace mcb::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// Explicit outer-product pooling is refused above this many classifier weights.
constexpr std::uint64_t kFullBilinearCap = 10'000'000;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::size_t parse_size(const std::string& text, const std::string& flag) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw CLI::ValidationError(flag, "'" + text + "' is not a non-negative integer");
  }
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& flag, char sep = ',') {
  std::vector<std::size_t> out;
  for (const auto& part : split(text, sep)) out.push_back(parse_size(part, flag));
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

std::vector<nn::PoolingMethod> parse_methods(const std::string& text) {
  std::vector<nn::PoolingMethod> methods;
  for (const auto& name : split(text, ',')) {
    try {
      methods.push_back(nn::PoolingMethod::parse(name));
    } catch (const std::invalid_argument& e) {
      throw CLI::ValidationError("--methods", e.what());
    }
  }
  if (methods.empty()) throw CLI::ValidationError("--methods", "empty list");
  return methods;
}

ordered_json method_list_json(const std::vector<nn::PoolingMethod>& methods) {
  ordered_json j = ordered_json::array();
  for (const auto& m : methods) j.push_back(m.name());
  return j;
}

struct TrainFlags {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::size_t patience = 15;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--patience", patience, "Early-stopping patience in epochs")->capture_default_str();
  }

  harness::TrainConfig config() const {
    harness::TrainConfig c;
    c.epochs = epochs;
    c.batch = batch;
    c.patience = patience;
    return c;
  }

  ordered_json json() const { return {{"epochs", epochs}, {"batch", batch}, {"patience", patience}}; }
};

struct TaskFlags {
  std::size_t n1 = 16;
  std::size_t n2 = 16;
  std::size_t classes = 8;
  double noise = tasks::BilinearClassificationTask{}.noise_sigma;
  std::size_t grid = 1;
  std::size_t train_count = 4000;
  std::size_t test_count = 1000;
  std::size_t val_count = 500;

  void add(CLI::App* cmd, CLI::Option* attention_flag) {
    cmd->add_option("--n1", n1, "First modality dimension")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--n2", n2, "Second modality dimension")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--classes", classes, "Number of classes")->capture_default_str()->check(CLI::Range(2, 1 << 20));
    cmd->add_option("--noise", noise, "Label noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
    auto* g = cmd->add_option("--grid", grid, "Grid locations per sample (needs --attention when > 1)")
                  ->capture_default_str()
                  ->check(CLI::PositiveNumber);
    g->needs(attention_flag);
    cmd->add_option("--train-count", train_count, "Training samples")->capture_default_str();
    cmd->add_option("--test-count", test_count, "Test samples")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--val-count", val_count, "Validation samples")->capture_default_str();
  }

  tasks::BilinearClassificationTask task(std::uint64_t seed) const {
    return {n1, n2, classes, noise, seed, grid};
  }

  ordered_json json() const {
    return {{"n1", n1},
            {"n2", n2},
            {"classes", classes},
            {"noise_sigma", noise},
            {"grid_locations", grid},
            {"train_count", train_count},
            {"test_count", test_count},
            {"val_count", val_count}};
  }
};

void write_outputs(const fs::path& dir, const std::string& stem, const std::string& json, const std::string& csv,
                   const std::string& command, double ms) {
  io::write_text(dir / (stem + ".json"), json);
  if (!csv.empty()) io::write_text(dir / (stem + ".csv"), csv);
  io::write_text(dir / "timing.json", io::timing_json(command, ms));
}

// verify --------------------------------------------------------------------

int cmd_verify(std::optional<double> tolerance, std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  verify::Options opts;
  opts.tolerance = tolerance;
  opts.seed = seed;
  const auto start = Clock::now();
  const auto results = verify::run_all(opts);
  std::vector<std::string> failed;
  ordered_json suites = ordered_json::array();
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%s  %-32s measured %-12.4g %s %-8.3g ", r.passed ? "PASS" : "FAIL",
                  r.name.c_str(), r.measured, r.exact ? "<=" : "< ", r.tolerance);
    out << line << r.detail << "\n";
    if (!r.passed) failed.push_back(r.name);
    suites.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"measured", r.measured},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail}});
  }
  if (failed.empty()) {
    out << "all " << results.size() << " suites passed\n";
  } else {
    out << failed.size() << " suite(s) failed:";
    for (const auto& f : failed) out << " " << f;
    out << "\n";
  }
  if (!out_dir.empty()) {
    io::ResultRecord rec;
    rec.command = "verify";
    rec.seed = seed;
    rec.config = {{"tolerance_override", tolerance ? ordered_json(*tolerance) : ordered_json(nullptr)}};
    for (const auto& r : results) rec.metrics[r.name] = r.measured;
    rec.extra["suites"] = suites;
    write_outputs(out_dir, "verify", io::result_json(rec), "", "verify", elapsed_ms(start));
  }
  return failed.empty() ? 0 : 1;
}

// bench ---------------------------------------------------------------------

struct BenchFlags {
  std::size_t n1 = 2048;
  std::size_t n2 = 2048;
  std::size_t d = 16000;
  std::size_t classes = 3000;
  std::size_t batch = 16;
  std::size_t repetitions = 5;
};

struct Timing {
  double median = 0.0;
  double p95 = 0.0;
};

Timing summarize(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  Timing t;
  const std::size_t n = samples.size();
  t.median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  t.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

int cmd_bench(const BenchFlags& f, std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  if (f.n1 == 0 || f.n2 == 0 || f.d == 0 || f.classes == 0 || f.batch == 0 || f.repetitions == 0) {
    throw ConfigError("bench: n1, n2, d, classes, batch and repetitions must all be positive");
  }
  const auto start = Clock::now();
  const std::uint64_t bilinear_params = full_bilinear_param_count(f.n1, f.n2, f.classes);
  const std::uint64_t mcb_params = mcb_param_count(f.d, f.classes);

  Rng rng(derive_seed(seed, 1));
  std::vector<std::vector<RealVec>> batch(f.batch);
  for (auto& pair : batch) pair = {rng.unit_vector(f.n1), rng.unit_vector(f.n2)};

  const auto op = CompactBilinear::sample(derive_seed(seed, 2), f.n1, f.n2, f.d);
  std::vector<double> mcb_ms;
  for (std::size_t r = 0; r < f.repetitions; ++r) {
    const auto t0 = Clock::now();
    const auto pooled = op.forward_batch(batch);
    mcb_ms.push_back(elapsed_ms(t0));
    if (pooled.size() != f.batch) throw std::logic_error("bench: batch size mismatch");
  }
  const Timing mcb_t = summarize(mcb_ms);

  const bool feasible = bilinear_params <= kFullBilinearCap;
  Timing full_t;
  if (feasible) {
    // vec(x q^T) followed by the n1*n2 x C classifier the bilinear model needs.
    const std::size_t flat = f.n1 * f.n2;
    RealVec weights(flat * f.classes);
    for (auto& w : weights) w = rng.uniform(-1.0, 1.0);
    std::vector<double> full_ms;
    for (std::size_t r = 0; r < f.repetitions; ++r) {
      const auto t0 = Clock::now();
      double sink = 0.0;
      RealVec outer(flat);
      RealVec logits(f.classes);
      for (const auto& pair : batch) {
        for (std::size_t i = 0; i < f.n1; ++i) {
          for (std::size_t j = 0; j < f.n2; ++j) outer[i * f.n2 + j] = pair[0][i] * pair[1][j];
        }
        for (std::size_t c = 0; c < f.classes; ++c) {
          const double* row = weights.data() + c * flat;
          double acc = 0.0;
          for (std::size_t k = 0; k < flat; ++k) acc += row[k] * outer[k];
          logits[c] = acc;
        }
        sink += logits[0];
      }
      full_ms.push_back(elapsed_ms(t0));
      if (!std::isfinite(sink)) throw NumericalError("bench: non-finite bilinear logits");
    }
    full_t = summarize(full_ms);
  }

  std::ostringstream csv;
  csv << "version,leg,n1,n2,d,classes,batch,repetitions,status,median_ms,p95_ms,param_count\n";
  const std::string dims = std::to_string(f.n1) + "," + std::to_string(f.n2) + ",";
  const std::string tail = std::to_string(f.classes) + "," + std::to_string(f.batch) + "," +
                           std::to_string(f.repetitions) + ",";
  csv << io::kFormatVersion << ",mcb," << dims << f.d << "," << tail << "ok," << io::format_double(mcb_t.median) << ","
      << io::format_double(mcb_t.p95) << "," << mcb_params << "\n";
  csv << io::kFormatVersion << ",full-bilinear," << dims << "," << tail;
  if (feasible) {
    csv << "ok," << io::format_double(full_t.median) << "," << io::format_double(full_t.p95) << ",";
  } else {
    csv << "refused,,,";
  }
  csv << bilinear_params << "\n";
  out << csv.str();
  if (!feasible) {
    out << "# full-bilinear leg refused: " << bilinear_params << " classifier weights exceed the cap of "
        << kFullBilinearCap << "\n";
  }

  if (!out_dir.empty()) {
    io::ResultRecord rec;
    rec.command = "bench";
    rec.seed = seed;
    rec.config = {{"n1", f.n1}, {"n2", f.n2}, {"d", f.d}, {"classes", f.classes}, {"batch", f.batch},
                  {"repetitions", f.repetitions}};
    rec.metrics["mcb_param_count"] = static_cast<double>(mcb_params);
    rec.metrics["full_bilinear_param_count"] = static_cast<double>(bilinear_params);
    rec.metrics["mcb_median_ms"] = mcb_t.median;
    rec.metrics["mcb_p95_ms"] = mcb_t.p95;
    if (feasible) {
      rec.metrics["full_bilinear_median_ms"] = full_t.median;
      rec.metrics["full_bilinear_p95_ms"] = full_t.p95;
    }
    rec.extra["full_bilinear_status"] = feasible ? "ok" : "refused";
    write_outputs(out_dir, "bench", io::result_json(rec), csv.str(), "bench", elapsed_ms(start));
  }
  return 0;
}

// train ---------------------------------------------------------------------

struct ModelFlags {
  std::string pooling = "mcb";
  std::size_t d = 256;
  std::string hidden;
  bool attention = false;
  std::size_t glimpses = 1;
  bool no_normalization = false;
};

harness::ModelSpec model_spec(const ModelFlags& m, const TaskFlags& t, std::uint64_t seed, bool d_given) {
  harness::ModelSpec spec;
  try {
    spec.pooling = nn::PoolingMethod::parse(m.pooling);
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--pooling", e.what());
  }
  if (spec.pooling.kind == nn::PoolingKind::mcb) {
    spec.pooling.d = m.d;
  } else if (d_given) {
    throw CLI::ValidationError("--d", "only applies to mcb pooling");
  }
  if (!m.hidden.empty()) spec.pooling.hidden = parse_sizes(m.hidden, "--hidden", 'x');
  if (spec.pooling.kind == nn::PoolingKind::concat_fc && spec.pooling.hidden.empty()) {
    throw CLI::ValidationError("--hidden", "concat-fc pooling needs --hidden");
  }
  if (spec.pooling.kind == nn::PoolingKind::full_bilinear &&
      full_bilinear_param_count(t.n1 * (m.attention ? m.glimpses : 1), t.n2, t.classes) > kFullBilinearCap) {
    throw ConfigError("full-bilinear pooling refused: classifier would exceed " + std::to_string(kFullBilinearCap) +
                      " weights");
  }
  spec.use_attention = m.attention;
  spec.glimpses = m.glimpses;
  spec.normalization = !m.no_normalization;
  spec.n1 = t.n1;
  spec.n2 = t.n2;
  spec.classes = t.classes;
  spec.grid_locations = t.grid;
  spec.seed = seed;
  return spec;
}

int cmd_train(const ModelFlags& m, const TaskFlags& t, const TrainFlags& tr, bool d_given, std::uint64_t seed,
              const std::string& out_dir, std::ostream& out) {
  const auto spec = model_spec(m, t, seed, d_given);
  if (t.val_count == 0 && tr.epochs > 0) throw CLI::ValidationError("--val-count", "must be positive to train");
  const auto start = Clock::now();
  const tasks::PlantedClassifier planted(t.task(seed));
  const auto train_set = tasks::gen_classification(planted, t.train_count, 0);
  const auto test_set = tasks::gen_classification(planted, t.test_count, t.train_count);
  const auto val_set = tasks::gen_classification(planted, t.val_count, t.train_count + t.test_count);
  auto result = harness::train(spec, train_set, val_set, tr.config());

  io::ResultRecord rec;
  rec.command = "train";
  rec.seed = seed;
  rec.config = {{"pooling", spec.pooling.name()},
                {"d", spec.pooling.d},
                {"hidden", spec.pooling.hidden},
                {"attention", spec.use_attention},
                {"glimpses", spec.glimpses},
                {"normalization", spec.normalization},
                {"task", t.json()},
                {"train", tr.json()}};
  rec.metrics["param_count"] = static_cast<double>(result.model.param_count());
  rec.metrics["train_accuracy"] = harness::evaluate(result.model, train_set);
  rec.metrics["val_accuracy"] = result.best_val_accuracy;
  rec.metrics["test_accuracy"] = harness::evaluate(result.model, test_set);
  rec.metrics["best_epoch"] = static_cast<double>(result.best_epoch);
  rec.metrics["epochs_run"] = static_cast<double>(result.history.size() - 1);
  rec.extra["plant_seed"] = planted.plant_seed();
  rec.extra["data_hash"] = tasks::content_hash(train_set);

  std::ostringstream history;
  history << "version,epoch,loss,train_accuracy,val_accuracy\n";
  for (const auto& e : result.history) {
    history << io::kFormatVersion << "," << e.epoch << "," << io::format_double(e.loss) << ","
            << io::format_double(e.train_accuracy) << "," << io::format_double(e.val_accuracy) << "\n";
  }
  char line[160];
  std::snprintf(line, sizeof line, "%s  params %llu  train %.4f  val %.4f  test %.4f  best epoch %zu\n",
                spec.pooling.name().c_str(), static_cast<unsigned long long>(result.model.param_count()),
                rec.metrics["train_accuracy"], rec.metrics["val_accuracy"], rec.metrics["test_accuracy"],
                result.best_epoch);
  out << line;
  write_outputs(out_dir, "train", io::result_json(rec), history.str(), "train", elapsed_ms(start));
  return 0;
}

// ablate --------------------------------------------------------------------

int cmd_ablate(const std::string& methods_text, const std::string& seeds_text, const std::string& sweep,
               bool budget_match, const ModelFlags& m, const TaskFlags& t, const TrainFlags& tr,
               const std::string& out_dir, std::ostream& out) {
  harness::AblationConfig cfg;
  cfg.task = t.task(1);
  cfg.methods = sweep.empty() ? parse_methods(methods_text) : std::vector{nn::PoolingMethod::parse("mcb")};
  cfg.seeds = parse_seeds(seeds_text);
  cfg.budget_match = budget_match;
  cfg.reference_d = m.d;
  cfg.normalization = !m.no_normalization;
  cfg.use_attention = m.attention;
  cfg.glimpses = m.glimpses;
  cfg.train_count = t.train_count;
  cfg.test_count = t.test_count;
  cfg.val_count = t.val_count;
  cfg.train = tr.config();
  if (!m.hidden.empty()) {
    const auto hidden = parse_sizes(m.hidden, "--hidden", 'x');
    for (auto& method : cfg.methods) {
      if (method.kind == nn::PoolingKind::concat_fc) method.hidden = hidden;
    }
  }
  for (const auto& method : cfg.methods) {
    if (method.kind == nn::PoolingKind::concat_fc && method.hidden.empty() && !budget_match) {
      throw CLI::ValidationError("--hidden", "concat-fc needs --hidden unless --budget-match is set");
    }
    if (method.kind == nn::PoolingKind::full_bilinear &&
        full_bilinear_param_count(t.n1 * (m.attention ? m.glimpses : 1), t.n2, t.classes) > kFullBilinearCap) {
      throw ConfigError("full-bilinear pooling refused: classifier would exceed " +
                        std::to_string(kFullBilinearCap) + " weights");
    }
  }

  const auto start = Clock::now();
  harness::AblationReport report;
  std::vector<std::size_t> ds;
  if (!sweep.empty()) {
    ds = parse_sizes(sweep, "--sweep-d");
    report = harness::sweep_d(cfg, ds);
  } else {
    report = harness::ablate(cfg);
  }

  io::ResultRecord rec;
  rec.command = sweep.empty() ? "ablate" : "sweep-d";
  rec.seed = cfg.seeds.front();
  rec.config = {{"methods", method_list_json(cfg.methods)},
                {"seeds", cfg.seeds},
                {"budget_match", budget_match},
                {"d", m.d},
                {"sweep_d", ds},
                {"attention", m.attention},
                {"glimpses", m.glimpses},
                {"normalization", cfg.normalization},
                {"task", t.json()},
                {"train", tr.json()}};
  for (const auto& s : report.summary) {
    rec.metrics[s.method + "[" + s.config + "].mean_test_accuracy"] = s.mean_test;
    rec.metrics[s.method + "[" + s.config + "].std_test_accuracy"] = s.std_test;
  }
  out << io::report_table(report);
  write_outputs(out_dir, "ablation", io::result_json(rec, report), io::report_csv(report), rec.command,
                elapsed_ms(start));
  return 0;
}

// ground --------------------------------------------------------------------

struct GroundFlags {
  std::size_t n_v = 8;
  std::size_t n_p = 8;
  std::size_t proposals = 8;
  double noise = tasks::GroundingRankingTask{}.noise_sigma;
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::size_t val_count = 300;
};

int cmd_ground(const std::string& methods_text, const std::string& seeds_text, bool budget_match, std::size_t d,
               const std::string& hidden, bool no_normalization, const GroundFlags& g, const TrainFlags& tr,
               const std::string& out_dir, std::ostream& out) {
  harness::GroundingAblationConfig cfg;
  cfg.task = {g.n_v, g.n_p, g.proposals, g.noise, 1};
  cfg.methods = parse_methods(methods_text);
  cfg.seeds = parse_seeds(seeds_text);
  cfg.budget_match = budget_match;
  cfg.reference_d = d;
  cfg.normalization = !no_normalization;
  cfg.train_count = g.train_count;
  cfg.test_count = g.test_count;
  cfg.val_count = g.val_count;
  cfg.train = tr.config();
  if (!hidden.empty()) {
    const auto widths = parse_sizes(hidden, "--hidden", 'x');
    for (auto& method : cfg.methods) {
      if (method.kind == nn::PoolingKind::concat_fc) method.hidden = widths;
    }
  }
  for (const auto& method : cfg.methods) {
    if (method.kind == nn::PoolingKind::concat_fc && method.hidden.empty() && !budget_match) {
      throw CLI::ValidationError("--hidden", "concat-fc needs --hidden unless --budget-match is set");
    }
  }
  const auto start = Clock::now();
  const auto report = harness::ablate_grounding(cfg);

  io::ResultRecord rec;
  rec.command = "ground";
  rec.seed = cfg.seeds.front();
  rec.config = {{"methods", method_list_json(cfg.methods)},
                {"seeds", cfg.seeds},
                {"budget_match", budget_match},
                {"d", d},
                {"normalization", cfg.normalization},
                {"task",
                 {{"n_v", g.n_v},
                  {"n_p", g.n_p},
                  {"proposals", g.proposals},
                  {"noise_sigma", g.noise},
                  {"train_count", g.train_count},
                  {"test_count", g.test_count},
                  {"val_count", g.val_count}}},
                {"train", tr.json()}};
  for (const auto& s : report.summary) {
    rec.metrics[s.method + "[" + s.config + "].mean_top1"] = s.mean_test;
    rec.metrics[s.method + "[" + s.config + "].std_top1"] = s.std_test;
  }
  out << io::report_table(report);
  write_outputs(out_dir, "grounding", io::result_json(rec, report), io::report_csv(report), "ground",
                elapsed_ms(start));
  return 0;
}

// export-attention ----------------------------------------------------------

int cmd_export_attention(const ModelFlags& m, const TaskFlags& t, const TrainFlags& tr, std::size_t count,
                         std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  ModelFlags flags = m;
  flags.attention = true;
  const auto spec = model_spec(flags, t, seed, false);
  const auto start = Clock::now();
  const tasks::PlantedClassifier planted(t.task(seed));
  const auto train_set = tasks::gen_classification(planted, t.train_count, 0);
  const auto test_set = tasks::gen_classification(planted, t.test_count, t.train_count);
  const auto val_set = tasks::gen_classification(planted, t.val_count, t.train_count + t.test_count);
  const auto result = harness::train(spec, train_set, val_set, tr.config());

  std::size_t salient_hits = 0;
  for (const auto& s : test_set) {
    const auto maps = result.model.attention_maps(s);
    salient_hits += nn::argmax(maps.front()) == planted.salient_location(s) ? 1 : 0;
  }

  ordered_json samples = ordered_json::array();
  for (std::size_t i = 0; i < std::min(count, test_set.size()); ++i) {
    const auto& s = test_set[i];
    samples.push_back({{"index", t.train_count + i},
                       {"label", s.label},
                       {"prediction", result.model.predict(s)},
                       {"salient_location", planted.salient_location(s)},
                       {"maps", result.model.attention_maps(s)}});
  }
  io::ResultRecord rec;
  rec.command = "export-attention";
  rec.seed = seed;
  rec.config = {{"pooling", spec.pooling.name()}, {"d", spec.pooling.d},     {"glimpses", spec.glimpses},
                {"task", t.json()},               {"train", tr.json()}};
  rec.metrics["test_accuracy"] = harness::evaluate(result.model, test_set);
  rec.metrics["salient_hit_rate"] = static_cast<double>(salient_hits) / static_cast<double>(test_set.size());
  rec.metrics["best_epoch"] = static_cast<double>(result.best_epoch);
  rec.extra["samples"] = samples;
  out << "test accuracy " << rec.metrics["test_accuracy"] << ", first glimpse peaks on the salient location for "
      << rec.metrics["salient_hit_rate"] << " of test samples\n";
  write_outputs(out_dir, "attention", io::result_json(rec), "", "export-attention", elapsed_ms(start));
  return 0;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto range = text.find("..");
  auto number = [&](const std::string& s) -> std::uint64_t {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw CLI::ValidationError("--seeds", "'" + text + "' is not a seed list (use 1..5 or 1,2,3)");
    }
  };
  if (range != std::string::npos) {
    const auto lo = number(text.substr(0, range));
    const auto hi = number(text.substr(range + 2));
    if (hi < lo) throw CLI::ValidationError("--seeds", "empty range '" + text + "'");
    if (hi - lo >= 10000) throw CLI::ValidationError("--seeds", "range '" + text + "' is too long");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    for (const auto& part : split(text, ',')) seeds.push_back(number(part));
  }
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
  return seeds;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal compact bilinear pooling: verification, training and ablations", "mcb"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out_dir;

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Run the oracle, kernel and gradient suites");
  std::optional<double> tolerance;
  std::uint64_t verify_seed = verify::Options{}.seed;
  verify_cmd->add_option("--tolerance", tolerance, "Replace every suite tolerance");
  verify_cmd->add_option("--seed", verify_seed, "Seed for the randomized suites")->capture_default_str();
  verify_cmd->add_option("--out", out_dir, "Write verify.json here");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time MCB forward against explicit bilinear pooling");
  BenchFlags bench;
  bench_cmd->add_option("--n1", bench.n1)->capture_default_str();
  bench_cmd->add_option("--n2", bench.n2)->capture_default_str();
  bench_cmd->add_option("--d", bench.d)->capture_default_str();
  bench_cmd->add_option("--classes", bench.classes)->capture_default_str();
  bench_cmd->add_option("--batch", bench.batch)->capture_default_str();
  bench_cmd->add_option("--repetitions", bench.repetitions)->capture_default_str();
  bench_cmd->add_option("--seed", seed)->capture_default_str();
  bench_cmd->add_option("--out", out_dir, "Write bench.csv and bench.json here");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model on the planted classification task");
  ModelFlags model;
  TaskFlags task;
  TrainFlags train;
  auto add_model = [&](CLI::App* cmd, bool with_pooling) {
    if (with_pooling) cmd->add_option("--pooling", model.pooling, "Pooling method")->capture_default_str();
    auto* d_opt = cmd->add_option("--d", model.d, "MCB output dimension")->capture_default_str()->check(
        CLI::PositiveNumber);
    cmd->add_option("--hidden", model.hidden, "Hidden widths after pooling, e.g. 64 or 64x32");
    auto* att = cmd->add_flag("--attention", model.attention, "Attend over the grid before pooling");
    cmd->add_option("--glimpses", model.glimpses, "Attention glimpses")
        ->capture_default_str()
        ->check(CLI::PositiveNumber)
        ->needs(att);
    cmd->add_flag("--no-normalization", model.no_normalization, "Skip signed sqrt + L2 after pooling");
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--out", out_dir)->required();
    return std::pair{d_opt, att};
  };
  auto [train_d, train_att] = add_model(train_cmd, true);
  task.add(train_cmd, train_att);
  train.add(train_cmd);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare pooling methods over several seeds");
  std::string methods = "eltwise-sum,eltwise-product,concat,concat-fc,full-bilinear,mcb";
  std::string seeds = "1..5";
  std::string sweep;
  bool budget_match = false;
  auto* methods_opt = ablate_cmd->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
  ablate_cmd->add_option("--seeds", seeds, "Seed range a..b or list")->capture_default_str();
  ablate_cmd->add_option("--sweep-d", sweep, "Comma-separated d values (MCB only)")->excludes(methods_opt);
  ablate_cmd->add_flag("--budget-match", budget_match, "Size non-bilinear FC layers to the MCB parameter count");
  auto [ablate_d, ablate_att] = add_model(ablate_cmd, false);
  (void)ablate_d;
  TaskFlags ablate_task;
  ablate_task.add(ablate_cmd, ablate_att);
  TrainFlags ablate_train;
  ablate_train.add(ablate_cmd);

  // ground
  auto* ground_cmd = app.add_subcommand("ground", "Grounding ablation on the planted ranking task");
  std::string ground_methods = "mcb,concat";
  std::string ground_seeds = "1..5";
  bool ground_budget = false;
  std::size_t ground_d = 128;
  std::string ground_hidden;
  bool ground_no_norm = false;
  GroundFlags ground;
  TrainFlags ground_train;
  ground_cmd->add_option("--methods", ground_methods)->capture_default_str();
  ground_cmd->add_option("--seeds", ground_seeds)->capture_default_str();
  ground_cmd->add_flag("--budget-match", ground_budget);
  ground_cmd->add_option("--d", ground_d)->capture_default_str()->check(CLI::PositiveNumber);
  ground_cmd->add_option("--hidden", ground_hidden);
  ground_cmd->add_flag("--no-normalization", ground_no_norm);
  ground_cmd->add_option("--n-v", ground.n_v, "Proposal feature dimension")->capture_default_str();
  ground_cmd->add_option("--n-p", ground.n_p, "Phrase feature dimension")->capture_default_str();
  ground_cmd->add_option("--proposals", ground.proposals)->capture_default_str()->check(CLI::Range(2, 1 << 16));
  ground_cmd->add_option("--noise", ground.noise)->capture_default_str()->check(CLI::NonNegativeNumber);
  ground_cmd->add_option("--train-count", ground.train_count)->capture_default_str();
  ground_cmd->add_option("--test-count", ground.test_count)->capture_default_str();
  ground_cmd->add_option("--val-count", ground.val_count)->capture_default_str();
  ground_cmd->add_option("--out", out_dir)->required();
  ground_train.add(ground_cmd);

  // sketch save / load
  auto* sketch_cmd = app.add_subcommand("sketch", "Persist count sketch parameters");
  sketch_cmd->require_subcommand(1);
  auto* save_cmd = sketch_cmd->add_subcommand("save", "Sample parameters and write them");
  std::size_t sketch_n = 16;
  std::size_t sketch_d = 64;
  std::string sketch_file;
  save_cmd->add_option("--n", sketch_n, "Input dimension")->capture_default_str()->check(CLI::PositiveNumber);
  save_cmd->add_option("--d", sketch_d, "Output dimension")->capture_default_str()->check(CLI::PositiveNumber);
  save_cmd->add_option("--seed", seed)->capture_default_str();
  save_cmd->add_option("file", sketch_file)->required();
  auto* load_cmd = sketch_cmd->add_subcommand("load", "Validate a parameter file and print its summary");
  load_cmd->add_option("file", sketch_file)->required();

  // export-attention
  auto* export_cmd = app.add_subcommand("export-attention", "Train an attention model and dump its maps");
  ModelFlags& export_model = model;
  TaskFlags export_task;
  export_task.grid = 8;
  TrainFlags export_train;
  std::size_t export_count = 16;
  export_cmd->add_option("--d", export_model.d)->capture_default_str()->check(CLI::PositiveNumber);
  export_cmd->add_option("--glimpses", export_model.glimpses)->capture_default_str()->check(CLI::PositiveNumber);
  export_cmd->add_option("--count", export_count, "Test samples to export")->capture_default_str();
  export_cmd->add_option("--seed", seed)->capture_default_str();
  export_cmd->add_option("--out", out_dir)->required();
  auto* export_att = export_cmd->add_flag("--attention", export_model.attention, "Implied; accepted for symmetry");
  export_task.add(export_cmd, export_att);
  export_cmd->get_option("--grid")->remove_needs(export_att);
  export_train.add(export_cmd);

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "Write a planted dataset as JSON lines");
  std::string gen_kind = "classification";
  std::size_t gen_count = 1000;
  std::size_t gen_first = 0;
  std::string gen_file;
  TaskFlags gen_task;
  gen_cmd->add_option("--kind", gen_kind)->capture_default_str()->check(
      CLI::IsMember({"classification", "grounding"}));
  gen_cmd->add_option("--count", gen_count)->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--first", gen_first, "Index of the first sample")->capture_default_str();
  gen_cmd->add_option("--seed", seed)->capture_default_str();
  gen_cmd->add_option("--n1", gen_task.n1)->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n2", gen_task.n2)->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--classes", gen_task.classes)->capture_default_str();
  gen_cmd->add_option("--noise", gen_task.noise)->capture_default_str();
  gen_cmd->add_option("--grid", gen_task.grid)->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("file", gen_file)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*verify_cmd) return cmd_verify(tolerance, verify_seed, out_dir, out);
    if (*bench_cmd) return cmd_bench(bench, seed, out_dir, out);
    if (*train_cmd) return cmd_train(model, task, train, train_d->count() > 0, seed, out_dir, out);
    if (*ablate_cmd) {
      return cmd_ablate(methods, seeds, sweep, budget_match, model, ablate_task, ablate_train, out_dir, out);
    }
    if (*ground_cmd) {
      return cmd_ground(ground_methods, ground_seeds, ground_budget, ground_d, ground_hidden, ground_no_norm, ground,
                        ground_train, out_dir, out);
    }
    if (*save_cmd) {
      const auto params = sketch::sample_params(seed, sketch_n, sketch_d);
      io::save_sketch(sketch_file, params);
      out << "wrote " << sketch_file << " (n=" << sketch_n << ", d=" << sketch_d << ", "
          << io::sketch_checksum(params) << ")\n";
      return 0;
    }
    if (*load_cmd) {
      const auto params = io::load_sketch(sketch_file);
      out << "n=" << params.input_dim() << " d=" << params.output_dim() << " seed=" << params.seed() << " "
          << io::sketch_checksum(params) << "\n";
      return 0;
    }
    if (*export_cmd) return cmd_export_attention(export_model, export_task, export_train, export_count, seed, out_dir,
                                                 out);
    if (*gen_cmd) {
      if (gen_kind == "classification") {
        io::write_dataset(gen_file, tasks::gen_classification(gen_task.task(seed), gen_count, gen_first));
      } else {
        const tasks::GroundingRankingTask g{gen_task.n1, gen_task.n2, std::max<std::size_t>(gen_task.classes, 2),
                                            gen_task.noise, seed};
        io::write_dataset(gen_file, tasks::gen_grounding(g, gen_count, gen_first));
      }
      out << "wrote " << gen_count << " " << gen_kind << " items to " << gen_file << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 3;
  } catch (const CorruptFile& e) {
    err << "corrupt file: " << e.what() << "\n";
    return 4;
  } catch (const TrainingDiverged& e) {
    err << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mcb::cli
