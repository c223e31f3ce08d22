// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mcb/compact_bilinear.hpp"
#include "mcb/harness.hpp"
#include "mcb/io.hpp"
#include "mcb/sketch.hpp"
#include "mcb/verify.hpp"

using namespace mcb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mcb_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(std::vector<std::string> args, std::string* captured = nullptr) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  if (captured) *captured = out.str();
  if (code != 0) std::fprintf(stderr, "mcb %s exited %d: %s\n", args[0].c_str(), code, err.str().c_str());
  return code;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, sep)) parts.push_back(item);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

// Keyed by "method config" from the mean/std rows of a report CSV.
std::map<std::string, Summary> read_summaries(const fs::path& csv_path) {
  std::map<std::string, Summary> out;
  std::istringstream in(io::read_text(csv_path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() < 8) continue;
    const std::string key = f[2] + " " + f[3];
    if (f[1] == "mean") out[key].mean = std::stod(f[7]);
    if (f[1] == "std") out[key].std = std::stod(f[7]);
  }
  return out;
}

const Summary* find_method(const std::map<std::string, Summary>& s, const std::string& method) {
  for (const auto& [key, value] : s) {
    if (key.rfind(method + " ", 0) == 0) return &value;
  }
  return nullptr;
}

double pooled_std(const Summary& a, const Summary& b) { return std::sqrt((a.std * a.std + b.std * b.std) / 2.0); }

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

Outcome suites_within(const std::vector<verify::SuiteResult>& suites, double limit_s, double elapsed) {
  bool ok = elapsed < limit_s;
  std::string detail;
  for (const auto& s : suites) {
    ok = ok && s.passed;
    detail += s.name + "=" + fmt("%.3g", s.measured) + (s.passed ? "" : "(FAIL)") + " ";
  }
  return {ok, detail + fmt("in %.1f s (limit %.0f s)", elapsed, limit_s)};
}

Outcome oracle_equivalence() {
  const verify::Options opts;
  const auto start = Clock::now();
  std::vector<verify::SuiteResult> suites = {verify::mcb_oracle_equivalence(opts),
                                             verify::mcb_triple_oracle_equivalence(opts)};
  return suites_within(suites, 10.0, seconds_since(start));
}

Outcome kernel_unbiased() {
  const auto start = Clock::now();
  return suites_within({verify::mcb_kernel_unbiased(verify::Options{})}, 60.0, seconds_since(start));
}

Outcome gradient_suites() {
  const verify::Options opts;
  const auto start = Clock::now();
  std::vector<verify::SuiteResult> suites = {verify::layer_gradients(opts), verify::pipeline_gradients(opts)};
  return suites_within(suites, 120.0, seconds_since(start));
}

Outcome param_counts() {
  const auto full = full_bilinear_param_count(2048, 2048, 3000);
  const auto compact = mcb_param_count(16000, 3000);
  const bool ok = full == 12'582'912'000ULL && compact == 48'000'000ULL;
  return {ok, "full-bilinear " + std::to_string(full) + ", mcb " + std::to_string(compact)};
}

Outcome pooling_ablation() {
  const auto dir = work_dir("ablate");
  const auto start = Clock::now();
  if (run_cli({"ablate", "--methods", "mcb,concat,eltwise-sum", "--seeds", "1..5", "--budget-match", "--out",
               dir.string()}) != 0) {
    return {false, "ablate failed"};
  }
  const double elapsed = seconds_since(start);
  const auto s = read_summaries(dir / "ablation.csv");
  const auto* mcb = find_method(s, "mcb");
  const auto* concat = find_method(s, "concat");
  const auto* sum = find_method(s, "eltwise-sum");
  if (!mcb || !concat || !sum) return {false, "summary rows missing"};
  const double gap_concat = mcb->mean - concat->mean;
  const double gap_sum = mcb->mean - sum->mean;
  const bool ok = gap_concat > pooled_std(*mcb, *concat) && gap_sum > pooled_std(*mcb, *sum) && elapsed < 600.0;
  return {ok, fmt("mcb %.4f+-%.4f, concat %.4f+-%.4f, ", mcb->mean, mcb->std, concat->mean, concat->std) +
                  fmt("eltwise-sum %.4f+-%.4f, in %.1f s (limit 600 s)", sum->mean, sum->std, elapsed)};
}

Outcome d_sweep() {
  const auto dir = work_dir("sweep");
  const auto start = Clock::now();
  if (run_cli({"ablate", "--sweep-d", "64,128,256,512", "--seeds", "1..5", "--out", dir.string()}) != 0) {
    return {false, "sweep failed"};
  }
  const double elapsed = seconds_since(start);
  const auto s = read_summaries(dir / "ablation.csv");
  std::vector<Summary> by_d;
  std::string detail;
  for (int d : {64, 128, 256, 512}) {
    const auto it = s.find("mcb d=" + std::to_string(d));
    if (it == s.end()) return {false, "missing d=" + std::to_string(d)};
    by_d.push_back(it->second);
    detail += fmt("d=%.0f %.4f, ", d, it->second.mean);
  }
  // Non-decreasing until the first drop; after that every mean must stay
  // within one pooled standard deviation of the best so far (a plateau).
  bool ok = elapsed < 900.0;
  std::size_t best = 0;
  bool plateau = false;
  for (std::size_t i = 1; i < by_d.size(); ++i) {
    if (!plateau && by_d[i].mean >= by_d[i - 1].mean) {
      best = i;
      continue;
    }
    plateau = true;
    if (by_d[best].mean - by_d[i].mean > pooled_std(by_d[best], by_d[i])) ok = false;
  }
  return {ok, detail + (plateau ? "plateau, " : "monotone, ") + fmt("in %.1f s (limit 900 s)", elapsed)};
}

Outcome grounding() {
  const auto dir = work_dir("ground");
  const auto start = Clock::now();
  if (run_cli({"ground", "--methods", "mcb,concat", "--seeds", "1..5", "--proposals", "8", "--out", dir.string()}) !=
      0) {
    return {false, "ground failed"};
  }
  const double elapsed = seconds_since(start);
  const auto s = read_summaries(dir / "grounding.csv");
  const auto* mcb = find_method(s, "mcb");
  const auto* concat = find_method(s, "concat");
  if (!mcb || !concat) return {false, "summary rows missing"};
  const bool ok = mcb->mean > concat->mean && elapsed < 600.0;
  return {ok, fmt("mcb %.4f+-%.4f, concat %.4f+-%.4f, ", mcb->mean, mcb->std, concat->mean, concat->std) +
                  fmt("in %.1f s (limit 600 s)", elapsed)};
}

Outcome bench_floor() {
  std::string out;
  if (run_cli({"bench", "--n1", "2048", "--n2", "2048", "--d", "16000", "--batch", "16"}, &out) != 0) {
    return {false, "bench failed"};
  }
  std::istringstream in(out);
  std::string line;
  double median_ms = -1.0;
  bool refused = false;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() < 12) continue;
    if (f[1] == "mcb" && f[8] == "ok") median_ms = std::stod(f[9]);
    if (f[1] == "full-bilinear" && f[8] == "refused" && f[11] == "12582912000") refused = true;
  }
  const bool ok = median_ms >= 0.0 && median_ms < 1000.0 && refused;
  return {ok, fmt("mcb forward batch 16 median %.1f ms (limit 1000 ms), ", median_ms) +
                  (refused ? "explicit leg refused" : "explicit leg not reported as refused")};
}

Outcome determinism() {
  std::string detail;
  bool ok = true;

  // Bitwise training trajectories.
  harness::ModelSpec spec;
  spec.pooling = nn::PoolingMethod::parse("mcb");
  spec.pooling.d = 128;
  const tasks::BilinearClassificationTask task;
  const auto train_set = tasks::gen_classification(task, 500);
  const auto val_set = tasks::gen_classification(task, 200, 500);
  harness::TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = harness::train(spec, train_set, val_set, cfg);
  const auto b = harness::train(spec, train_set, val_set, cfg);
  bool same_history = a.history.size() == b.history.size();
  for (std::size_t i = 0; same_history && i < a.history.size(); ++i) {
    same_history = a.history[i].loss == b.history[i].loss &&
                   a.history[i].train_accuracy == b.history[i].train_accuracy &&
                   a.history[i].val_accuracy == b.history[i].val_accuracy;
  }
  const bool trajectories = same_history && a.model.same_weights(b.model);
  ok = ok && trajectories;
  detail += trajectories ? "trajectories identical, " : "trajectories differ, ";

  // Byte-identical report files.
  const std::vector<std::string> common = {"--methods", "mcb,concat", "--seeds", "1..2", "--train-count", "400",
                                           "--test-count", "200", "--val-count", "100", "--epochs", "3"};
  bool reports = true;
  std::vector<fs::path> dirs = {work_dir("det_a"), work_dir("det_b")};
  for (const auto& dir : dirs) {
    auto args = common;
    args.insert(args.begin(), "ablate");
    args.push_back("--out");
    args.push_back(dir.string());
    reports = reports && run_cli(args) == 0;
  }
  for (const char* file : {"ablation.json", "ablation.csv"}) {
    reports = reports && io::read_text(dirs[0] / file) == io::read_text(dirs[1] / file);
  }
  ok = ok && reports;
  detail += reports ? "reports byte-identical, " : "reports differ, ";

  // Golden sketch file.
  const auto golden_text = io::read_text(std::string(MCB_TEST_DATA_DIR) + "/golden_sketch.json");
  const auto golden = io::sketch_from_json(golden_text);
  const bool sketch_ok = golden == sketch::sample_params(7, 32, 20) && io::sketch_to_json(golden) == golden_text;
  ok = ok && sketch_ok;
  detail += sketch_ok ? "golden sketch round-trips" : "golden sketch mismatch";
  return {ok, detail};
}

}  // namespace

int main() {
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"kernel unbiasedness", kernel_unbiased},
      {"gradient suite", gradient_suites},
      {"parameter counts", param_counts},
      {"pooling ablation direction", pooling_ablation},
      {"d sweep shape", d_sweep},
      {"grounding direction", grounding},
      {"performance floor", bench_floor},
      {"determinism and serialization", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome result;
    try {
      result = criteria[i].second();
    } catch (const std::exception& e) {
      result = {false, std::string("exception: ") + e.what()};
    }
    failures += result.passed ? 0 : 1;
    std::printf("%s %zu %s: %s\n", result.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, result.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
