#include "mcb/io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mcb/error.hpp"

namespace mcb::io {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kSketchFormat = "mcb-count-sketch";
constexpr const char* kClassificationFormat = "mcb-classification-dataset";
constexpr const char* kGroundingFormat = "mcb-grounding-dataset";

void fnv_mix(std::uint64_t& h, const std::string& text) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
}

ordered_json parse_or_throw(const std::string& text, const std::string& what) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(what + ": " + e.what());
  }
}

void check_header(const ordered_json& j, const char* format, const std::string& what) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    throw CorruptFile(what + ": not a " + std::string(format) + " file");
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw CorruptFile(what + ": missing version");
  }
  if (j["version"].get<int>() != kFormatVersion) {
    throw CorruptFile(what + ": unknown version " + j["version"].dump());
  }
}

template <typename T>
T field(const ordered_json& j, const char* key, const std::string& what) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(what + ": bad field '" + key + "': " + e.what());
  }
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string sketch_checksum(const sketch::CountSketchParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_mix(h, "v" + std::to_string(kFormatVersion) + "|" + std::to_string(params.input_dim()) + "|" +
                 std::to_string(params.output_dim()) + "|" + std::to_string(params.seed()) + "|");
  for (auto b : params.buckets()) fnv_mix(h, std::to_string(b + 1) + ",");
  fnv_mix(h, "|");
  for (auto s : params.signs()) fnv_mix(h, std::to_string(s) + ",");
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string sketch_to_json(const sketch::CountSketchParams& params) {
  ordered_json j;
  j["format"] = kSketchFormat;
  j["version"] = kFormatVersion;
  j["n"] = params.input_dim();
  j["d"] = params.output_dim();
  j["seed"] = params.seed();
  auto& h = j["h"] = ordered_json::array();
  for (auto b : params.buckets()) h.push_back(b + 1);
  auto& s = j["s"] = ordered_json::array();
  for (auto v : params.signs()) s.push_back(static_cast<int>(v));
  j["checksum"] = sketch_checksum(params);
  return j.dump() + "\n";
}

sketch::CountSketchParams sketch_from_json(const std::string& text) {
  const std::string what = "sketch file";
  const auto j = parse_or_throw(text, what);
  check_header(j, kSketchFormat, what);
  const auto n = field<std::size_t>(j, "n", what);
  const auto d = field<std::size_t>(j, "d", what);
  const auto seed = field<std::uint64_t>(j, "seed", what);
  const auto h1 = field<std::vector<std::int64_t>>(j, "h", what);
  const auto s = field<std::vector<int>>(j, "s", what);
  const auto checksum = field<std::string>(j, "checksum", what);
  if (h1.size() != n || s.size() != n) throw CorruptFile(what + ": h/s lengths do not match n");

  std::vector<std::uint32_t> buckets(n);
  std::vector<std::int8_t> signs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (h1[i] < 1 || static_cast<std::uint64_t>(h1[i]) > d) throw CorruptFile(what + ": h out of range");
    if (s[i] != 1 && s[i] != -1) throw CorruptFile(what + ": s must be +1 or -1");
    buckets[i] = static_cast<std::uint32_t>(h1[i] - 1);
    signs[i] = static_cast<std::int8_t>(s[i]);
  }
  sketch::CountSketchParams params = [&] {
    try {
      return sketch::CountSketchParams(std::move(buckets), std::move(signs), d, seed);
    } catch (const std::invalid_argument& e) {
      throw CorruptFile(what + ": " + e.what());
    }
  }();
  if (sketch_checksum(params) != checksum) throw CorruptFile(what + ": checksum mismatch");
  return params;
}

void save_sketch(const std::filesystem::path& path, const sketch::CountSketchParams& params) {
  write_text(path, sketch_to_json(params));
}

sketch::CountSketchParams load_sketch(const std::filesystem::path& path) { return sketch_from_json(read_text(path)); }

void write_dataset(const std::filesystem::path& path, const tasks::Dataset& data) {
  std::ostringstream out;
  ordered_json header;
  header["format"] = kClassificationFormat;
  header["version"] = kFormatVersion;
  header["count"] = data.size();
  out << header.dump() << "\n";
  for (const auto& s : data) {
    ordered_json j;
    j["x"] = s.x;
    j["q"] = s.q;
    j["label"] = s.label;
    out << j.dump() << "\n";
  }
  write_text(path, out.str());
}

void write_dataset(const std::filesystem::path& path, const tasks::GroundingDataset& data) {
  std::ostringstream out;
  ordered_json header;
  header["format"] = kGroundingFormat;
  header["version"] = kFormatVersion;
  header["count"] = data.size();
  out << header.dump() << "\n";
  for (const auto& item : data) {
    ordered_json j;
    j["phrase"] = item.phrase;
    j["proposals"] = item.proposals;
    j["correct"] = item.correct;
    out << j.dump() << "\n";
  }
  write_text(path, out.str());
}

namespace {

template <typename Item, typename Decode>
std::vector<Item> read_lines(const std::filesystem::path& path, const char* format, Decode&& decode) {
  const std::string what = "dataset " + path.string();
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw CorruptFile(what + ": empty file");
  const auto header = parse_or_throw(line, what);
  check_header(header, format, what);
  const auto count = field<std::size_t>(header, "count", what);
  std::vector<Item> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(decode(parse_or_throw(line, what), what));
  }
  if (out.size() != count) throw CorruptFile(what + ": expected " + std::to_string(count) + " records");
  return out;
}

}  // namespace

tasks::Dataset read_classification_dataset(const std::filesystem::path& path) {
  return read_lines<tasks::Sample>(path, kClassificationFormat, [](const ordered_json& j, const std::string& what) {
    return tasks::Sample{field<RealVec>(j, "x", what), field<RealVec>(j, "q", what),
                         field<std::size_t>(j, "label", what)};
  });
}

tasks::GroundingDataset read_grounding_dataset(const std::filesystem::path& path) {
  return read_lines<tasks::GroundingItem>(path, kGroundingFormat, [](const ordered_json& j, const std::string& what) {
    return tasks::GroundingItem{field<RealVec>(j, "phrase", what), field<std::vector<RealVec>>(j, "proposals", what),
                                field<std::size_t>(j, "correct", what)};
  });
}

std::string report_csv(const harness::AblationReport& report) {
  std::ostringstream out;
  out << "version,kind,method,config,param_count,seed,train_accuracy,test_accuracy,best_epoch\n";
  for (const auto& r : report.rows) {
    out << kFormatVersion << ",run," << r.method << "," << r.config() << "," << r.param_count << "," << r.seed << ","
        << format_double(r.train_accuracy) << "," << format_double(r.test_accuracy) << "," << r.best_epoch << "\n";
  }
  for (const auto& s : report.summary) {
    out << kFormatVersion << ",mean," << s.method << "," << s.config << "," << s.param_count << ",,"
        << format_double(s.mean_train) << "," << format_double(s.mean_test) << ",\n";
    out << kFormatVersion << ",std," << s.method << "," << s.config << "," << s.param_count << ",,"
        << format_double(s.std_train) << "," << format_double(s.std_test) << ",\n";
  }
  return out.str();
}

std::string report_table(const harness::AblationReport& report) {
  std::ostringstream out;
  out << pad("method", 17) << pad("config", 12) << pad("params", 10) << pad("runs", 6) << pad("train", 18)
      << "test\n";
  char buf[64];
  for (const auto& s : report.summary) {
    out << pad(s.method, 17) << pad(s.config, 12) << pad(std::to_string(s.param_count), 10)
        << pad(std::to_string(s.runs), 6);
    std::snprintf(buf, sizeof buf, "%6.2f +- %-6.2f", 100.0 * s.mean_train, 100.0 * s.std_train);
    out << pad(buf, 18);
    std::snprintf(buf, sizeof buf, "%6.2f +- %.2f", 100.0 * s.mean_test, 100.0 * s.std_test);
    out << buf << "\n";
  }
  return out.str();
}

namespace {

ordered_json record_json(const ResultRecord& record) {
  ordered_json j;
  j["format"] = "mcb-result";
  j["version"] = kFormatVersion;
  j["command"] = record.command;
  j["seed"] = record.seed;
  j["config"] = record.config;
  auto& m = j["metrics"] = ordered_json::object();
  for (const auto& [k, v] : record.metrics) m[k] = v;
  for (const auto& [k, v] : record.extra.items()) j[k] = v;
  return j;
}

}  // namespace

std::string result_json(const ResultRecord& record) { return record_json(record).dump(2) + "\n"; }

std::string result_json(const ResultRecord& record, const harness::AblationReport& report) {
  auto j = record_json(record);
  auto& rows = j["rows"] = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row;
    row["method"] = r.method;
    row["config"] = r.config();
    row["param_count"] = r.param_count;
    row["seed"] = r.seed;
    row["train_accuracy"] = r.train_accuracy;
    row["test_accuracy"] = r.test_accuracy;
    row["best_epoch"] = r.best_epoch;
    rows.push_back(std::move(row));
  }
  auto& summary = j["summary"] = ordered_json::array();
  for (const auto& s : report.summary) {
    ordered_json row;
    row["method"] = s.method;
    row["config"] = s.config;
    row["param_count"] = s.param_count;
    row["runs"] = s.runs;
    row["mean_train_accuracy"] = s.mean_train;
    row["std_train_accuracy"] = s.std_train;
    row["mean_test_accuracy"] = s.mean_test;
    row["std_test_accuracy"] = s.std_test;
    summary.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string timing_json(const std::string& command, double wall_clock_ms) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  ordered_json j;
  j["format"] = "mcb-timing";
  j["version"] = kFormatVersion;
  j["command"] = command;
  j["wall_clock_ms"] = wall_clock_ms;
  j["timestamp"] = stamp;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace mcb::io
