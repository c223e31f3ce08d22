#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "mcb/harness.hpp"
#include "mcb/sketch.hpp"
#include "mcb/tasks.hpp"

namespace mcb::io {

inline constexpr int kFormatVersion = 1;

/// Sketch parameters as versioned JSON: 1-based h, +-1 s, FNV-1a checksum.
std::string sketch_to_json(const sketch::CountSketchParams& params);
/// Throws CorruptFile on malformed content, unknown versions or a bad checksum.
sketch::CountSketchParams sketch_from_json(const std::string& text);

void save_sketch(const std::filesystem::path& path, const sketch::CountSketchParams& params);
sketch::CountSketchParams load_sketch(const std::filesystem::path& path);

/// "fnv1a64:<16 hex digits>" over the canonical field serialization.
std::string sketch_checksum(const sketch::CountSketchParams& params);

/// JSON lines: a header record with format and version, then one record per item.
void write_dataset(const std::filesystem::path& path, const tasks::Dataset& data);
void write_dataset(const std::filesystem::path& path, const tasks::GroundingDataset& data);
tasks::Dataset read_classification_dataset(const std::filesystem::path& path);
tasks::GroundingDataset read_grounding_dataset(const std::filesystem::path& path);

/// %.17g.
std::string format_double(double value);

/// Deterministic CSV: run rows followed by mean and std rows per configuration.
std::string report_csv(const harness::AblationReport& report);
/// Aligned plain-text table for terminals.
std::string report_table(const harness::AblationReport& report);

/// Everything about a command run that is a function of its inputs.
/// Wall-clock and timestamp live in a separate timing record so that reruns
/// produce byte-identical result files.
struct ResultRecord {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, double> metrics;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

std::string result_json(const ResultRecord& record);
std::string result_json(const ResultRecord& record, const harness::AblationReport& report);
std::string timing_json(const std::string& command, double wall_clock_ms);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mcb::io
