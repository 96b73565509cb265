#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fvrm/simulator.hpp"

namespace fvrm {

/// Scientific notation with 17 significant digits (round-trip exact).
std::string format_number(double value);

/// CSV writer with '#'-prefixed metadata lines before the header row.
/// UTF-8, '.' decimal point, deterministic output.
class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::vector<std::string>& metadata,
            const std::vector<std::string>& header);
  ~CsvWriter();

  void row(const std::vector<std::string>& cells);
  static std::string cell(double value) { return format_number(value); }
  static std::string cell(std::int64_t value) { return std::to_string(value); }

private:
  struct Impl;
  Impl* impl_;
};

/// One '# key: value'-style metadata line embedding the config and seed so
/// any artifact can be regenerated bit-identically.
std::vector<std::string> artifact_metadata(const nlohmann::json& config, std::uint64_t seed);

/// Summary CSV: one row per region (kind, velocity set or bin centre,
/// count, frequency) plus JSON metadata alongside.
void write_summary_csv(const MonteCarloSummary& summary, const VelocitySet& velocities,
                       const std::string& path, const nlohmann::json& config);
void write_summary_json(const MonteCarloSummary& summary, const std::string& path,
                        const nlohmann::json& config);

void write_json_file(const nlohmann::json& doc, const std::string& path);

} // namespace fvrm
