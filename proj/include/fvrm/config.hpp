#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fvrm/simulator.hpp"

namespace fvrm {

/// Parsed and validated experiment configuration. The JSON document is the
/// reproducibility unit: every output embeds it together with the seed.
struct ExperimentConfig {
  nlohmann::json raw;

  // model
  MotionModel model;

  // query
  double t = 1.0;
  int bins = 20;
  GridSpec::Kind grid_kind = GridSpec::Kind::Auto;
  std::vector<Eigen::VectorXd> points;
  std::optional<std::vector<int>> counts;
  std::optional<int> terminal;
  std::string form = "auto";  // series | integral | auto
  std::optional<std::vector<int>> face;
  std::optional<int> residue;

  // run
  std::int64_t replicas = 10000;
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
  int workers = 1;
  bool track_joint_counts = false;
  std::string out_dir = ".";
};

/// Parses a config document; throws ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads and parses a config file.
ExperimentConfig load_config(const std::string& path);

} // namespace fvrm
