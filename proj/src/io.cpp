#include "fvrm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fvrm/grid.hpp"

namespace fvrm {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", value);
  return buf;
}

struct CsvWriter::Impl {
  std::ofstream out;
  std::size_t columns = 0;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& metadata,
                     const std::vector<std::string>& header)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);  // binary: byte-identical across platforms
  if (!impl_->out) throw std::runtime_error("CsvWriter: cannot open '" + path + "'");
  for (const std::string& line : metadata) impl_->out << "# " << line << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    impl_->out << (i ? "," : "") << header[i];
  }
  impl_->out << "\n";
  impl_->columns = header.size();
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != impl_->columns) throw std::runtime_error("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    impl_->out << (i ? "," : "") << cells[i];
  }
  impl_->out << "\n";
}

std::vector<std::string> artifact_metadata(const nlohmann::json& config, std::uint64_t seed) {
  return {
      "config: " + config.dump(),
      "seed: " + std::to_string(seed),
  };
}

namespace {

std::string join_indices(const std::vector<int>& indices) {
  std::ostringstream os;
  for (std::size_t i = 0; i < indices.size(); ++i) os << (i ? " " : "") << indices[i];
  return os.str();
}

} // namespace

void write_summary_csv(const MonteCarloSummary& summary, const VelocitySet& velocities,
                       const std::string& path, const nlohmann::json& config) {
  CsvWriter csv(path, artifact_metadata(config, summary.seed),
                {"region", "velocity_set_or_bin", "coordinates", "count", "frequency"});

  for (const auto& [used, count] : summary.region_counts) {
    const char* kind = used.size() == 1 ? "vertex"
                       : int(used.size()) == velocities.num_velocities() ? "inner"
                                                                         : "face";
    csv.row({kind, join_indices(used), "", CsvWriter::cell(count),
             CsvWriter::cell(summary.frequency(count))});
  }
  std::optional<SimplexGrid> simplex;
  std::optional<BoxGrid> boxes;
  if (summary.grid_kind == GridSpec::Kind::Simplex) {
    simplex.emplace(velocities.dim(), summary.bins, summary.t);
  } else {
    boxes.emplace(summary.box_lo, summary.box_hi, summary.bins);
  }
  for (const auto& [key, count] : summary.histogram) {
    const Eigen::VectorXd centre = simplex ? simplex->cell_centroid(key) : boxes->cell_centroid(key);
    std::ostringstream coords;
    for (int d = 0; d < centre.size(); ++d) coords << (d ? " " : "") << format_number(centre(d));
    csv.row({"bin", join_indices(key), coords.str(), CsvWriter::cell(count),
             CsvWriter::cell(summary.frequency(count))});
  }
  if (summary.boundary_degenerate > 0) {
    csv.row({"boundary-degenerate", "", "", CsvWriter::cell(summary.boundary_degenerate),
             CsvWriter::cell(summary.frequency(summary.boundary_degenerate))});
  }
}

void write_summary_json(const MonteCarloSummary& summary, const std::string& path,
                        const nlohmann::json& config) {
  nlohmann::json doc;
  doc["config"] = config;
  doc["seed"] = summary.seed;
  doc["replicas"] = summary.replicas;
  doc["t"] = summary.t;
  doc["bins"] = summary.bins;
  doc["grid"] = summary.grid_kind == GridSpec::Kind::Simplex ? "simplex" : "boxes";
  doc["boundary_degenerate"] = summary.boundary_degenerate;
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& [used, count] : summary.region_counts) {
    regions.push_back({{"velocities", used}, {"count", count}});
  }
  doc["regions"] = regions;
  nlohmann::json occupation = nlohmann::json::array();
  for (int h = 0; h < summary.occupation_sum.size(); ++h) {
    occupation.push_back(summary.occupation_sum(h) / double(summary.replicas));
  }
  doc["mean_occupation"] = occupation;
  write_json_file(doc, path);
}

void write_json_file(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_json_file: cannot open '" + path + "'");
  out << doc.dump(2) << "\n";
}

} // namespace fvrm
