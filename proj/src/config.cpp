#include "fvrm/config.hpp"

#include <fstream>

#include "fvrm/errors.hpp"

namespace fvrm {

namespace {

using nlohmann::json;

const json& require_field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError(path + "." + key, "missing required field");
  }
  return obj.at(key);
}

double number_at(const json& value, const std::string& path) {
  if (!value.is_number()) throw ConfigError(path, "expected a number");
  return value.get<double>();
}

std::vector<double> number_list(const json& value, const std::string& path) {
  if (!value.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(number_at(value.at(i), path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Eigen::VectorXd vector_at(const json& value, const std::string& path) {
  const auto nums = number_list(value, path);
  Eigen::VectorXd v(int(nums.size()));
  for (std::size_t i = 0; i < nums.size(); ++i) v(int(i)) = nums[i];
  return v;
}

Eigen::MatrixXd velocity_matrix(const json& value, const std::string& path) {
  if (!value.is_array() || value.empty()) throw ConfigError(path, "expected velocity rows");
  const std::size_t rows = value.size();
  std::vector<Eigen::VectorXd> parsed;
  for (std::size_t r = 0; r < rows; ++r) {
    parsed.push_back(vector_at(value.at(r), path + "[" + std::to_string(r) + "]"));
    if (parsed.back().size() != parsed.front().size()) {
      throw ConfigError(path, "velocity rows must share one dimension");
    }
  }
  // one velocity per row in the file; columns internally
  Eigen::MatrixXd V(parsed.front().size(), int(rows));
  for (std::size_t r = 0; r < rows; ++r) V.col(int(r)) = parsed[r];
  return V;
}

SwitchKernel parse_kernel(const json& doc, int num_velocities, const std::string& path) {
  const std::string kind = require_field(doc, "kind", path).get<std::string>();
  try {
    if (kind == "cyclic") {
      return SwitchKernel::cyclic(vector_at(require_field(doc, "initial", path), path + ".initial"));
    }
    if (kind == "complete") {
      return SwitchKernel::complete(
          vector_at(require_field(doc, "probabilities", path), path + ".probabilities"));
    }
    if (kind == "markov") {
      const json& rows = require_field(doc, "matrix", path);
      if (!rows.is_array()) throw ConfigError(path + ".matrix", "expected a matrix");
      Eigen::MatrixXd P(int(rows.size()), num_velocities);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::VectorXd row = vector_at(rows.at(r), path + ".matrix[" + std::to_string(r) + "]");
        if (row.size() != num_velocities) {
          throw ConfigError(path + ".matrix", "row length must match the velocity count");
        }
        P.row(int(r)) = row.transpose();
      }
      return SwitchKernel::general_markov(
          vector_at(require_field(doc, "initial", path), path + ".initial"), std::move(P));
    }
    if (kind == "orthogonal") {
      std::optional<Eigen::VectorXd> initial;
      if (doc.contains("initial")) initial = vector_at(doc.at("initial"), path + ".initial");
      return SwitchKernel::orthogonal(initial);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path + ".kind", "unknown kernel kind '" + kind + "'");
}

WaitingTimeModel parse_waiting(const json& doc, const std::string& path) {
  try {
    if (doc.is_object()) {
      const std::string kind = require_field(doc, "kind", path).get<std::string>();
      if (kind != "exponential") {
        throw ConfigError(path + ".kind", "grouped waiting laws support only 'exponential'");
      }
      return WaitingTimeModel::exponential(
          number_list(require_field(doc, "rates", path), path + ".rates"));
    }
    if (doc.is_array()) {
      std::vector<WaitingLaw> laws;
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string sub = path + "[" + std::to_string(i) + "]";
        const json& entry = doc.at(i);
        const std::string kind = require_field(entry, "kind", sub).get<std::string>();
        if (kind == "exponential") {
          laws.push_back(WaitingLaw::exponential(number_at(require_field(entry, "rate", sub), sub + ".rate")));
        } else if (kind == "gamma") {
          laws.push_back(WaitingLaw::gamma(number_at(require_field(entry, "shape", sub), sub + ".shape"),
                                           number_at(require_field(entry, "rate", sub), sub + ".rate")));
        } else if (kind == "deterministic") {
          laws.push_back(
              WaitingLaw::deterministic(number_at(require_field(entry, "value", sub), sub + ".value")));
        } else {
          throw ConfigError(sub + ".kind", "unknown waiting law '" + kind + "'");
        }
      }
      return WaitingTimeModel(std::move(laws));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path, "expected an object or an array of per-velocity laws");
}

RateFunction parse_rate(const json& doc, const std::string& path) {
  const std::string kind = require_field(doc, "kind", path).get<std::string>();
  try {
    if (kind == "constant") {
      return RateFunction::constant(number_at(require_field(doc, "value", path), path + ".value"));
    }
    if (kind == "piecewise") {
      return RateFunction::piecewise(
          number_list(require_field(doc, "breakpoints", path), path + ".breakpoints"),
          number_list(require_field(doc, "values", path), path + ".values"));
    }
    if (kind == "linear") {
      const double slope = number_at(require_field(doc, "slope", path), path + ".slope");
      const double intercept = doc.contains("intercept")
                                   ? number_at(doc.at("intercept"), path + ".intercept")
                                   : 0.0;
      if (slope < 0.0 || intercept < 0.0) {
        throw ConfigError(path, "linear rate requires nonnegative slope and intercept");
      }
      return RateFunction::callable(
          [slope, intercept](double s) { return slope * s + intercept; },
          [slope, intercept](double s) { return 0.5 * slope * s * s + intercept * s; },
          [slope, intercept](double s) { return slope * s + intercept; });
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path + ".kind", "unknown rate kind '" + kind + "'");
}

std::vector<int> int_list(const json& value, const std::string& path) {
  if (!value.is_array()) throw ConfigError(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value.at(i).is_number_integer()) {
      throw ConfigError(path + "[" + std::to_string(i) + "]", "expected an integer");
    }
    out.push_back(value.at(i).get<int>());
  }
  return out;
}

MotionModel parse_model(const json& doc, const std::string& path) {
  Eigen::MatrixXd V = velocity_matrix(require_field(doc, "velocities", path), path + ".velocities");
  VelocitySet vs = [&] {
    try {
      return VelocitySet(std::move(V));
    } catch (const std::exception& e) {
      throw ConfigError(path + ".velocities", e.what());
    }
  }();
  SwitchKernel kernel = parse_kernel(require_field(doc, "kernel", path), vs.num_velocities(),
                                     path + ".kernel");
  const bool has_waiting = doc.contains("waiting");
  const bool has_rate = doc.contains("rate");
  if (has_waiting == has_rate) {
    throw ConfigError(path, "exactly one of 'waiting' or 'rate' must drive the motion");
  }
  try {
    if (has_waiting) {
      return MotionModel(std::move(vs), std::move(kernel),
                         parse_waiting(doc.at("waiting"), path + ".waiting"));
    }
    return MotionModel(std::move(vs), std::move(kernel), parse_rate(doc.at("rate"), path + ".rate"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

} // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("$", "config must be a JSON object");
  ExperimentConfig out{doc, parse_model(require_field(doc, "model", "$"), "$.model")};

  if (doc.contains("query")) {
    const json& q = doc.at("query");
    if (!q.is_object()) throw ConfigError("$.query", "expected an object");
    if (q.contains("t")) out.t = number_at(q.at("t"), "$.query.t");
    if (out.t <= 0.0) throw ConfigError("$.query.t", "horizon must be positive");
    if (q.contains("bins")) {
      out.bins = q.at("bins").is_number_integer() ? q.at("bins").get<int>()
                                                  : throw ConfigError("$.query.bins", "expected an integer");
      if (out.bins < 1) throw ConfigError("$.query.bins", "need at least one bin");
    }
    if (q.contains("grid")) {
      const std::string g = q.at("grid").get<std::string>();
      if (g == "auto") {
        out.grid_kind = GridSpec::Kind::Auto;
      } else if (g == "simplex") {
        out.grid_kind = GridSpec::Kind::Simplex;
      } else if (g == "boxes") {
        out.grid_kind = GridSpec::Kind::Boxes;
      } else {
        throw ConfigError("$.query.grid", "unknown grid kind '" + g + "'");
      }
    }
    if (q.contains("points")) {
      const json& pts = q.at("points");
      if (!pts.is_array()) throw ConfigError("$.query.points", "expected an array of points");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        Eigen::VectorXd p = vector_at(pts.at(i), "$.query.points[" + std::to_string(i) + "]");
        if (p.size() != out.model.velocities().dim()) {
          throw ConfigError("$.query.points[" + std::to_string(i) + "]",
                            "point dimension must match the model");
        }
        out.points.push_back(std::move(p));
      }
    }
    if (q.contains("counts")) out.counts = int_list(q.at("counts"), "$.query.counts");
    if (q.contains("terminal")) out.terminal = q.at("terminal").get<int>();
    if (q.contains("form")) {
      out.form = q.at("form").get<std::string>();
      if (out.form != "series" && out.form != "integral" && out.form != "auto") {
        throw ConfigError("$.query.form", "expected series | integral | auto");
      }
    }
    if (q.contains("face")) {
      out.face = int_list(q.at("face"), "$.query.face");
      if (!std::is_sorted(out.face->begin(), out.face->end())) {
        throw ConfigError("$.query.face", "face indices must be sorted");
      }
      for (int i : *out.face) {
        if (i < 0 || i >= out.model.velocities().num_velocities()) {
          throw ConfigError("$.query.face", "face index out of range");
        }
      }
    }
    if (q.contains("residue")) out.residue = q.at("residue").get<int>();
  }

  if (doc.contains("run")) {
    const json& r = doc.at("run");
    if (!r.is_object()) throw ConfigError("$.run", "expected an object");
    if (r.contains("replicas")) {
      out.replicas = r.at("replicas").get<std::int64_t>();
      if (out.replicas < 1) throw ConfigError("$.run.replicas", "need at least one replica");
    }
    if (r.contains("seed")) out.seed = r.at("seed").get<std::uint64_t>();
    if (r.contains("tolerance")) {
      out.tolerance = number_at(r.at("tolerance"), "$.run.tolerance");
      if (out.tolerance <= 0.0) throw ConfigError("$.run.tolerance", "tolerance must be positive");
    }
    if (r.contains("workers")) {
      out.workers = r.at("workers").get<int>();
      if (out.workers < 1) throw ConfigError("$.run.workers", "need at least one worker");
    }
    if (r.contains("track_joint_counts")) {
      out.track_joint_counts = r.at("track_joint_counts").get<bool>();
    }
    if (r.contains("out")) out.out_dir = r.at("out").get<std::string>();
  }
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

} // namespace fvrm
