// fvrm: reproducible experiments on finite-velocity random motions.
//
// Subcommands: simulate, density, mass, verify, compare, project.
// Model/query/run parameters come from a JSON config (the reproducibility
// unit); command-line flags override only run-level knobs.
// Exit codes: 0 ok, 2 config error, 3 runtime error, 4 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fvrm/analytic.hpp"
#include "fvrm/config.hpp"
#include "fvrm/errors.hpp"
#include "fvrm/general_motion.hpp"
#include "fvrm/io.hpp"
#include "fvrm/math.hpp"
#include "fvrm/pde.hpp"
#include "fvrm/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  std::int64_t replicas = -1;
  double tol = -1.0;
  int workers = -1;
  bool raw = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "config file (JSON)")->required();
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "override run.seed");
  cmd->add_option("--replicas", flags.replicas, "override run.replicas");
  cmd->add_option("--tol", flags.tol, "override run.tolerance");
  cmd->add_option("--workers", flags.workers, "override run.workers");
  cmd->add_flag("--raw", flags.raw, "also write raw endpoint samples");
}

fvrm::ExperimentConfig load(const CommonFlags& flags) {
  fvrm::ExperimentConfig config = fvrm::load_config(flags.config_path);
  if (flags.seed >= 0) {
    config.seed = std::uint64_t(flags.seed);
    config.raw["run"]["seed"] = config.seed;
  }
  if (flags.replicas >= 0) {
    config.replicas = flags.replicas;
    config.raw["run"]["replicas"] = config.replicas;
  }
  if (flags.tol > 0.0) {
    config.tolerance = flags.tol;
    config.raw["run"]["tolerance"] = config.tolerance;
  }
  if (flags.workers > 0) config.workers = flags.workers;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  fs::create_directories(config.out_dir);
  return config;
}

std::string out_path(const fvrm::ExperimentConfig& config, const std::string& name) {
  return (fs::path(config.out_dir) / name).string();
}

double effective_lambda_t(const fvrm::ExperimentConfig& config) {
  if (config.model.has_rate()) return config.model.rate().cumulative(config.t);
  const fvrm::WaitingTimeModel& waiting = config.model.waiting();
  if (!waiting.all_exponential()) {
    throw fvrm::Error("mass formulas need a Poisson-rate representation");
  }
  const double lambda = waiting.law(0).rate;
  for (int h = 0; h < waiting.size(); ++h) {
    if (std::abs(waiting.law(h).rate - lambda) > 1e-12 * lambda) {
      throw fvrm::Error("mass formulas need a single homogeneous rate");
    }
  }
  return lambda * config.t;
}

int cmd_simulate(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  fvrm::GridSpec grid{config.grid_kind, config.bins};
  fvrm::McOptions options;
  options.workers = config.workers;
  options.track_joint_counts = config.track_joint_counts;
  const fvrm::MonteCarloSummary summary =
      fvrm::mc_summary(config.model, config.t, config.replicas, grid, config.seed, options);
  fvrm::write_summary_csv(summary, config.model.velocities(), out_path(config, "summary.csv"),
                          config.raw);
  fvrm::write_summary_json(summary, out_path(config, "summary.json"), config.raw);
  if (flags.raw) {
    fvrm::CsvWriter csv(out_path(config, "endpoints.csv"),
                        fvrm::artifact_metadata(config.raw, config.seed),
                        {"replica", "coordinates", "terminal"});
    for (std::int64_t r = 0; r < config.replicas; ++r) {
      fvrm::RngStream rng(config.seed, std::uint64_t(r));
      const fvrm::EndpointSample s = fvrm::simulate_endpoint(config.model, config.t, rng);
      std::string coords;
      for (int d = 0; d < s.x.size(); ++d) {
        coords += (d ? " " : "") + fvrm::format_number(s.x(d));
      }
      csv.row({std::to_string(r), coords, std::to_string(s.terminal)});
    }
  }
  return 0;
}

int cmd_density(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  const fvrm::VelocitySet& vs = config.model.velocities();
  fvrm::CsvWriter csv(out_path(config, "density.csv"),
                      fvrm::artifact_metadata(config.raw, config.seed),
                      {"region", "face", "coordinates", "value", "formula", "remainder_bound"});

  // evaluation points: explicit list, or centroids of the grid cells
  std::vector<Eigen::VectorXd> points = config.points;
  if (points.empty()) {
    if (vs.is_canonical()) {
      const fvrm::SimplexGrid grid(vs.dim(), config.bins, config.t);
      grid.for_each_cell([&](const std::vector<int>& key) { points.push_back(grid.cell_centroid(key)); });
    } else {
      const Eigen::VectorXd lo = vs.matrix().rowwise().minCoeff() * config.t;
      const Eigen::VectorXd hi = vs.matrix().rowwise().maxCoeff() * config.t;
      const fvrm::BoxGrid grid(lo, hi, config.bins);
      grid.for_each_cell([&](const std::vector<int>& key) { points.push_back(grid.cell_centroid(key)); });
    }
  }

  const bool minimal = config.model.is_minimal();
  for (const Eigen::VectorXd& x : points) {
    const fvrm::RegionClassification rc = fvrm::classify_point(vs, x, config.t);
    std::string coords;
    for (int d = 0; d < x.size(); ++d) coords += (d ? " " : "") + fvrm::format_number(x(d));
    std::string face_str;
    for (std::size_t i = 0; i < rc.face.size(); ++i) {
      face_str += (i ? " " : "") + std::to_string(rc.face[i]);
    }
    try {
      if (rc.kind == fvrm::RegionKind::Outside) {
        csv.row({"outside", "", coords, fvrm::format_number(0.0), "outside", fvrm::format_number(0.0)});
        continue;
      }
      if (rc.kind == fvrm::RegionKind::Vertex && minimal) {
        const double mass = fvrm::face_mass_complete(config.model.kernel().initial(),
                                                     effective_lambda_t(config), rc.face);
        csv.row({"vertex", face_str, coords, fvrm::format_number(mass), "vertex-mass",
                 fvrm::format_number(0.0)});
        continue;
      }
      if (!minimal) {
        const fvrm::NonminimalDensity nd =
            fvrm::nonminimal_density(config.model, config.t, x, config.tolerance);
        csv.row({fvrm::to_string(rc.kind), face_str, coords, fvrm::format_number(nd.value),
                 "subset-decomposition", fvrm::format_number(0.0)});
        continue;
      }
      fvrm::DensityValue dv;
      if (rc.kind == fvrm::RegionKind::Inner) {
        if (config.model.kernel().kind() == fvrm::SwitchKernel::Kind::Cyclic) {
          double total = 0.0, remainder = 0.0;
          int terms = 0;
          for (int j = 0; j <= vs.dim(); ++j) {
            const fvrm::DensityValue piece =
                fvrm::cyclic_density(config.model, config.t, x, j, config.tolerance);
            total += piece.value;
            remainder += piece.remainder_bound;
            terms += piece.terms_used;
          }
          dv.value = total;
          dv.formula = "cyclic-series";
          dv.remainder_bound = remainder;
          dv.terms_used = terms;
        } else {
          const fvrm::CompleteForm form = config.form == "integral"
                                              ? fvrm::CompleteForm::Integral
                                              : fvrm::CompleteForm::Series;
          dv = fvrm::complete_density(config.model, config.t, x, form, config.tolerance);
        }
      } else {
        // face point: report the face mass alongside the face set
        dv.value = fvrm::face_mass_complete(config.model.kernel().initial(),
                                            effective_lambda_t(config), rc.face);
        dv.formula = "face-mass";
        dv.face = rc.face;
      }
      csv.row({fvrm::to_string(rc.kind), face_str, coords, fvrm::format_number(dv.value),
               dv.formula, fvrm::format_number(dv.remainder_bound)});
    } catch (const fvrm::Error& e) {
      csv.row({"error", face_str, coords, fvrm::format_number(0.0), e.what(),
               fvrm::format_number(0.0)});
    }
  }
  return 0;
}

int cmd_mass(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  const fvrm::VelocitySet& vs = config.model.velocities();
  if (config.model.kernel().kind() != fvrm::SwitchKernel::Kind::Complete) {
    throw fvrm::Error("mass: closed-form masses require a complete kernel");
  }
  const double lambda_t = effective_lambda_t(config);
  const Eigen::VectorXd& p = config.model.kernel().initial();
  fvrm::CsvWriter csv(out_path(config, "mass.csv"),
                      fvrm::artifact_metadata(config.raw, config.seed),
                      {"region", "face", "mass", "formula"});
  const int n = vs.num_velocities();
  double total = 0.0;
  for (unsigned mask = 1; mask < (1u << unsigned(n)); ++mask) {
    std::vector<int> face;
    for (int h = 0; h < n; ++h) {
      if (mask & (1u << unsigned(h))) face.push_back(h);
    }
    const double mass = fvrm::face_mass_complete(p, lambda_t, face);
    total += mass;
    const char* kind = face.size() == 1 ? "vertex" : (int(face.size()) == n ? "inner" : "face");
    std::string face_str;
    for (std::size_t i = 0; i < face.size(); ++i) face_str += (i ? " " : "") + std::to_string(face[i]);
    csv.row({kind, face_str, fvrm::format_number(mass), "exact-velocity-set-mass"});
  }
  json doc{{"config", config.raw},
           {"lambda_t", lambda_t},
           {"total_mass", total},
           {"border_mass", fvrm::border_mass(p, lambda_t)}};
  fvrm::write_json_file(doc, out_path(config, "mass.json"));
  return 0;
}

int cmd_verify(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  json report;
  bool all_pass = true;

  {  // combinatorial identities on random instances
    fvrm::RngStream rng(config.seed, 0xA11C0DE);
    double worst = 0.0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
      const int H = 1 + int(rng.uniform() * 6.0);
      std::vector<double> c(static_cast<std::size_t>(H));
      for (double& v : c) v = 0.1 + 3.0 * rng.uniform();
      const int m = int(rng.uniform() * 9.0);
      const auto power = fvrm::identity_subset_power_sum(c, m);
      worst = std::max(worst, std::abs(power.lhs - power.rhs) / std::max(1.0, power.scale));
      const double beta = -1.0 + 2.0 * rng.uniform();
      const auto expo = fvrm::identity_exp_product(c, beta);
      worst = std::max(worst, std::abs(expo.lhs - expo.rhs) / std::max(1.0, expo.scale));
    }
    const bool pass = worst < 1e-9;
    all_pass = all_pass && pass;
    report["identities"] = {{"trials", trials}, {"max_relative_error", worst}, {"pass", pass}};
  }

  if (config.model.kernel().kind() == fvrm::SwitchKernel::Kind::Complete &&
      config.model.is_canonical() && config.model.velocities().dim() <= 2) {
    // PDE residual convergence for the D-th order equation
    const int D = config.model.velocities().dim();
    const double lambda = effective_lambda_t(config) / config.t;
    std::vector<fvrm::Rational> p_rat;
    for (int h = 0; h <= D; ++h) {
      p_rat.push_back(fvrm::Rational::from_double(config.model.kernel().initial()(h)));
    }
    const fvrm::OperatorPolynomial op =
        fvrm::build_dth_order_operator(D, fvrm::Rational::from_double(lambda), p_rat);
    const fvrm::MotionModel& model = config.model;
    auto density = [&](double t, const Eigen::VectorXd& x) {
      return fvrm::complete_density(model, t, x, fvrm::CompleteForm::Series, 1e-12).value;
    };
    auto residual_at = [&](double h) {
      fvrm::PdeStencil stencil;
      stencil.h_t = stencil.h_x = h;
      stencil.box_lo = Eigen::VectorXd(D + 1);
      stencil.box_hi = Eigen::VectorXd(D + 1);
      stencil.box_lo(0) = 0.9 * config.t;
      stencil.box_hi(0) = 1.1 * config.t;
      for (int d = 1; d <= D; ++d) {
        stencil.box_lo(d) = 0.25 * config.t / D;
        stencil.box_hi(d) = 0.45 * config.t / D;
      }
      stencil.points_per_axis = 3;
      return fvrm::residual_operator(op, density, stencil, &model);
    };
    const fvrm::ConvergenceTable table = fvrm::convergence_study(residual_at, 0.04 * config.t, 3);
    fvrm::CsvWriter csv(out_path(config, "pde_convergence.csv"),
                        fvrm::artifact_metadata(config.raw, config.seed),
                        {"spacing", "max_residual", "observed_order"});
    for (std::size_t i = 0; i < table.spacing.size(); ++i) {
      csv.row({fvrm::format_number(table.spacing[i]), fvrm::format_number(table.residual[i]),
               i == 0 ? "" : fvrm::format_number(table.observed_order[i - 1])});
    }
    bool pass = true;
    for (double order : table.observed_order) pass = pass && order > 1.5;
    all_pass = all_pass && pass;
    report["pde"] = {{"orders", table.observed_order}, {"pass", pass}};
  }

  if (config.face) {
    const fvrm::ConditionalEquivalenceReport ce = fvrm::conditional_equivalence(
        config.model, *config.face, config.t, config.replicas, config.seed);
    const bool pass = ce.probability_within_3_sigma && ce.ks_pass;
    all_pass = all_pass && pass;
    report["conditional_equivalence"] = {{"alpha", ce.alpha},
                                         {"analytic_probability", ce.analytic_probability},
                                         {"empirical_probability", ce.empirical_probability},
                                         {"accepted", ce.accepted},
                                         {"ks_statistic", ce.ks_statistic},
                                         {"ks_threshold", ce.ks_threshold},
                                         {"pass", pass}};
  }

  report["pass"] = all_pass;
  report["config"] = config.raw;
  fvrm::write_json_file(report, out_path(config, "verify.json"));
  return all_pass ? 0 : 4;
}

int cmd_compare(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  const fvrm::VelocitySet& vs = config.model.velocities();
  fvrm::GridSpec grid{config.grid_kind, config.bins};
  fvrm::McOptions options;
  options.workers = config.workers;
  const fvrm::MonteCarloSummary summary =
      fvrm::mc_summary(config.model, config.t, config.replicas, grid, config.seed, options);

  const bool minimal = config.model.is_minimal();
  std::function<double(const Eigen::VectorXd&)> density;
  if (minimal && config.model.kernel().kind() == fvrm::SwitchKernel::Kind::Cyclic) {
    density = [&](const Eigen::VectorXd& x) {
      return fvrm::cyclic_density_total(config.model, config.t, x, config.tolerance);
    };
  } else if (minimal && config.model.kernel().kind() == fvrm::SwitchKernel::Kind::Complete) {
    density = [&](const Eigen::VectorXd& x) {
      return fvrm::complete_density(config.model, config.t, x, fvrm::CompleteForm::Series,
                                    config.tolerance)
          .value;
    };
  } else {
    density = [&](const Eigen::VectorXd& x) {
      try {
        return fvrm::nonminimal_density(config.model, config.t, x, config.tolerance).value;
      } catch (const fvrm::OutsideSupport&) {
        return 0.0;
      }
    };
  }

  fvrm::CsvWriter csv(out_path(config, "compare.csv"),
                      fvrm::artifact_metadata(config.raw, config.seed),
                      {"bin", "expected_probability", "observed_frequency", "z_score"});
  std::int64_t bins_total = 0, bins_within = 0;

  // kink abscissae for 1-D box integrals: the scaled velocities
  std::vector<double> kinks;
  if (vs.dim() == 1) {
    for (int h = 0; h < vs.num_velocities(); ++h) kinks.push_back(vs.velocity(h)(0) * config.t);
  }

  auto process_bin = [&](const std::vector<int>& key, double expected) {
    std::int64_t observed = 0;
    if (auto it = summary.histogram.find(key); it != summary.histogram.end()) observed = it->second;
    const double freq = double(observed) / double(config.replicas);
    const double sigma = std::sqrt(std::max(expected * (1.0 - expected), 1e-300) /
                                   double(config.replicas));
    const double z = (freq - expected) / sigma;
    ++bins_total;
    if (std::abs(z) <= 3.0) ++bins_within;
    std::string key_str;
    for (std::size_t i = 0; i < key.size(); ++i) key_str += (i ? " " : "") + std::to_string(key[i]);
    csv.row({key_str, fvrm::format_number(expected), fvrm::format_number(freq),
             fvrm::format_number(z)});
  };

  if (summary.grid_kind == fvrm::GridSpec::Kind::Simplex) {
    const fvrm::SimplexGrid sg(vs.dim(), config.bins, config.t);
    sg.for_each_cell([&](const std::vector<int>& key) {
      const double expected = sg.cell_integral(key, density, config.tolerance);
      process_bin(key, expected);
    });
  } else {
    const fvrm::BoxGrid bg(summary.box_lo, summary.box_hi, config.bins);
    bg.for_each_cell([&](const std::vector<int>& key) {
      // interior cells only: corners and centre strictly inside the support
      Eigen::VectorXd lo, hi;
      bg.cell_bounds(key, lo, hi);
      const auto inside = [&](const Eigen::VectorXd& pt) {
        const fvrm::RegionClassification rc = fvrm::classify_point(vs, pt, config.t);
        return rc.kind == fvrm::RegionKind::Inner;
      };
      if (!inside(lo) || !inside(hi)) return;
      const double expected = bg.cell_integral(key, density, config.tolerance, kinks);
      process_bin(key, expected);
    });
  }

  const double fraction = bins_total ? double(bins_within) / double(bins_total) : 1.0;
  const bool pass = fraction >= 0.99;
  json doc{{"config", config.raw},
           {"bins", bins_total},
           {"bins_within_3_sigma", bins_within},
           {"fraction_within_3_sigma", fraction},
           {"pass", pass}};
  fvrm::write_json_file(doc, out_path(config, "compare.json"));
  return pass ? 0 : 4;
}

int cmd_project(const CommonFlags& flags) {
  const fvrm::ExperimentConfig config = load(flags);
  const fvrm::VelocitySet& vs = config.model.velocities();
  const int R = fvrm::state_space_dim(vs);
  json doc{{"config", config.raw}, {"dim", vs.dim()}, {"state_space_dim", R}};
  if (R >= 1) {
    const fvrm::ProjectionMap pm = fvrm::build_projection(vs);
    doc["projection_rows"] = pm.rows;
    json projected = json::array();
    for (int h = 0; h < vs.num_velocities(); ++h) {
      const Eigen::VectorXd v = pm.apply(vs.velocity(h));
      std::vector<double> row(v.data(), v.data() + v.size());
      projected.push_back(row);
    }
    doc["projected_velocities"] = projected;
  }
  doc["minimal"] = vs.is_minimal();
  fvrm::write_json_file(doc, out_path(config, "projection.json"));

  if (!config.points.empty()) {
    fvrm::CsvWriter csv(out_path(config, "classify.csv"),
                        fvrm::artifact_metadata(config.raw, config.seed),
                        {"coordinates", "kind", "face", "weights"});
    for (const Eigen::VectorXd& x : config.points) {
      const fvrm::RegionClassification rc = fvrm::classify_point(vs, x, config.t);
      std::string coords, face_str, weights;
      for (int d = 0; d < x.size(); ++d) coords += (d ? " " : "") + fvrm::format_number(x(d));
      for (std::size_t i = 0; i < rc.face.size(); ++i) {
        face_str += (i ? " " : "") + std::to_string(rc.face[i]);
      }
      for (int h = 0; h < rc.weights.size(); ++h) {
        weights += (h ? " " : "") + fvrm::format_number(rc.weights(h));
      }
      csv.row({coords, fvrm::to_string(rc.kind), face_str, weights});
    }
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite-velocity random motions: simulation, exact laws, verification"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo summary run");
  add_common(simulate, flags);
  auto* density = app.add_subcommand("density", "evaluate exact densities on a grid or points");
  add_common(density, flags);
  auto* mass = app.add_subcommand("mass", "face/vertex/inner probability masses");
  add_common(mass, flags);
  auto* verify = app.add_subcommand("verify", "identity, PDE and conditioning verifications");
  add_common(verify, flags);
  auto* compare = app.add_subcommand("compare", "density grid vs Monte Carlo histogram");
  add_common(compare, flags);
  auto* project = app.add_subcommand("project", "velocity-set geometry utilities");
  add_common(project, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (density->parsed()) return cmd_density(flags);
    if (mass->parsed()) return cmd_mass(flags);
    if (verify->parsed()) return cmd_verify(flags);
    if (compare->parsed()) return cmd_compare(flags);
    if (project->parsed()) return cmd_project(flags);
  } catch (const fvrm::ConfigError& e) {
    json err{{"error", {{"kind", "config"}, {"field", e.field}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    json err{{"error", {{"kind", "runtime"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
  return 0;
}
