#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fvrm/geometry.hpp"
#include "fvrm/grid.hpp"
#include "fvrm/rng.hpp"
#include "fvrm/stochastic.hpp"

namespace fvrm {

/// A finite-velocity random motion: velocities, switching kernel, and the
/// displacement driver. Exactly one driver is set:
///  - per-velocity renewal waiting laws (displacement durations drawn from
///    the law of the current velocity), or
///  - a Poisson event stream with the given rate function.
/// A homogeneous Poisson stream with rate r is equivalent to exponential
/// waiting laws with rate r for every velocity.
class MotionModel {
public:
  MotionModel(VelocitySet velocities, SwitchKernel kernel, WaitingTimeModel waiting);
  MotionModel(VelocitySet velocities, SwitchKernel kernel, RateFunction rate);

  const VelocitySet& velocities() const { return velocities_; }
  const SwitchKernel& kernel() const { return kernel_; }
  bool has_waiting_model() const { return waiting_.has_value(); }
  const WaitingTimeModel& waiting() const { return *waiting_; }
  bool has_rate() const { return rate_.has_value(); }
  const RateFunction& rate() const { return *rate_; }

  bool is_minimal() const { return velocities_.is_minimal(); }
  bool is_canonical() const { return velocities_.is_canonical(); }

  /// Per-velocity waiting laws usable by the exact distribution formulas.
  /// For a renewal driver this is the model itself; a constant-rate Poisson
  /// driver is equivalent to homogeneous exponential laws. Throws for
  /// non-constant rates, which admit no per-velocity renewal form.
  WaitingTimeModel analytic_waiting() const;

private:
  VelocitySet velocities_;
  SwitchKernel kernel_;
  std::optional<WaitingTimeModel> waiting_;
  std::optional<RateFunction> rate_;
};

/// One sample path up to the horizon.
struct Trajectory {
  std::vector<double> switch_times;   // T_0 = 0 < T_1 < ... <= horizon
  std::vector<int> velocity_indices;  // velocity of displacement i (size N+1)
  Eigen::VectorXd occupation;         // time spent with each velocity
  std::vector<int> counts;            // displacements begun per velocity
  Eigen::VectorXd endpoint;           // X(horizon)
  int terminal = 0;
  double horizon = 0.0;

  int num_events() const { return int(switch_times.size()) - 1; }
};

Trajectory simulate_path(const MotionModel& model, double t, RngStream& rng);

/// Endpoint-only sample for mass/histogram runs.
struct EndpointSample {
  Eigen::VectorXd x;
  Eigen::VectorXd occupation;
  std::uint32_t used_mask = 0;
  int terminal = 0;
  int events = 0;
};

EndpointSample simulate_endpoint(const MotionModel& model, double t, RngStream& rng);

/// (t, X) = [1^T; V] T_(.)
std::pair<double, Eigen::VectorXd> occupation_to_position(const VelocitySet& vs,
                                                          const Eigen::VectorXd& occupation);

/// Occupation vector of a minimal motion from its position: the inverse of
/// the bordered velocity matrix applied to (t, x). Canonical sets shortcut to
/// (t - sum x, x). Throws NotMinimal / OutsideHull.
Eigen::VectorXd position_to_occupation(const VelocitySet& vs, double t, const Eigen::VectorXd& x);

/// Transport of a sample of a minimal motion onto the motion with the given
/// target velocities sharing the same switching statistics:
/// x' = V' [1^T; V]^{-1} (t, x).
Eigen::VectorXd canonical_transport(const VelocitySet& source, const Eigen::MatrixXd& target,
                                    double t, const Eigen::VectorXd& x);

struct GridSpec {
  enum class Kind { Auto, Simplex, Boxes };
  Kind kind = Kind::Auto;
  int bins = 20;
};

struct McOptions {
  int workers = 1;
  bool track_joint_counts = false;  // per-(counts, terminal) frequencies
};

/// Monte Carlo summary over a fixed grid. All tallies are integers so the
/// merged result is bit-identical for any worker count; chunks of fixed size
/// are merged in index order.
struct MonteCarloSummary {
  double t = 0.0;
  std::int64_t replicas = 0;
  std::uint64_t seed = 0;
  GridSpec::Kind grid_kind = GridSpec::Kind::Auto;
  int bins = 0;
  Eigen::VectorXd box_lo, box_hi;  // box grids only

  // samples whose used-velocity set spans the full state-space dimension,
  // binned by position
  std::map<std::vector<int>, std::int64_t> histogram;
  // all samples keyed by the exact (sorted) set of velocities used
  std::map<std::vector<int>, std::int64_t> region_counts;
  // samples with an occupation weight inside the ambiguous band
  std::int64_t boundary_degenerate = 0;
  // optional joint (counts vector, terminal) tallies
  std::map<std::pair<std::vector<int>, int>, std::int64_t> joint_counts;
  // per-velocity occupation-time totals (merged in chunk order)
  Eigen::VectorXd occupation_sum;

  double frequency(std::int64_t count) const { return double(count) / double(replicas); }
};

MonteCarloSummary mc_summary(const MotionModel& model, double t, std::int64_t replicas,
                             const GridSpec& grid, std::uint64_t seed, const McOptions& options = {});

} // namespace fvrm
