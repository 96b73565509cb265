#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

#include "fvrm/rng.hpp"

namespace fvrm {

// ---------------------------------------------------------------------------
// Waiting-time laws
// ---------------------------------------------------------------------------

/// Law of a single displacement duration.
struct WaitingLaw {
  enum class Kind { Exponential, Gamma, Deterministic };
  Kind kind = Kind::Exponential;
  double rate = 1.0;   // Exponential / Gamma rate
  double shape = 1.0;  // Gamma shape
  double value = 1.0;  // Deterministic duration

  static WaitingLaw exponential(double rate);
  static WaitingLaw gamma(double shape, double rate);
  static WaitingLaw deterministic(double value);

  double sample(RngStream& rng) const;
  bool is_atomic() const { return kind == Kind::Deterministic; }
};

/// One waiting-time law per velocity index.
class WaitingTimeModel {
public:
  explicit WaitingTimeModel(std::vector<WaitingLaw> laws);

  /// All velocities exponential with the same rate.
  static WaitingTimeModel homogeneous_exponential(int num_velocities, double rate);
  /// Per-velocity exponential rates.
  static WaitingTimeModel exponential(const std::vector<double>& rates);

  int size() const { return int(laws_.size()); }
  const WaitingLaw& law(int h) const { return laws_[std::size_t(h)]; }
  bool has_atoms() const;
  bool all_exponential() const;

private:
  std::vector<WaitingLaw> laws_;
};

/// Density of W_1^(h) + ... + W_n^(h) at s (n >= 1). Erlang for exponential
/// laws, Gamma(n*shape, rate) for gamma laws. Throws AtomicLaw for
/// deterministic laws. Zero for s < 0.
double waiting_density(const WaitingTimeModel& model, int h, int n, double s);

/// P{ N_(h)(s) = n } for the renewal counting process of velocity h.
double counting_tail(const WaitingTimeModel& model, int h, double s, int n);

// ---------------------------------------------------------------------------
// Switching kernels
// ---------------------------------------------------------------------------

/// Initial law p and transition matrix P of the velocity chain at events.
class SwitchKernel {
public:
  enum class Kind { Cyclic, Complete, GeneralMarkov, Orthogonal };

  /// Deterministic cycle 0 -> 1 -> ... -> M -> 0.
  static SwitchKernel cyclic(Eigen::VectorXd initial);
  /// Switch law independent of the current velocity: p_{j,h} = p_h > 0.
  static SwitchKernel complete(Eigen::VectorXd probabilities);
  static SwitchKernel general_markov(Eigen::VectorXd initial, Eigen::MatrixXd transition);
  /// The planar four-direction kernel that always switches dimension:
  /// rows 0,2 go to {1,3} and rows 1,3 go to {0,2}, each with probability 1/2.
  static SwitchKernel orthogonal(std::optional<Eigen::VectorXd> initial = std::nullopt);

  Kind kind() const { return kind_; }
  int size() const { return int(initial_.size()); }
  const Eigen::VectorXd& initial() const { return initial_; }
  const Eigen::MatrixXd& transition() const { return transition_; }

  int sample_initial(RngStream& rng) const;

private:
  SwitchKernel(Kind kind, Eigen::VectorXd initial, Eigen::MatrixXd transition);
  Kind kind_;
  Eigen::VectorXd initial_;
  Eigen::MatrixXd transition_;
};

/// Next velocity index after an event, given current index j.
int next_velocity(const SwitchKernel& kernel, int j, RngStream& rng);

/// P{ C_n = (n_0, ..., n_M), V(t) = v_k } for n = sum of counts displacements.
/// Closed forms for Complete (multinomial) and Cyclic (consistency check);
/// dynamic programming over lattice paths otherwise.
/// Throws InconsistentCounts when n_k = 0.
double allocation_probability(const SwitchKernel& kernel, const std::vector<int>& counts, int k);

// ---------------------------------------------------------------------------
// Counting-process rate
// ---------------------------------------------------------------------------

/// Rate function lambda(t) of a non-homogeneous Poisson stream, with its
/// cumulative Lambda(t) and a finite envelope on bounded intervals.
class RateFunction {
public:
  static RateFunction constant(double rate);
  /// values[i] on [breakpoints[i], breakpoints[i+1]); the last value persists
  /// beyond the final breakpoint. breakpoints[0] must be 0.
  static RateFunction piecewise(std::vector<double> breakpoints, std::vector<double> values);
  /// Arbitrary rate with a known cumulative; sup_bound must dominate lambda
  /// on [0, t]. Pass cumulative = nullptr to integrate numerically.
  static RateFunction callable(std::function<double(double)> rate,
                               std::function<double(double)> cumulative,
                               std::function<double(double)> sup_bound);

  double lambda(double t) const;
  double cumulative(double t) const;
  /// Finite bound for lambda on [0, t]; throws UnboundedRate if unavailable.
  double sup_bound(double t) const;

  /// Rate scaled by a positive constant (used by conditional equivalence).
  RateFunction scaled(double factor) const;

  bool is_constant() const { return kind_ == Kind::Constant; }
  double constant_value() const { return values_.empty() ? 0.0 : values_[0]; }

private:
  enum class Kind { Constant, Piecewise, Callable };
  Kind kind_ = Kind::Constant;
  std::vector<double> breakpoints_;
  std::vector<double> values_;
  std::function<double(double)> rate_fn_;
  std::function<double(double)> cumulative_fn_;
  std::function<double(double)> sup_fn_;
};

/// Event times of the Poisson stream on (0, horizon], strictly increasing.
/// Homogeneous streams are sampled by exponential gaps; non-homogeneous ones
/// by thinning against a piecewise/constant envelope.
std::vector<double> sample_arrivals(const RateFunction& rate, double horizon, RngStream& rng);

} // namespace fvrm
