#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "fvrm/analytic.hpp"
#include "fvrm/simulator.hpp"

namespace fvrm {

/// A non-minimal motion (M > D velocities spanning R^D) together with a
/// minimal companion in R^M whose first D coordinates reproduce it.
struct LiftedModel {
  MotionModel original;
  VelocitySet lifted;  // M+1 affinely independent columns in R^M
  int original_dim = 0;

  /// Truncation pi_D to the first original_dim coordinates.
  Eigen::VectorXd truncate(const Eigen::VectorXd& lifted_point) const;

  /// The lifted motion as a model (same kernel and displacement driver).
  MotionModel lifted_model() const;
};

/// Lifts a motion with M > D velocities and full-dimensional state space to a
/// minimal motion in R^M. Tail coordinates come from scaled canonical rows
/// chosen, in index order, whenever they are independent of the rows already
/// present in the bordered velocity matrix; already-minimal motions lift to
/// themselves. The choice is deterministic; any valid lift yields the same
/// marginal law.
LiftedModel lift_model(const MotionModel& model);

/// Projects a motion whose state space has dimension R < D down to R
/// coordinates. Throws AlreadyFullDim when R = D.
std::pair<ProjectionMap, MotionModel> reduce_model(const MotionModel& model);

struct SubsetContribution {
  std::vector<int> subset;
  double value = 0.0;
  std::string method;  // "direct", "fiber", or "singular-face"
  int dimension = 0;   // dim Conv of the subset's velocities
};

struct NonminimalDensity {
  double value = 0.0;  // absolutely continuous density at x
  std::vector<SubsetContribution> breakdown;
};

/// Density of a motion with an arbitrary number of velocities at an inner
/// point x: enumerates every velocity subset whose face relative-interior
/// contains x, evaluates full-dimensional subsets directly (affinely
/// independent case) or by fiber integration of the lifted minimal density,
/// and totals them. Lower-dimensional subsets through x are reported in the
/// breakdown as singular faces but do not enter the total.
NonminimalDensity nonminimal_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                     double tol = 1e-9);

} // namespace fvrm
