#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace fvrm {

/// The matrix of velocity column vectors plus derived affine geometry.
///
/// Column h of `V` is the velocity v_h in R^D. The motion's support at time t
/// is Conv(v_0 t, ..., v_M t); its dimension (the state-space dimension) is
/// the rank of the difference matrix [v_h - v_k], independent of the pivot k.
class VelocitySet {
public:
  explicit VelocitySet(Eigen::MatrixXd velocities, std::vector<std::string> labels = {});

  int dim() const { return int(V_.rows()); }             // D
  int num_velocities() const { return int(V_.cols()); }  // M + 1
  int top_index() const { return int(V_.cols()) - 1; }   // M
  const Eigen::MatrixXd& matrix() const { return V_; }
  Eigen::VectorXd velocity(int h) const { return V_.col(h); }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Largest velocity column norm; the length scale for tolerances.
  double scale() const { return scale_; }

  /// True when there are D+1 affinely independent velocities.
  bool is_minimal() const;

  /// True for the canonical set (0, e_1, ..., e_D).
  bool is_canonical() const;

  /// Velocity set restricted to the given (sorted) indices.
  VelocitySet subset(const std::vector<int>& indices) const;

private:
  Eigen::MatrixXd V_;
  std::vector<std::string> labels_;
  double scale_;
};

/// Coordinate-selecting projection p_R(x) = [e_i]^T_{i in rows} x.
struct ProjectionMap {
  int source_dim = 0;
  int target_dim = 0;
  std::vector<int> rows;  // sorted row index set I^R

  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  bool is_identity() const { return source_dim == target_dim; }
};

enum class RegionKind { Vertex, Face, Inner, Outside, BoundaryDegenerate };

std::string to_string(RegionKind kind);

struct RegionClassification {
  RegionKind kind = RegionKind::Outside;
  std::vector<int> face;       // velocity indices spanning the region
  Eigen::VectorXd weights;     // minimal-support barycentric weights, size M+1
};

/// Classification tolerances. A weight w is zero when |w| <= zero_tol,
/// positive when w > positive_tol; values in between are ambiguous and make
/// the whole classification BoundaryDegenerate.
struct ClassifyTolerances {
  double zero_tol = 1e-12;
  double positive_tol = 1e-9;
  double feasibility_tol = 1e-9;
};

/// dim(Conv(v_0, ..., v_M)) = rank [v_h - v_0]_{h=1..M}.
int state_space_dim(const VelocitySet& vs);

/// Rank of the difference matrix of an arbitrary D x (M+1) column set,
/// with the same pivoted elimination and tolerance rule as state_space_dim.
int affine_rank(const Eigen::MatrixXd& columns);

/// Index set of the first `rank` linearly independent rows of `A`, in order.
std::vector<int> first_independent_rows(const Eigen::MatrixXd& A, int rank, double tol);

/// Builds the projection of Lemma-1 type: rows I^R are the first R linearly
/// independent rows of [v_h - v_k], verified to be identical for every pivot
/// k. Throws DegenerateSet when all velocities coincide.
ProjectionMap build_projection(const VelocitySet& vs);

/// Unique x in Conv(v_0 t, ..., v_M t) with p_R(x) = x_R.
/// Throws OutsideHull when x_R is not in the projected hull.
Eigen::VectorXd lift_point(const ProjectionMap& pm, const VelocitySet& vs,
                           const Eigen::VectorXd& x_R, double t = 1.0);

/// Locates x relative to the decomposition of Conv(v_0 t, ..., v_M t) into
/// vertices, relative interiors of faces, and the relative interior of the
/// hull itself. Weights follow the minimal-support rule (smallest support,
/// lexicographic tie-break), which is vacuous for minimal sets.
RegionClassification classify_point(const VelocitySet& vs, const Eigen::VectorXd& x, double t,
                                    const ClassifyTolerances& tol = {});

/// Minimal-support barycentric weights of x in Conv(v_0 t, ..., v_M t).
/// Throws OutsideHull when infeasible.
Eigen::VectorXd barycentric_min_support(const VelocitySet& vs, const Eigen::VectorXd& x,
                                        double t, const ClassifyTolerances& tol = {});

} // namespace fvrm
