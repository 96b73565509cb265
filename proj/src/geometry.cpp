#include "fvrm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>

#include "fvrm/errors.hpp"

namespace fvrm {

namespace {

constexpr double kRankTolFactor = 1e-9;

// Difference matrix [v_h - v_k]_{h != k}, columns in increasing h.
Eigen::MatrixXd difference_matrix(const Eigen::MatrixXd& V, int k) {
  const int D = int(V.rows());
  const int cols = int(V.cols()) - 1;
  Eigen::MatrixXd A(D, cols);
  int c = 0;
  for (int h = 0; h < int(V.cols()); ++h) {
    if (h == k) continue;
    A.col(c++) = V.col(h) - V.col(k);
  }
  return A;
}

// Rank by column-pivoted elimination: repeatedly pick the remaining column of
// largest norm, orthogonalize the rest against it. Tolerance is relative to
// the largest original column norm.
int pivoted_rank(Eigen::MatrixXd A) {
  if (A.cols() == 0 || A.rows() == 0) return 0;
  double max_norm = 0.0;
  for (int c = 0; c < A.cols(); ++c) max_norm = std::max(max_norm, A.col(c).norm());
  if (max_norm == 0.0) return 0;
  const double tol = kRankTolFactor * max_norm;
  int rank = 0;
  std::vector<bool> used(std::size_t(A.cols()), false);
  for (;;) {
    int best = -1;
    double best_norm = tol;
    for (int c = 0; c < A.cols(); ++c) {
      if (used[std::size_t(c)]) continue;
      const double n = A.col(c).norm();
      if (n > best_norm) {
        best_norm = n;
        best = c;
      }
    }
    if (best < 0) break;
    used[std::size_t(best)] = true;
    ++rank;
    const Eigen::VectorXd q = A.col(best) / best_norm;
    for (int c = 0; c < A.cols(); ++c) {
      if (!used[std::size_t(c)]) A.col(c) -= q * q.dot(A.col(c));
    }
  }
  return rank;
}

// All size-k index combinations of {0, ..., n-1} in lexicographic order.
void for_each_combination(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[std::size_t(i)] = i;
  if (k > n) return;
  for (;;) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[std::size_t(i)] == n - k + i) --i;
    if (i < 0) break;
    ++idx[std::size_t(i)];
    for (int j = i + 1; j < k; ++j) idx[std::size_t(j)] = idx[std::size_t(j - 1)] + 1;
  }
}

struct BasicSolutions {
  // First (minimal-support, lexicographically earliest) feasible solution.
  std::optional<Eigen::VectorXd> min_support;
  // Mean of all basic feasible solutions; its support is the union of the
  // supports achievable by any barycentric representation of x.
  Eigen::VectorXd average;
  int count = 0;
};

// Enumerates basic feasible solutions of { w >= 0, sum w = 1, V t w = x }.
// Bases are affinely independent velocity subsets of size <= rank+1, visited
// by increasing cardinality then lexicographic order.
BasicSolutions enumerate_basic_solutions(const VelocitySet& vs, const Eigen::VectorXd& x,
                                         double t, double feas_tol) {
  const int n = vs.num_velocities();
  const int R = state_space_dim(vs);
  const double scale = std::max(1.0, vs.scale() * std::max(t, 1.0));
  const double residual_tol = 1e-9 * scale;

  BasicSolutions out;
  out.average = Eigen::VectorXd::Zero(n);

  for (int card = 1; card <= std::min(n, R + 1); ++card) {
    for_each_combination(n, card, [&](const std::vector<int>& subset) {
      // affine independence of the chosen velocities
      Eigen::MatrixXd cols(vs.dim(), card);
      for (int i = 0; i < card; ++i) cols.col(i) = vs.velocity(subset[std::size_t(i)]);
      if (affine_rank(cols) != card - 1) return;

      // solve [1^T; V_S t] w_S = (1, x) in the least-squares sense and check
      // the residual: consistent iff x lies in the affine hull of the subset
      Eigen::MatrixXd A(vs.dim() + 1, card);
      Eigen::VectorXd b(vs.dim() + 1);
      A.row(0).setOnes();
      b(0) = 1.0;
      for (int i = 0; i < card; ++i) A.block(1, i, vs.dim(), 1) = cols.col(i) * t;
      b.tail(vs.dim()) = x;
      const Eigen::VectorXd w_S = A.colPivHouseholderQr().solve(b);
      if ((A * w_S - b).norm() > residual_tol) return;
      for (int i = 0; i < card; ++i) {
        if (w_S(i) < -feas_tol) return;
      }
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < card; ++i) w(subset[std::size_t(i)]) = std::max(w_S(i), 0.0);
      if (!out.min_support) out.min_support = w;
      out.average += w;
      ++out.count;
    });
  }
  if (out.count > 0) out.average /= double(out.count);
  return out;
}

} // namespace

VelocitySet::VelocitySet(Eigen::MatrixXd velocities, std::vector<std::string> labels)
    : V_(std::move(velocities)), labels_(std::move(labels)) {
  if (V_.rows() < 1 || V_.cols() < 1) {
    throw std::invalid_argument("VelocitySet: empty velocity matrix");
  }
  if (!labels_.empty() && int(labels_.size()) != int(V_.cols())) {
    throw std::invalid_argument("VelocitySet: label count does not match velocity count");
  }
  scale_ = 0.0;
  for (int c = 0; c < V_.cols(); ++c) scale_ = std::max(scale_, V_.col(c).norm());
  const double tol = 1e-12 * std::max(1.0, scale_);
  for (int a = 0; a < V_.cols(); ++a) {
    for (int b = a + 1; b < V_.cols(); ++b) {
      if ((V_.col(a) - V_.col(b)).norm() <= tol) {
        throw std::invalid_argument("VelocitySet: velocities " + std::to_string(a) + " and " +
                                    std::to_string(b) + " coincide");
      }
    }
  }
}

bool VelocitySet::is_minimal() const {
  return top_index() == dim() && state_space_dim(*this) == dim();
}

bool VelocitySet::is_canonical() const {
  if (top_index() != dim()) return false;
  Eigen::MatrixXd E(dim(), dim() + 1);
  E.setZero();
  E.block(0, 1, dim(), dim()).setIdentity();
  return (V_ - E).norm() == 0.0;
}

VelocitySet VelocitySet::subset(const std::vector<int>& indices) const {
  Eigen::MatrixXd W(dim(), int(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) W.col(int(i)) = V_.col(indices[i]);
  return VelocitySet(std::move(W));
}

Eigen::MatrixXd ProjectionMap::matrix() const {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(target_dim, source_dim);
  for (int r = 0; r < target_dim; ++r) P(r, rows[std::size_t(r)]) = 1.0;
  return P;
}

Eigen::VectorXd ProjectionMap::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(target_dim);
  for (int r = 0; r < target_dim; ++r) y(r) = x(rows[std::size_t(r)]);
  return y;
}

std::string to_string(RegionKind kind) {
  switch (kind) {
    case RegionKind::Vertex: return "vertex";
    case RegionKind::Face: return "face";
    case RegionKind::Inner: return "inner";
    case RegionKind::Outside: return "outside";
    case RegionKind::BoundaryDegenerate: return "boundary-degenerate";
  }
  return "?";
}

int state_space_dim(const VelocitySet& vs) {
  return pivoted_rank(difference_matrix(vs.matrix(), 0));
}

int affine_rank(const Eigen::MatrixXd& columns) {
  if (columns.cols() <= 1) return 0;
  Eigen::MatrixXd A(columns.rows(), columns.cols() - 1);
  for (int c = 1; c < columns.cols(); ++c) A.col(c - 1) = columns.col(c) - columns.col(0);
  return pivoted_rank(A);
}

std::vector<int> first_independent_rows(const Eigen::MatrixXd& A, int rank, double tol) {
  std::vector<int> rows;
  std::vector<Eigen::VectorXd> basis;  // orthonormal basis of the selected row space
  for (int r = 0; r < A.rows() && int(rows.size()) < rank; ++r) {
    Eigen::VectorXd v = A.row(r).transpose();
    for (const auto& q : basis) v -= q * q.dot(v);
    if (v.norm() > tol) {
      basis.push_back(v / v.norm());
      rows.push_back(r);
    }
  }
  return rows;
}

ProjectionMap build_projection(const VelocitySet& vs) {
  const int R = state_space_dim(vs);
  if (R == 0) throw DegenerateSet("build_projection: all velocities coincide");
  if (R == vs.dim()) {
    ProjectionMap pm;
    pm.source_dim = pm.target_dim = vs.dim();
    pm.rows.resize(std::size_t(R));
    for (int r = 0; r < R; ++r) pm.rows[std::size_t(r)] = r;
    return pm;
  }
  const double tol = kRankTolFactor * std::max(1.0, vs.scale());
  std::optional<std::vector<int>> common;
  // Lemma-1 asserts the row set is pivot-independent; verify rather than trust.
  for (int k = 0; k < vs.num_velocities(); ++k) {
    auto rows = first_independent_rows(difference_matrix(vs.matrix(), k), R, tol);
    if (int(rows.size()) != R) {
      throw Error("build_projection: could not find " + std::to_string(R) +
                  " independent rows for pivot " + std::to_string(k));
    }
    if (!common) {
      common = rows;
    } else if (*common != rows) {
      throw Error("build_projection: row sets differ between pivots 0 and " + std::to_string(k));
    }
  }
  ProjectionMap pm;
  pm.source_dim = vs.dim();
  pm.target_dim = R;
  pm.rows = *common;
  return pm;
}

Eigen::VectorXd barycentric_min_support(const VelocitySet& vs, const Eigen::VectorXd& x,
                                        double t, const ClassifyTolerances& tol) {
  if (x.size() != vs.dim()) throw std::invalid_argument("barycentric: dimension mismatch");
  if (t == 0.0) {
    if (x.norm() <= tol.feasibility_tol * std::max(1.0, vs.scale())) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(vs.num_velocities());
      w(0) = 1.0;
      return w;
    }
    throw OutsideHull("barycentric: t = 0 support is the origin only");
  }
  auto sols = enumerate_basic_solutions(vs, x, t, tol.feasibility_tol);
  if (!sols.min_support) throw OutsideHull("barycentric: point outside the hull");
  return *sols.min_support;
}

Eigen::VectorXd lift_point(const ProjectionMap& pm, const VelocitySet& vs,
                           const Eigen::VectorXd& x_R, double t) {
  if (x_R.size() != pm.target_dim) throw std::invalid_argument("lift_point: dimension mismatch");
  if (pm.is_identity()) return x_R;
  Eigen::MatrixXd projected(pm.target_dim, vs.num_velocities());
  for (int h = 0; h < vs.num_velocities(); ++h) projected.col(h) = pm.apply(vs.velocity(h));
  const VelocitySet vs_R(projected);
  const Eigen::VectorXd w = barycentric_min_support(vs_R, x_R, t);
  return vs.matrix() * w * t;
}

RegionClassification classify_point(const VelocitySet& vs, const Eigen::VectorXd& x, double t,
                                    const ClassifyTolerances& tol) {
  if (t < 0.0) throw std::invalid_argument("classify_point: negative time");
  RegionClassification rc;
  rc.weights = Eigen::VectorXd::Zero(vs.num_velocities());

  if (t == 0.0) {
    if (x.norm() <= tol.feasibility_tol * std::max(1.0, vs.scale())) {
      rc.kind = RegionKind::Vertex;
      rc.face.resize(std::size_t(vs.num_velocities()));
      for (int h = 0; h < vs.num_velocities(); ++h) rc.face[std::size_t(h)] = h;
      rc.weights(0) = 1.0;
    }
    return rc;
  }

  const auto sols = enumerate_basic_solutions(vs, x, t, tol.feasibility_tol);
  if (sols.count == 0) {
    rc.kind = RegionKind::Outside;
    return rc;
  }
  rc.weights = *sols.min_support;

  std::vector<int> positive;
  bool ambiguous = false;
  for (int h = 0; h < vs.num_velocities(); ++h) {
    const double w = sols.average(h);
    if (w > tol.positive_tol) {
      positive.push_back(h);
    } else if (w > tol.zero_tol) {
      ambiguous = true;
    }
  }
  if (ambiguous) {
    rc.kind = RegionKind::BoundaryDegenerate;
    return rc;
  }
  rc.face = positive;
  if (int(positive.size()) == vs.num_velocities()) {
    rc.kind = RegionKind::Inner;
  } else if (positive.size() == 1) {
    rc.kind = RegionKind::Vertex;
  } else {
    rc.kind = RegionKind::Face;
  }
  return rc;
}

} // namespace fvrm
