#include "fvrm/general_motion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>

#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"

namespace fvrm {

namespace {

constexpr int kMaxEnumerableVelocities = 9;  // 2^(M+1) subset blow-up cap (M <= 8)
constexpr int kMaxShells = 400;

MotionModel with_velocities(const MotionModel& model, VelocitySet vs) {
  if (model.has_waiting_model()) {
    return MotionModel(std::move(vs), model.kernel(), model.waiting());
  }
  return MotionModel(std::move(vs), model.kernel(), model.rate());
}

// Completes a D x (M+1) velocity matrix with M > D spanning rows to an
// M x (M+1) matrix with affinely independent columns. Tail rows are scaled
// canonical rows of R^(M+1), taken in index order whenever independent of the
// rows of the bordered matrix accumulated so far.
Eigen::MatrixXd lift_columns(const Eigen::MatrixXd& V) {
  const int D = int(V.rows());
  const int M = int(V.cols()) - 1;
  std::vector<Eigen::VectorXd> basis;
  auto add_to_basis = [&](Eigen::VectorXd row) {
    for (const auto& q : basis) row -= q * q.dot(row);
    const double norm = row.norm();
    if (norm > 1e-9) {
      basis.push_back(row / norm);
      return true;
    }
    return false;
  };
  add_to_basis(Eigen::VectorXd::Ones(M + 1));
  for (int d = 0; d < D; ++d) add_to_basis(V.row(d).transpose());

  double scale = 1.0;
  for (int c = 0; c < V.cols(); ++c) scale = std::max(scale, V.col(c).norm());
  Eigen::MatrixXd lifted(M, M + 1);
  lifted.topRows(D) = V;
  int next_row = D;
  for (int j = 0; j <= M && next_row < M; ++j) {
    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(M + 1);
    candidate(j) = 1.0;
    if (add_to_basis(candidate)) {
      lifted.row(next_row++) = scale * candidate.transpose();
    }
  }
  if (next_row != M) throw Error("lift_columns: failed to complete the bordered matrix");
  return lifted;
}

} // namespace

Eigen::VectorXd LiftedModel::truncate(const Eigen::VectorXd& lifted_point) const {
  return lifted_point.head(original_dim);
}

MotionModel LiftedModel::lifted_model() const {
  return with_velocities(original, lifted);
}

LiftedModel lift_model(const MotionModel& model) {
  const VelocitySet& vs = model.velocities();
  const int D = vs.dim();
  const int M = vs.top_index();
  const int R = state_space_dim(vs);
  if (R != D) {
    throw Error("lift_model: state space must fill R^D (reduce the model first)");
  }
  LiftedModel out{model, vs, D};
  if (M == D) return out;  // already minimal, identity lift
  out.lifted = VelocitySet(lift_columns(vs.matrix()));
  if (affine_rank(out.lifted.matrix()) != M) {
    throw Error("lift_model: lifted velocities are not affinely independent");
  }
  return out;
}

std::pair<ProjectionMap, MotionModel> reduce_model(const MotionModel& model) {
  const VelocitySet& vs = model.velocities();
  const int R = state_space_dim(vs);
  if (R == vs.dim()) throw AlreadyFullDim("reduce_model: state space already fills R^D");
  const ProjectionMap pm = build_projection(vs);
  Eigen::MatrixXd reduced(pm.target_dim, vs.num_velocities());
  for (int h = 0; h < vs.num_velocities(); ++h) reduced.col(h) = pm.apply(vs.velocity(h));
  return {pm, with_velocities(model, VelocitySet(std::move(reduced)))};
}

namespace {

// parameter pack for the count-summed sub-motion density
struct SubsetDensityContext {
  const MotionModel* model = nullptr;
  std::vector<int> subset;   // global velocity indices, sorted
  Eigen::MatrixXd geometry;  // H x (H+1), affinely independent columns
  double t = 0.0;
  double tol = 1e-9;
};

double subset_inner_density(const SubsetDensityContext& ctx, const Eigen::VectorXd& xi) {
  return subset_density_with_geometry(*ctx.model, ctx.subset, ctx.geometry, ctx.t, xi, ctx.tol);
}

// min / max of row . (w * t) over { w >= 0, sum w = 1, A (w t) = b } with the
// vertex (basic feasible solution) enumeration; A has one row per already
// fixed coordinate.
std::optional<std::pair<double, double>> linear_range(const Eigen::MatrixXd& columns_t,
                                                      const Eigen::MatrixXd& fixed_rows,
                                                      const Eigen::VectorXd& fixed_rhs,
                                                      const Eigen::RowVectorXd& objective) {
  const int n = int(columns_t.cols());
  const int rows = 1 + int(fixed_rows.rows());
  Eigen::MatrixXd A(rows, n);
  A.row(0).setOnes();
  if (fixed_rows.rows() > 0) A.bottomRows(fixed_rows.rows()) = fixed_rows;
  Eigen::VectorXd b(rows);
  b(0) = 1.0;
  if (fixed_rows.rows() > 0) b.tail(fixed_rows.rows()) = fixed_rhs;

  std::optional<std::pair<double, double>> range;
  const int max_card = std::min(n, rows);
  std::vector<int> idx;
  std::function<void(int, int)> rec = [&](int next, int remaining) {
    if (remaining == 0) {
      Eigen::MatrixXd As(rows, int(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) As.col(int(i)) = A.col(idx[i]);
      const Eigen::VectorXd w = As.colPivHouseholderQr().solve(b);
      if ((As * w - b).norm() > 1e-9 * std::max(1.0, b.norm())) return;
      for (int i = 0; i < w.size(); ++i) {
        if (w(i) < -1e-9) return;
      }
      double value = 0.0;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        value += objective.dot(columns_t.col(idx[i])) * std::max(w(int(i)), 0.0);
      }
      if (!range) {
        range = {value, value};
      } else {
        range->first = std::min(range->first, value);
        range->second = std::max(range->second, value);
      }
      return;
    }
    for (int c = next; c <= n - remaining; ++c) {
      idx.push_back(c);
      rec(c + 1, remaining - 1);
      idx.pop_back();
    }
  };
  for (int card = 1; card <= max_card; ++card) rec(0, card);
  return range;
}

// Fiber integral over y with (x_R, y) constrained to the lifted hull,
// integrating the remaining fiber coordinates recursively.
double fiber_integral(const SubsetDensityContext& ctx, const Eigen::VectorXd& x_R, int fiber_dim) {
  const int H = int(ctx.geometry.rows());
  const int R = H - fiber_dim;
  const Eigen::MatrixXd columns_t = ctx.geometry * ctx.t;

  std::function<double(std::vector<double>&)> integrate_level =
      [&](std::vector<double>& fixed_fiber) -> double {
    const int level = int(fixed_fiber.size());
    if (level == fiber_dim) {
      Eigen::VectorXd xi(H);
      xi.head(R) = x_R;
      for (int d = 0; d < fiber_dim; ++d) xi(R + d) = fixed_fiber[std::size_t(d)];
      return subset_inner_density(ctx, xi);
    }
    // bounds of the next fiber coordinate over the section polytope
    Eigen::MatrixXd fixed_rows(R + level, H + 1);
    Eigen::VectorXd fixed_rhs(R + level);
    for (int r = 0; r < R; ++r) {
      fixed_rows.row(r) = columns_t.row(r);
      fixed_rhs(r) = x_R(r);
    }
    for (int d = 0; d < level; ++d) {
      fixed_rows.row(R + d) = columns_t.row(R + d);
      fixed_rhs(R + d) = fixed_fiber[std::size_t(d)];
    }
    Eigen::RowVectorXd objective = Eigen::RowVectorXd::Zero(H);
    objective(R + level) = 1.0;
    const auto range = linear_range(columns_t, fixed_rows, fixed_rhs, objective);
    if (!range || range->second - range->first <= 0.0) return 0.0;
    const auto f = [&](double y) {
      fixed_fiber.push_back(y);
      const double v = integrate_level(fixed_fiber);
      fixed_fiber.pop_back();
      return v;
    };
    return adaptive_simpson(f, range->first, range->second, ctx.tol);
  };
  std::vector<double> fixed;
  return integrate_level(fixed);
}

} // namespace

NonminimalDensity nonminimal_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                     double tol) {
  const VelocitySet& vs = model.velocities();
  const int D = vs.dim();
  const int n = vs.num_velocities();
  if (n > kMaxEnumerableVelocities) {
    throw std::invalid_argument("nonminimal_density: more than 8 extra velocities; "
                                "subset enumeration is capped");
  }
  if (state_space_dim(vs) != D) {
    throw Error("nonminimal_density: state space does not fill R^D; reduce the model first");
  }
  {
    const RegionClassification rc = classify_point(vs, x, t);
    if (rc.kind == RegionKind::Outside) {
      throw OutsideSupport("nonminimal_density: point outside the support");
    }
  }
  const WaitingTimeModel waiting = model.analytic_waiting();

  NonminimalDensity out;
  // subsets in increasing cardinality, lexicographic within a cardinality
  for (int card = 2; card <= n; ++card) {
    std::vector<int> subset;
    std::function<void(int)> rec = [&](int next) {
      if (int(subset.size()) == card) {
        const VelocitySet sub = vs.subset(subset);
        const RegionClassification rc = classify_point(sub, x, t);
        if (rc.kind != RegionKind::Inner) return;
        const int R_S = state_space_dim(sub);
        const int H = card - 1;

        SubsetDensityContext ctx;
        ctx.model = &model;
        ctx.subset = subset;
        ctx.t = t;
        ctx.tol = tol;

        SubsetContribution contribution;
        contribution.subset = subset;
        contribution.dimension = R_S;

        const ProjectionMap pm = build_projection(sub);
        Eigen::MatrixXd projected(R_S, card);
        for (int i = 0; i < card; ++i) projected.col(i) = pm.apply(sub.velocity(i));
        const Eigen::VectorXd x_R = pm.apply(x);

        if (R_S == H) {
          ctx.geometry = projected;
          contribution.value = subset_inner_density(ctx, x_R);
          contribution.method = "direct";
        } else {
          // lift the projected sub-motion to a minimal one in R^H
          ctx.geometry = lift_columns(projected);
          contribution.value = fiber_integral(ctx, x_R, H - R_S);
          contribution.method = "fiber";
        }
        if (R_S == D) {
          out.value += contribution.value;
        } else {
          contribution.method = "singular-face";
        }
        out.breakdown.push_back(std::move(contribution));
        return;
      }
      for (int h = next; h < n; ++h) {
        subset.push_back(h);
        rec(h + 1);
        subset.pop_back();
      }
    };
    rec(0);
  }
  return out;
}

} // namespace fvrm
