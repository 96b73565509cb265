#include <doctest.h>

#include <Eigen/Dense>

#include "fvrm/errors.hpp"
#include "fvrm/geometry.hpp"
#include "fvrm/rng.hpp"

using namespace fvrm;

namespace {

VelocitySet canonical(int D) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(D, D + 1);
  V.block(0, 1, D, D).setIdentity();
  return VelocitySet(V);
}

VelocitySet from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  // one velocity per row, transposed into columns
  const int n = int(rows.size());
  const int d = int(rows.begin()->size());
  Eigen::MatrixXd V(d, n);
  int c = 0;
  for (const auto& row : rows) {
    int r = 0;
    for (double v : row) V(r++, c) = v;
    ++c;
  }
  return VelocitySet(V);
}

// independent row-selection oracle: a row joins I^R when it raises the rank
// of the prefix submatrix (Eigen's pivoted LU, not our elimination)
std::vector<int> first_rows_by_rank(const Eigen::MatrixXd& A, int target) {
  std::vector<int> rows;
  Eigen::MatrixXd acc(0, A.cols());
  for (int r = 0; r < A.rows() && int(rows.size()) < target; ++r) {
    Eigen::MatrixXd trial(acc.rows() + 1, A.cols());
    trial.topRows(acc.rows()) = acc;
    trial.bottomRows(1) = A.row(r);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
    lu.setThreshold(1e-9);
    if (lu.rank() == trial.rows()) {
      rows.push_back(r);
      acc = trial;
    }
  }
  return rows;
}

} // namespace

TEST_CASE("state_space_dim on the named examples") {
  CHECK(state_space_dim(canonical(2)) == 2);
  CHECK(state_space_dim(from_rows({{0, 0}, {1, 1}, {2, 2}})) == 1);
  CHECK(state_space_dim(canonical(3)) == 3);
  CHECK(state_space_dim(from_rows({{0, 1}, {1, 0}, {-1, 0}})) == 2);
}

TEST_CASE("state_space_dim is pivot independent") {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int D = 1 + int(rng.uniform() * 3);
    const int n = 2 + int(rng.uniform() * 4);
    Eigen::MatrixXd V(D, n);
    for (int i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
    if (int(rng.uniform() * 2) == 0 && n >= 3) V.col(n - 1) = 0.5 * (V.col(0) + V.col(1));
    VelocitySet vs(V);
    const int R = state_space_dim(vs);
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd diff(D, n - 1);
      int c = 0;
      for (int h = 0; h < n; ++h) {
        if (h != k) diff.col(c++) = V.col(h) - V.col(k);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(diff);
      lu.setThreshold(1e-9);
      CHECK(int(lu.rank()) == R);
    }
  }
}

TEST_CASE("build_projection selects the first independent rows of every pivot") {
  SUBCASE("collinear set projects to one coordinate") {
    const VelocitySet vs = from_rows({{0, 0}, {1, 1}, {2, 2}});
    const ProjectionMap pm = build_projection(vs);
    CHECK(pm.target_dim == 1);
    CHECK(pm.rows == std::vector<int>{0});
    CHECK(pm.apply(vs.velocity(0))(0) == 0.0);
    CHECK(pm.apply(vs.velocity(1))(0) == 1.0);
    CHECK(pm.apply(vs.velocity(2))(0) == 2.0);
  }
  SUBCASE("minimal set gives the identity") {
    const ProjectionMap pm = build_projection(from_rows({{0, 1}, {1, 0}, {-1, 0}}));
    CHECK(pm.is_identity());
  }
  SUBCASE("planar set in R^3") {
    const VelocitySet vs = from_rows({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    const ProjectionMap pm = build_projection(vs);
    CHECK(pm.rows == std::vector<int>{0, 1});
  }
  SUBCASE("matches the rank-prefix oracle on random degenerate sets") {
    RngStream rng(11, 0);
    for (int trial = 0; trial < 40; ++trial) {
      const int D = 2 + int(rng.uniform() * 3);
      Eigen::MatrixXd V(D, 3);
      for (int i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
      V.col(2) = 2.0 * V.col(1) - V.col(0);  // rank of differences is 1
      const VelocitySet vs(V);
      const ProjectionMap pm = build_projection(vs);
      Eigen::MatrixXd diff(D, 2);
      diff.col(0) = V.col(1) - V.col(0);
      diff.col(1) = V.col(2) - V.col(0);
      CHECK(pm.rows == first_rows_by_rank(diff, state_space_dim(vs)));
    }
  }
  SUBCASE("single velocity is degenerate") {
    Eigen::MatrixXd V(2, 1);
    V << 1.0, 2.0;
    CHECK_THROWS_AS(build_projection(VelocitySet(V)), DegenerateSet);
  }
}

TEST_CASE("lift_point recovers hull points") {
  SUBCASE("collinear example with the minimal-support tie-break") {
    const VelocitySet vs = from_rows({{0, 0}, {1, 1}, {2, 2}});
    const ProjectionMap pm = build_projection(vs);
    Eigen::VectorXd x_R(1);
    x_R(0) = 1.0;
    const Eigen::VectorXd x = lift_point(pm, vs, x_R, 1.0);
    CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(x(1) == doctest::Approx(1.0).epsilon(1e-12));
    const Eigen::VectorXd w = barycentric_min_support(vs, x, 1.0);
    CHECK(w(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w(2) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("projected vertices lift to vertices") {
    const VelocitySet vs = from_rows({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    const ProjectionMap pm = build_projection(vs);
    for (int h = 0; h < 3; ++h) {
      const Eigen::VectorXd x = lift_point(pm, vs, pm.apply(vs.velocity(h)), 1.0);
      CHECK((x - vs.velocity(h)).norm() < 1e-12);
    }
  }
  SUBCASE("outside the projected hull") {
    const VelocitySet vs = from_rows({{0, 0}, {1, 1}, {2, 2}});
    const ProjectionMap pm = build_projection(vs);
    Eigen::VectorXd x_R(1);
    x_R(0) = 2.5;
    CHECK_THROWS_AS(lift_point(pm, vs, x_R, 1.0), OutsideHull);
  }
}

TEST_CASE("lift/project round trip on random hull points") {
  RngStream rng(23, 0);
  const VelocitySet planar = from_rows({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  const VelocitySet collinear = from_rows({{0, 0}, {1, 1}, {2, 2}});
  for (const VelocitySet* vs : {&planar, &collinear}) {
    const ProjectionMap pm = build_projection(*vs);
    for (int trial = 0; trial < 2000; ++trial) {
      Eigen::VectorXd w(vs->num_velocities());
      double sum = 0.0;
      for (int h = 0; h < w.size(); ++h) sum += (w(h) = -std::log(1.0 - rng.uniform()));
      w /= sum;
      const Eigen::VectorXd x = vs->matrix() * w;
      const Eigen::VectorXd back = lift_point(pm, *vs, pm.apply(x), 1.0);
      CHECK((back - x).norm() <= 1e-10 * (1.0 + x.norm()));
    }
  }
}

TEST_CASE("classify_point on the canonical triangle") {
  const VelocitySet vs = canonical(2);
  Eigen::VectorXd x(2);

  x << 0.3, 0.2;
  RegionClassification rc = classify_point(vs, x, 1.0);
  CHECK(rc.kind == RegionKind::Inner);
  CHECK(rc.weights(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rc.weights(1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rc.weights(2) == doctest::Approx(0.2).epsilon(1e-12));

  x << 0.4, 0.0;
  rc = classify_point(vs, x, 1.0);
  CHECK(rc.kind == RegionKind::Face);
  CHECK(rc.face == std::vector<int>{0, 1});

  x << 0.7, 0.7;
  rc = classify_point(vs, x, 1.0);
  CHECK(rc.kind == RegionKind::Outside);

  x << 0.0, 0.0;
  rc = classify_point(vs, x, 1.0);
  CHECK(rc.kind == RegionKind::Vertex);
  CHECK(rc.face == std::vector<int>{0});

  x << 0.0, 1.0;
  rc = classify_point(vs, x, 1.0);
  CHECK(rc.kind == RegionKind::Vertex);
  CHECK(rc.face == std::vector<int>{2});
}

TEST_CASE("classification weights reproduce the point") {
  RngStream rng(31, 0);
  const VelocitySet vs = from_rows({{0.3, -1.0}, {1.2, 0.7}, {-0.4, 0.9}});
  const double t = 1.7;
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd w(3);
    double sum = 0.0;
    for (int h = 0; h < 3; ++h) sum += (w(h) = -std::log(1.0 - rng.uniform()));
    w /= sum;
    const Eigen::VectorXd x = vs.matrix() * w * t;
    const RegionClassification rc = classify_point(vs, x, t);
    CHECK(rc.kind == RegionKind::Inner);
    CHECK((vs.matrix() * rc.weights * t - x).norm() <= 1e-10 * (1.0 + x.norm()));
  }
}

TEST_CASE("minimal classification partitions the support") {
  // every sampled point lands in exactly one decomposition cell
  RngStream rng(37, 0);
  const VelocitySet vs = canonical(2);
  const double t = 1.0;
  int seen_inner = 0, seen_face = 0, seen_vertex = 0;
  for (int trial = 0; trial < 600; ++trial) {
    // draw a cell, then a point of that cell
    const int pick = int(rng.uniform() * 7.0);
    std::vector<int> face;
    if (pick < 3) {
      face = {pick};
    } else if (pick < 6) {
      face = {pick - 3, (pick - 2) % 3};
      std::sort(face.begin(), face.end());
    } else {
      face = {0, 1, 2};
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
    double sum = 0.0;
    for (int i : face) sum += (w(i) = 0.05 + rng.uniform());
    for (int i : face) w(i) /= sum;
    const Eigen::VectorXd x = vs.matrix() * w * t;
    const RegionClassification rc = classify_point(vs, x, t);
    CHECK(rc.face == face);
    if (rc.kind == RegionKind::Inner) ++seen_inner;
    if (rc.kind == RegionKind::Face) ++seen_face;
    if (rc.kind == RegionKind::Vertex) ++seen_vertex;
  }
  CHECK(seen_inner > 0);
  CHECK(seen_face > 0);
  CHECK(seen_vertex > 0);
}

TEST_CASE("t = 0 collapses to the origin vertex") {
  const VelocitySet vs = canonical(2);
  const RegionClassification rc = classify_point(vs, Eigen::VectorXd::Zero(2), 0.0);
  CHECK(rc.kind == RegionKind::Vertex);
  CHECK(rc.face == std::vector<int>{0, 1, 2});
  Eigen::VectorXd off(2);
  off << 0.1, 0.0;
  CHECK(classify_point(vs, off, 0.0).kind == RegionKind::Outside);
}

TEST_CASE("interior points of a non-minimal hull classify as inner") {
  // 1-D set with an interior velocity: 0 is not a vertex of the support
  const VelocitySet vs = from_rows({{0.0}, {1.0}, {-1.0}});
  Eigen::VectorXd x(1);
  x << 0.0;
  CHECK(classify_point(vs, x, 1.0).kind == RegionKind::Inner);
  x << 0.5;
  CHECK(classify_point(vs, x, 1.0).kind == RegionKind::Inner);
  x << 1.0;
  CHECK(classify_point(vs, x, 1.0).kind == RegionKind::Vertex);
  x << 1.5;
  CHECK(classify_point(vs, x, 1.0).kind == RegionKind::Outside);
}
