#include <doctest.h>

#include <cmath>

#include "fvrm/analytic.hpp"
#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"
#include "oracles.hpp"

using namespace fvrm;

namespace {

MotionModel complete_canonical(int D, Eigen::VectorXd p, double lambda) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(D, D + 1);
  V.block(0, 1, D, D).setIdentity();
  return MotionModel(VelocitySet(V), SwitchKernel::complete(std::move(p)),
                     WaitingTimeModel::homogeneous_exponential(D + 1, lambda));
}

MotionModel cyclic_canonical(int D, Eigen::VectorXd p, std::vector<double> rates) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(D, D + 1);
  V.block(0, 1, D, D).setIdentity();
  return MotionModel(VelocitySet(V), SwitchKernel::cyclic(std::move(p)),
                     WaitingTimeModel::exponential(rates));
}

Eigen::VectorXd uniform_p(int n) { return Eigen::VectorXd::Constant(n, 1.0 / double(n)); }

// plain modified Bessel I_0 series, independent of bessel_tilde
double bessel_i0(double z) {
  double term = 1.0, sum = 1.0;
  const double y = 0.25 * z * z;
  for (int n = 1; n < 1000; ++n) {
    term *= y / (double(n) * double(n));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

} // namespace

TEST_CASE("bessel_tilde") {
  CHECK(bessel_tilde(0, 1, 1.0).value == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(bessel_tilde(2, 3, 0.0).value == 1.0);
  CHECK(bessel_tilde(0, 2, 2.0).value == doctest::Approx(bessel_i0(2.0)).epsilon(1e-12));
  SUBCASE("remainder bound honest on a sample") {
    const SeriesResult r = bessel_tilde(1, 3, 2.5, 1e-10);
    const SeriesResult refined = bessel_tilde(1, 3, 2.5, 1e-16);
    CHECK(std::abs(refined.value - r.value) <= r.remainder_bound + 1e-15 * refined.value);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS(bessel_tilde(2, 1, 1.0));
    CHECK_THROWS(bessel_tilde(0, 1, -1.0));
  }
}

TEST_CASE("combinatorial identities on the named examples") {
  SUBCASE("power sum vanishes below the threshold") {
    const double c[] = {1.0, 2.0};
    const auto r = identity_subset_power_sum(c, 1);
    CHECK(r.lhs == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.rhs == 0.0);
  }
  SUBCASE("single coefficient is a plain power") {
    const double c[] = {1.7};
    const auto r = identity_subset_power_sum(c, 4);
    CHECK(r.lhs == doctest::Approx(std::pow(1.7, 4.0)).epsilon(1e-14));
    CHECK(r.rhs == doctest::Approx(r.lhs).epsilon(1e-14));
  }
  SUBCASE("H=2, m=3 gives 18") {
    const double c[] = {1.0, 2.0};
    const auto r = identity_subset_power_sum(c, 3);
    CHECK(r.lhs == doctest::Approx(18.0).epsilon(1e-14));
    CHECK(r.rhs == doctest::Approx(18.0).epsilon(1e-14));
  }
  SUBCASE("exponential product identity") {
    const double c[] = {1.0, 2.0};
    const auto r = identity_exp_product(c, 0.5);
    CHECK(r.lhs == doctest::Approx(r.rhs).epsilon(1e-12));
    const auto zero = identity_exp_product(c, 0.0);
    CHECK(zero.lhs == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(zero.rhs == doctest::Approx(0.0).epsilon(1e-14));
    const double single[] = {1.3};
    const auto one = identity_exp_product(single, 0.7);
    CHECK(one.lhs == doctest::Approx(1.3 * std::exp(0.7 * 1.3)).epsilon(1e-14));
    CHECK(one.rhs == doctest::Approx(one.lhs).epsilon(1e-14));
  }
}

TEST_CASE("identities hold for random instances") {
  RngStream rng(101, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const int H = 1 + int(rng.uniform() * 6.0);
    std::vector<double> c(static_cast<std::size_t>(H));
    for (double& v : c) v = 0.05 + 4.0 * rng.uniform();
    const int m = int(rng.uniform() * 10.0);
    const auto power = identity_subset_power_sum(c, m);
    CHECK(std::abs(power.lhs - power.rhs) <= 1e-9 * std::max(1.0, power.scale));
    const auto expo = identity_exp_product(c, -1.0 + 2.0 * rng.uniform());
    CHECK(std::abs(expo.lhs - expo.rhs) <= 1e-9 * std::max(1.0, expo.scale));
  }
}

TEST_CASE("face and vertex masses of the complete canonical motion") {
  const Eigen::VectorXd p3 = uniform_p(3);
  SUBCASE("the spec values at lambda t = 1, D = 2") {
    CHECK(face_mass_complete(p3, 1.0, {0}) == doctest::Approx(std::exp(-2.0 / 3) / 3).epsilon(1e-9));
    CHECK(face_mass_complete(p3, 1.0, {0}) == doctest::Approx(0.171139).epsilon(1e-5));
    CHECK(face_mass_complete(p3, 1.0, {0, 1}) == doctest::Approx(0.135409).epsilon(1e-5));
    CHECK(face_mass_complete(p3, 1.0, {0, 1, 2}) == doctest::Approx(0.0803549).epsilon(1e-5));
  }
  SUBCASE("both closed forms agree") {
    RngStream rng(7, 0);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + int(rng.uniform() * 4.0);
      Eigen::VectorXd p(n);
      double sum = 0.0;
      for (int h = 0; h < n; ++h) sum += (p(h) = 0.1 + rng.uniform());
      p /= sum;
      const double lt = 0.2 + 3.0 * rng.uniform();
      std::vector<int> face;
      for (int h = 0; h < n; ++h) {
        if (rng.uniform() < 0.6 || face.empty()) face.push_back(h);
      }
      CHECK(face_mass_complete(p, lt, face) ==
            doctest::Approx(face_mass_complete_alternating(p, lt, face)).epsilon(1e-10));
    }
  }
  SUBCASE("agrees with the Poisson-multinomial oracle") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.3, 0.2;
    for (const auto& face : std::vector<std::vector<int>>{{0}, {1}, {0, 2}, {0, 1, 2}}) {
      const double oracle = testing::face_mass_oracle(p, 1.3, face);
      CHECK(face_mass_complete(p, 1.3, face) == doctest::Approx(oracle).epsilon(1e-10));
    }
  }
  SUBCASE("masses partition the total probability") {
    for (int D : {1, 2, 3, 4}) {
      Eigen::VectorXd p(D + 1);
      double sum = 0.0;
      for (int h = 0; h <= D; ++h) sum += (p(h) = 1.0 + h);
      p /= sum;
      for (double lt : {0.5, 1.0, 3.0}) {
        double total = 0.0;
        for (unsigned mask = 1; mask < (1u << unsigned(D + 1)); ++mask) {
          std::vector<int> face;
          for (int h = 0; h <= D; ++h) {
            if (mask & (1u << unsigned(h))) face.push_back(h);
          }
          total += face_mass_complete(p, lt, face);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("border mass and exact-count masses are consistent") {
    Eigen::VectorXd p(4);
    p << 0.1, 0.2, 0.3, 0.4;
    const double lt = 1.7;
    double border = 0.0;
    for (int used = 1; used <= 3; ++used) border += mass_exactly_velocities(p, lt, used);
    CHECK(border_mass(p, lt) == doctest::Approx(border).epsilon(1e-11));
    // exact-count masses from the per-face masses
    for (int used = 1; used <= 4; ++used) {
      double direct = 0.0;
      for (unsigned mask = 1; mask < 16u; ++mask) {
        std::vector<int> face;
        for (int h = 0; h < 4; ++h) {
          if (mask & (1u << unsigned(h))) face.push_back(h);
        }
        if (int(face.size()) == used) direct += face_mass_complete(p, lt, face);
      }
      CHECK(mass_exactly_velocities(p, lt, used) == doctest::Approx(direct).epsilon(1e-11));
    }
  }
  SUBCASE("vanishing horizon leaves the initial law") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.3, 0.2;
    for (int h = 0; h < 3; ++h) {
      CHECK(face_mass_complete(p, 1e-12, {h}) == doctest::Approx(p(h)).epsilon(1e-9));
    }
    CHECK(face_mass_complete(p, 1e-12, {0, 1}) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("minimal_joint_density") {
  SUBCASE("one-switch value on the line") {
    const MotionModel model = complete_canonical(1, uniform_p(2), 1.0);
    Eigen::VectorXd x(1);
    for (double xv : {0.1, 0.5, 0.9}) {
      x << xv;
      const DensityValue dv = minimal_joint_density(model, 1.0, x, {1, 1}, 1);
      CHECK(dv.value == doctest::Approx(std::exp(-1.0) / 4).epsilon(1e-12));
      CHECK(dv.value == doctest::Approx(0.0919699).epsilon(1e-6));
      // the closed complete-motion form gives the same number
      CHECK(complete_joint_terminal_density(model, 1.0, x, {1, 1}, 1) ==
            doctest::Approx(dv.value).epsilon(1e-12));
    }
  }
  SUBCASE("rejects closed terminal velocities and boundary points") {
    const MotionModel model = complete_canonical(1, uniform_p(2), 1.0);
    Eigen::VectorXd x(1);
    x << 0.5;
    CHECK_THROWS_AS(minimal_joint_density(model, 1.0, x, {2, 0}, 1), InconsistentCounts);
    x << 1.0;
    CHECK_THROWS_AS(minimal_joint_density(model, 1.0, x, {1, 1}, 1), OutsideSupport);
    x << 1.5;
    CHECK_THROWS_AS(minimal_joint_density(model, 1.0, x, {1, 1}, 1), OutsideSupport);
  }
  SUBCASE("matches the brute-force oracle (complete, exponential)") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.3, 0.2;
    const MotionModel model = complete_canonical(2, p, 1.3);
    Eigen::VectorXd x(2);
    x << 0.3, 0.25;
    for (const auto& [counts, k] : std::vector<std::pair<std::vector<int>, int>>{
             {{1, 1, 1}, 0}, {{1, 1, 1}, 2}, {{2, 1, 1}, 0}, {{1, 2, 2}, 1}, {{2, 2, 2}, 2}}) {
      const double oracle = testing::master_density_oracle(model, 1.0, x, counts, k);
      CHECK(minimal_joint_density(model, 1.0, x, counts, k).value ==
            doctest::Approx(oracle).epsilon(1e-6));
    }
  }
  SUBCASE("matches the brute-force oracle (markov kernel, gamma waits)") {
    Eigen::MatrixXd V(1, 2);
    V << -1.0, 1.0;
    Eigen::VectorXd p(2);
    p << 0.6, 0.4;
    Eigen::MatrixXd P(2, 2);
    P << 0.2, 0.8,
         0.7, 0.3;
    std::vector<WaitingLaw> laws{WaitingLaw::gamma(2.0, 2.0), WaitingLaw::exponential(1.5)};
    const MotionModel model(VelocitySet(V), SwitchKernel::general_markov(p, P),
                            WaitingTimeModel(laws));
    Eigen::VectorXd x(1);
    x << -0.2;
    for (const auto& [counts, k] : std::vector<std::pair<std::vector<int>, int>>{
             {{1, 1}, 0}, {{1, 1}, 1}, {{2, 1}, 0}, {{2, 2}, 1}, {{3, 2}, 0}}) {
      const double oracle = testing::master_density_oracle(model, 1.0, x, counts, k, 4096);
      const double got = minimal_joint_density(model, 1.0, x, counts, k).value;
      CHECK(got == doctest::Approx(oracle).epsilon(1e-6));
    }
  }
}

TEST_CASE("face densities of minimal motions") {
  Eigen::VectorXd p(3);
  p << 0.5, 0.3, 0.2;
  const MotionModel model = complete_canonical(2, p, 1.0);
  SUBCASE("full index set reduces to the inner density") {
    Eigen::VectorXd x(2);
    x << 0.3, 0.25;
    const DensityValue inner = face_density(model, 1.0, x, {0, 1, 2}, {1, 2, 1}, 1);
    CHECK(inner.value ==
          doctest::Approx(minimal_joint_density(model, 1.0, x, {1, 2, 1}, 1).value).epsilon(1e-13));
  }
  SUBCASE("edge density integrates to the edge mass") {
    // face {0,1}: the segment from 0 to e_1 t; the projected coordinate is x_1
    const double t = 1.0;
    const std::vector<int> face{0, 1};
    const double mass = face_mass_complete(p, 1.0, face);
    const double quad = adaptive_simpson(
        [&](double u) {
          Eigen::VectorXd x(2);
          x << u, 0.0;
          return face_density_total(model, t, x, face, 1e-12).value;
        },
        1e-9, t - 1e-9, 1e-11);
    CHECK(quad == doctest::Approx(mass).epsilon(1e-7));
  }
  SUBCASE("off-face points are rejected") {
    Eigen::VectorXd x(2);
    x << 0.3, 0.2;
    CHECK_THROWS_AS(face_density(model, 1.0, x, {0, 1}, {1, 1, 0}, 1), OutsideFace);
  }
  SUBCASE("vertex masses") {
    // the complete kernel can redraw its own velocity, so the vertex keeps
    // mass p_h e^{-lambda t (1 - p_h)}
    CHECK(vertex_mass(model, 1.0, 0) ==
          doctest::Approx(p(0) * std::exp(-(1.0 - p(0)))).epsilon(1e-12));
    for (int h = 0; h < 3; ++h) {
      CHECK(vertex_mass(model, 1.0, h) == doctest::Approx(face_mass_complete(p, 1.0, {h})).epsilon(1e-12));
    }
    // a cyclic kernel never redraws, so only the first wait matters
    Eigen::VectorXd pc(3);
    pc << 0.5, 0.3, 0.2;
    const MotionModel cyc = cyclic_canonical(2, pc, {1.0, 2.0, 3.0});
    CHECK(vertex_mass(cyc, 1.0, 1) == doctest::Approx(0.3 * std::exp(-2.0)).epsilon(1e-12));
  }
}

TEST_CASE("complete canonical densities") {
  SUBCASE("series and integral forms agree") {
    RngStream rng(19, 0);
    for (int D : {1, 2, 3}) {
      Eigen::VectorXd p(D + 1);
      double sum = 0.0;
      for (int h = 0; h <= D; ++h) sum += (p(h) = 0.5 + rng.uniform());
      p /= sum;
      for (double lt : {0.5, 1.0, 3.0}) {
        const MotionModel model = complete_canonical(D, p, lt);  // t = 1
        for (int trial = 0; trial < 8; ++trial) {
          Eigen::VectorXd w(D + 1);
          double ws = 0.0;
          for (int h = 0; h <= D; ++h) ws += (w(h) = 0.05 + rng.uniform());
          w /= ws;
          const Eigen::VectorXd x = w.tail(D);
          const double series = complete_density(model, 1.0, x, CompleteForm::Series, 1e-12).value;
          const double integral = complete_density(model, 1.0, x, CompleteForm::Integral, 1e-12).value;
          CHECK(series == doctest::Approx(integral).epsilon(1e-9));
        }
      }
    }
  }
  SUBCASE("joint-counts closed form at the all-ones vector") {
    const MotionModel model = complete_canonical(2, uniform_p(3), 1.0);
    Eigen::VectorXd x(2);
    x << 0.3, 0.3;
    const double expected = 6.0 / 27.0 * std::exp(-1.0);
    CHECK(complete_joint_counts_density(model, 1.0, x, {1, 1, 1}) ==
          doctest::Approx(expected).epsilon(1e-12));
    x << 0.1, 0.6;
    CHECK(complete_joint_counts_density(model, 1.0, x, {1, 1, 1}) ==
          doctest::Approx(expected).epsilon(1e-12));  // constant in x for unit counts
  }
  SUBCASE("specialization chain: terminal sums to counts, counts sum to the density") {
    Eigen::VectorXd p(3);
    p << 0.2, 0.5, 0.3;
    const MotionModel model = complete_canonical(2, p, 1.4);
    Eigen::VectorXd x(2);
    x << 0.35, 0.2;
    // sum (15) over k = (16)
    for (const std::vector<int>& counts :
         std::vector<std::vector<int>>{{1, 1, 1}, {2, 1, 3}, {1, 4, 2}}) {
      double sum_k = 0.0;
      for (int k = 0; k < 3; ++k) sum_k += complete_joint_terminal_density(model, 1.0, x, counts, k);
      CHECK(sum_k == doctest::Approx(complete_joint_counts_density(model, 1.0, x, counts)).epsilon(1e-12));
    }
    // sum (16) over counts = (17); truncate at a large total
    double sum_counts = 0.0;
    for (int total = 3; total <= 40; ++total) {
      for (int n0 = 1; n0 <= total - 2; ++n0) {
        for (int n1 = 1; n1 <= total - n0 - 1; ++n1) {
          const int n2 = total - n0 - n1;
          sum_counts += complete_joint_counts_density(model, 1.0, x, {n0, n1, n2});
        }
      }
    }
    CHECK(sum_counts ==
          doctest::Approx(complete_density(model, 1.0, x, CompleteForm::Series, 1e-13).value)
              .epsilon(1e-10));
    // and the terminal-velocity pieces f_i sum to the density as well
    double sum_terminal = 0.0;
    for (int i = 0; i < 3; ++i) sum_terminal += complete_terminal_density(model, 1.0, x, i, 1e-12);
    CHECK(sum_terminal ==
          doctest::Approx(complete_density(model, 1.0, x, CompleteForm::Series, 1e-12).value)
              .epsilon(1e-10));
  }
  SUBCASE("inner integral equals the closed-form inner mass") {
    RngStream rng(29, 0);
    for (int D : {1, 2, 3}) {
      Eigen::VectorXd p_uni = uniform_p(D + 1);
      Eigen::VectorXd p_skew(D + 1);
      double sum = 0.0;
      for (int h = 0; h <= D; ++h) sum += (p_skew(h) = 1.0 + 0.7 * h);
      p_skew /= sum;
      for (const Eigen::VectorXd* p : {&p_uni, &p_skew}) {
        for (double lt : {0.5, 1.0, 3.0}) {
          const MotionModel model = complete_canonical(D, *p, lt);
          std::vector<int> all(std::size_t(D) + 1);
          for (int h = 0; h <= D; ++h) all[std::size_t(h)] = h;
          const double mass = face_mass_complete(*p, lt, all);
          const double quad = testing::integrate_simplex(
              D, 1.0,
              [&](const Eigen::VectorXd& x) {
                return complete_density(model, 1.0, x, CompleteForm::Series, 1e-12).value;
              },
              D == 3 ? 16 : 32);
          CHECK(quad == doctest::Approx(mass).epsilon(1e-7));
        }
      }
    }
  }
}

TEST_CASE("cyclic canonical densities") {
  SUBCASE("residue pieces match the count-resolved master formula") {
    // compare against minimal_joint_density summed over the cyclically
    // consistent counts of each residue class, term by term
    Eigen::VectorXd p_start(2);
    p_start << 1.0, 0.0;  // the paper's p_0 = 1 case, equal rates
    Eigen::VectorXd p_mixed(2);
    p_mixed << 0.6, 0.4;
    const MotionModel models[] = {cyclic_canonical(1, p_start, {1.0, 1.0}),
                                  cyclic_canonical(1, p_mixed, {1.0, 2.5})};
    Eigen::VectorXd x(1);
    x << 0.4;
    const double t = 1.0;
    for (const MotionModel& model : models) {
      for (int residue : {0, 1}) {
        double expected = 0.0;
        for (int n = 1; n <= 40; ++n) {
          const int total = n * 2 + residue;
          // terminal k fixes the cyclic counts
          for (int k = 0; k < 2; ++k) {
            std::vector<int> counts(2, 0);
            const int start = ((k - (total - 1)) % 2 + 2) % 2;
            for (int s = 0; s < total; ++s) ++counts[std::size_t((start + s) % 2)];
            if (counts[0] < 1 || counts[1] < 1) continue;
            expected += minimal_joint_density(model, t, x, counts, k).value;
          }
        }
        const DensityValue piece = cyclic_density(model, t, x, residue, 1e-14);
        CHECK(piece.value == doctest::Approx(expected).epsilon(1e-10));
      }
    }
  }
  SUBCASE("tiny products reduce to the prefactor") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.3, 0.2;
    const MotionModel model = cyclic_canonical(2, p, {1.0, 2.0, 3.0});
    Eigen::VectorXd x(2);
    x << 1e-9, 1e-9;  // occupation of velocity 0 is almost t
    const DensityValue j0 = cyclic_density(model, 1.0, x, 0, 1e-14);
    // with I~(z) ~ 1 the residue-0 piece is e^{-sum lambda x} sum_k p_{k+1} prod_{h!=k} lambda_h
    double prefactor = 0.0;
    const double rates[3] = {1.0, 2.0, 3.0};
    for (int k = 0; k < 3; ++k) {
      double prod = 1.0;
      for (int h = 0; h < 3; ++h) {
        if (h != k) prod *= rates[h];
      }
      prefactor += p((k + 1) % 3) * prod;
    }
    const double occ0 = 1.0 - 2e-9;
    const double expo = std::exp(-(1.0 * occ0 + 2.0 * 1e-9 + 3.0 * 1e-9));
    CHECK(j0.value == doctest::Approx(expo * prefactor).epsilon(1e-6));
  }
  SUBCASE("total density integrates to the full-cycle mass, D = 1") {
    Eigen::VectorXd p(2);
    p << 0.6, 0.4;
    const double l0 = 1.0, l1 = 2.5;
    const MotionModel model = cyclic_canonical(1, p, {l0, l1});
    const double t = 1.0;
    const double inner = adaptive_simpson(
        [&](double u) {
          Eigen::VectorXd x(1);
          x << u;
          return cyclic_density_total(model, t, x, 1e-12);
        },
        1e-10, t - 1e-10, 1e-11);
    // the only singular patterns are the two vertices (single velocity)
    const double expected = 1.0 - p(0) * std::exp(-l0 * t) - p(1) * std::exp(-l1 * t);
    CHECK(inner == doctest::Approx(expected).epsilon(1e-8));
  }
  SUBCASE("total density integrates to the inner mass, D = 2, distinct rates") {
    Eigen::VectorXd p(3);
    p << 0.5, 0.3, 0.2;
    const double rates[3] = {1.0, 2.0, 3.0};
    const MotionModel model = cyclic_canonical(2, p, {rates[0], rates[1], rates[2]});
    const double t = 1.0;
    const double inner = testing::integrate_simplex(
        2, t, [&](const Eigen::VectorXd& x) { return cyclic_density_total(model, t, x, 1e-12); },
        48);
    // singular mass: vertices p_h e^{-lambda_h t} plus the three two-velocity
    // arcs h -> h+1 with exactly one switch
    double singular = 0.0;
    for (int h = 0; h < 3; ++h) singular += p(h) * std::exp(-rates[h] * t);
    for (int h = 0; h < 3; ++h) {
      const int next = (h + 1) % 3;
      const double a = rates[h], b = rates[next];
      // p_h int_0^t a e^{-a s} e^{-b (t-s)} ds
      singular += p(h) * a * (std::exp(-b * t) - std::exp(-a * t)) / (a - b);
    }
    CHECK(inner == doctest::Approx(1.0 - singular).epsilon(1e-6));
  }
}
