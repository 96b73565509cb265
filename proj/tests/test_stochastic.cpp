#include <doctest.h>

#include <cmath>

#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"
#include "fvrm/stochastic.hpp"
#include "oracles.hpp"

using namespace fvrm;

TEST_CASE("waiting_density closed forms") {
  const WaitingTimeModel expo = WaitingTimeModel::exponential({1.0, 2.0});
  CHECK(waiting_density(expo, 0, 1, 0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(waiting_density(expo, 1, 3, 1.0) == doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-12));
  CHECK(waiting_density(expo, 0, 2, -0.1) == 0.0);

  SUBCASE("erlang matches the numeric self-convolution") {
    for (int n : {2, 3, 5}) {
      const double oracle = testing::convolution_density(WaitingLaw::exponential(2.0), n, 1.3);
      CHECK(waiting_density(expo, 1, n, 1.3) == doctest::Approx(oracle).epsilon(1e-7));
    }
  }
  SUBCASE("gamma sums match the numeric self-convolution") {
    // integer shape: the convolution grid converges at full second order
    const WaitingTimeModel gam2(std::vector<WaitingLaw>{WaitingLaw::gamma(2.0, 2.0)});
    for (int n : {1, 2, 4}) {
      const double oracle = testing::convolution_density(WaitingLaw::gamma(2.0, 2.0), n, 0.9);
      CHECK(waiting_density(gam2, 0, n, 0.9) == doctest::Approx(oracle).epsilon(1e-6));
    }
    // fractional shape has a sqrt-type kink at zero; the grid oracle is coarser
    const WaitingTimeModel gam15(std::vector<WaitingLaw>{WaitingLaw::gamma(1.5, 2.0)});
    for (int n : {2, 4}) {
      const double oracle = testing::convolution_density(WaitingLaw::gamma(1.5, 2.0), n, 0.9);
      CHECK(waiting_density(gam15, 0, n, 0.9) == doctest::Approx(oracle).epsilon(1e-4));
    }
  }
  SUBCASE("deterministic laws have no density") {
    const WaitingTimeModel det(std::vector<WaitingLaw>{WaitingLaw::deterministic(0.5)});
    CHECK_THROWS_AS(waiting_density(det, 0, 1, 0.3), AtomicLaw);
  }
}

TEST_CASE("counting_tail closed forms") {
  const WaitingTimeModel expo = WaitingTimeModel::exponential({1.0, 2.0});
  CHECK(counting_tail(expo, 0, 1.0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(counting_tail(expo, 1, 0.5, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(counting_tail(expo, 0, 0.0, 0) == 1.0);
  CHECK(counting_tail(expo, 0, -1.0, 0) == 0.0);

  SUBCASE("gamma renewal counts match the numeric convolution CDFs") {
    const WaitingTimeModel gam(std::vector<WaitingLaw>{WaitingLaw::gamma(2.0, 3.0)});
    for (int n : {0, 1, 2, 3}) {
      const double oracle = testing::renewal_count_numeric(WaitingLaw::gamma(2.0, 3.0), n, 1.1);
      CHECK(counting_tail(gam, 0, 1.1, n) == doctest::Approx(oracle).epsilon(1e-6));
    }
  }
  SUBCASE("deterministic renewal counting") {
    const WaitingTimeModel det(std::vector<WaitingLaw>{WaitingLaw::deterministic(0.4)});
    CHECK(counting_tail(det, 0, 1.0, 2) == 1.0);
    CHECK(counting_tail(det, 0, 1.0, 1) == 0.0);
  }
}

TEST_CASE("next_velocity") {
  RngStream rng(5, 0);
  SUBCASE("cyclic wraps deterministically") {
    const SwitchKernel kernel = SwitchKernel::cyclic(Eigen::VectorXd::Constant(3, 1.0 / 3));
    for (int i = 0; i < 10; ++i) CHECK(next_velocity(kernel, 2, rng) == 0);
    CHECK(next_velocity(kernel, 0, rng) == 1);
  }
  SUBCASE("complete uniform frequencies") {
    const SwitchKernel kernel = SwitchKernel::complete(Eigen::VectorXd::Constant(3, 1.0 / 3));
    const int n = 1000000;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) ++counts[next_velocity(kernel, 0, rng)];
    for (int h = 0; h < 3; ++h) {
      CHECK(std::abs(double(counts[h]) / n - 1.0 / 3) < 0.002);
    }
  }
  SUBCASE("orthogonal always changes dimension") {
    const SwitchKernel kernel = SwitchKernel::orthogonal();
    const int n = 1000000;
    int to1 = 0, to3 = 0, elsewhere = 0;
    for (int i = 0; i < n; ++i) {
      const int h = next_velocity(kernel, 0, rng);
      if (h == 1) {
        ++to1;
      } else if (h == 3) {
        ++to3;
      } else {
        ++elsewhere;
      }
    }
    CHECK(elsewhere == 0);
    CHECK(std::abs(double(to1) / n - 0.5) < 0.002);
    CHECK(std::abs(double(to3) / n - 0.5) < 0.002);
  }
}

TEST_CASE("allocation_probability closed forms and rules") {
  SUBCASE("complete single switch") {
    const SwitchKernel kernel = SwitchKernel::complete(Eigen::VectorXd::Constant(2, 0.5));
    CHECK(allocation_probability(kernel, {1, 1}, 1) == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("cyclic one full pattern") {
    Eigen::VectorXd p(2);
    p << 0.7, 0.3;
    const SwitchKernel kernel = SwitchKernel::cyclic(p);
    CHECK(allocation_probability(kernel, {1, 1}, 1) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(allocation_probability(kernel, {2, 0}, 0) == 0.0);
  }
  SUBCASE("terminal velocity must be open") {
    const SwitchKernel kernel = SwitchKernel::complete(Eigen::VectorXd::Constant(2, 0.5));
    CHECK_THROWS_AS(allocation_probability(kernel, {2, 0}, 1), InconsistentCounts);
  }
}

TEST_CASE("allocation probabilities sum to one over counts and terminals") {
  Eigen::VectorXd p4 = Eigen::VectorXd::Constant(4, 0.25);
  Eigen::VectorXd p3(3);
  p3 << 0.5, 0.3, 0.2;
  Eigen::MatrixXd P(3, 3);
  P << 0.1, 0.6, 0.3,
       0.5, 0.0, 0.5,
       0.2, 0.7, 0.1;
  const SwitchKernel kernels[] = {SwitchKernel::complete(p3), SwitchKernel::cyclic(p3),
                                  SwitchKernel::general_markov(p3, P),
                                  SwitchKernel::orthogonal(p4)};
  for (const SwitchKernel& kernel : kernels) {
    const int n = kernel.size();
    for (int total = 1; total <= 6; ++total) {
      double sum = 0.0;
      std::vector<int> counts(std::size_t(n), 0);
      std::function<void(int, int)> rec = [&](int h, int remaining) {
        if (h == n - 1) {
          counts[std::size_t(h)] = remaining;
          for (int k = 0; k < n; ++k) {
            if (counts[std::size_t(k)] >= 1) sum += allocation_probability(kernel, counts, k);
          }
          return;
        }
        for (int c = 0; c <= remaining; ++c) {
          counts[std::size_t(h)] = c;
          rec(h + 1, remaining - c);
        }
      };
      rec(0, total);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("markov allocation equals sequence enumeration") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.5, 0.3;
  Eigen::MatrixXd P(3, 3);
  P << 0.0, 0.4, 0.6,
       0.3, 0.3, 0.4,
       0.8, 0.1, 0.1;
  const SwitchKernel kernel = SwitchKernel::general_markov(p, P);
  RngStream rng(17, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const int total = 1 + int(rng.uniform() * 8.0);
    std::vector<int> counts(3, 0);
    for (int i = 0; i < total; ++i) ++counts[std::size_t(int(rng.uniform() * 3.0))];
    for (int k = 0; k < 3; ++k) {
      if (counts[std::size_t(k)] < 1) continue;
      const double expected = testing::allocation_by_enumeration(kernel, counts, k);
      CHECK(allocation_probability(kernel, counts, k) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("rate functions") {
  SUBCASE("piecewise cumulative and envelope") {
    const RateFunction rate = RateFunction::piecewise({0.0, 1.0, 2.0}, {1.0, 3.0, 0.5});
    CHECK(rate.lambda(0.5) == 1.0);
    CHECK(rate.lambda(1.5) == 3.0);
    CHECK(rate.lambda(5.0) == 0.5);
    CHECK(rate.cumulative(2.5) == doctest::Approx(1.0 + 3.0 + 0.25).epsilon(1e-14));
    CHECK(rate.sup_bound(0.5) == 1.0);
    CHECK(rate.sup_bound(1.5) == 3.0);
  }
  SUBCASE("callable without an envelope cannot be sampled") {
    const RateFunction rate = RateFunction::callable([](double s) { return s; }, nullptr, nullptr);
    RngStream rng(3, 0);
    CHECK_THROWS_AS(sample_arrivals(rate, 1.0, rng), UnboundedRate);
  }
  SUBCASE("numeric cumulative agrees with the closed form") {
    const RateFunction rate = RateFunction::callable([](double s) { return 2.0 * s; }, nullptr,
                                                     [](double s) { return 2.0 * s; });
    CHECK(rate.cumulative(1.0) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("sample_arrivals statistics") {
  SUBCASE("zero rate never fires") {
    RngStream rng(1, 0);
    CHECK(sample_arrivals(RateFunction::constant(0.0), 10.0, rng).empty());
  }
  SUBCASE("homogeneous mean count") {
    const RateFunction rate = RateFunction::constant(2.0);
    double total = 0.0;
    const int runs = 1000000;
    for (int i = 0; i < runs; ++i) {
      RngStream rng(42, std::uint64_t(i));
      total += double(sample_arrivals(rate, 1.0, rng).size());
    }
    CHECK(std::abs(total / runs - 2.0) < 0.005);
  }
  SUBCASE("linear rate void probability") {
    const RateFunction rate = RateFunction::callable(
        [](double s) { return 2.0 * s; }, [](double s) { return s * s; },
        [](double s) { return 2.0 * s; });
    int empty = 0;
    const int runs = 1000000;
    for (int i = 0; i < runs; ++i) {
      RngStream rng(43, std::uint64_t(i));
      if (sample_arrivals(rate, 1.0, rng).empty()) ++empty;
    }
    CHECK(std::abs(double(empty) / runs - std::exp(-1.0)) < 0.002);
  }
  SUBCASE("interarrival KS against the exponential law") {
    const double lambda = 1.5;
    RngStream rng(44, 0);
    const auto events = sample_arrivals(RateFunction::constant(lambda), 700000.0, rng);
    REQUIRE(events.size() > 1000000);
    std::vector<double> gaps;
    gaps.reserve(events.size());
    double prev = 0.0;
    for (double s : events) {
      gaps.push_back(s - prev);
      prev = s;
    }
    gaps.resize(1000000);
    const double d = ks_one_sample(gaps, [lambda](double s) { return 1.0 - std::exp(-lambda * s); });
    CHECK(d < ks_critical_value(0.001) / std::sqrt(1e6));
  }
}

TEST_CASE("rng streams are reproducible and key-distinct") {
  RngStream a(9, 1), b(9, 1), c(9, 2);
  for (int i = 0; i < 100; ++i) {
    const double ua = a.uniform();
    CHECK(ua == b.uniform());
    CHECK(ua != c.uniform());
  }
}
