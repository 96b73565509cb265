#include "fvrm/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"

namespace fvrm {

namespace {

constexpr double kProbTol = 1e-12;

void check_probability_vector(const Eigen::VectorXd& p, const char* what) {
  if (p.size() == 0) throw std::invalid_argument(std::string(what) + ": empty");
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p(i) < 0.0) throw std::invalid_argument(std::string(what) + ": negative entry");
    sum += p(i);
  }
  if (std::abs(sum - 1.0) > kProbTol) {
    throw std::invalid_argument(std::string(what) + ": entries do not sum to 1");
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Waiting-time laws
// ---------------------------------------------------------------------------

WaitingLaw WaitingLaw::exponential(double rate) {
  if (rate <= 0.0) throw std::invalid_argument("WaitingLaw: rate must be positive");
  WaitingLaw law;
  law.kind = Kind::Exponential;
  law.rate = rate;
  return law;
}

WaitingLaw WaitingLaw::gamma(double shape, double rate) {
  if (rate <= 0.0 || shape <= 0.0) {
    throw std::invalid_argument("WaitingLaw: gamma parameters must be positive");
  }
  WaitingLaw law;
  law.kind = Kind::Gamma;
  law.shape = shape;
  law.rate = rate;
  return law;
}

WaitingLaw WaitingLaw::deterministic(double value) {
  if (value <= 0.0) throw std::invalid_argument("WaitingLaw: duration must be positive");
  WaitingLaw law;
  law.kind = Kind::Deterministic;
  law.value = value;
  return law;
}

double WaitingLaw::sample(RngStream& rng) const {
  switch (kind) {
    case Kind::Exponential: return rng.exponential(rate);
    case Kind::Gamma: return rng.gamma(shape, rate);
    case Kind::Deterministic: return value;
  }
  return 0.0;
}

WaitingTimeModel::WaitingTimeModel(std::vector<WaitingLaw> laws) : laws_(std::move(laws)) {
  if (laws_.empty()) throw std::invalid_argument("WaitingTimeModel: needs at least one law");
}

WaitingTimeModel WaitingTimeModel::homogeneous_exponential(int num_velocities, double rate) {
  return WaitingTimeModel(std::vector<WaitingLaw>(std::size_t(num_velocities),
                                                  WaitingLaw::exponential(rate)));
}

WaitingTimeModel WaitingTimeModel::exponential(const std::vector<double>& rates) {
  std::vector<WaitingLaw> laws;
  laws.reserve(rates.size());
  for (double r : rates) laws.push_back(WaitingLaw::exponential(r));
  return WaitingTimeModel(std::move(laws));
}

bool WaitingTimeModel::has_atoms() const {
  return std::any_of(laws_.begin(), laws_.end(), [](const WaitingLaw& l) { return l.is_atomic(); });
}

bool WaitingTimeModel::all_exponential() const {
  return std::all_of(laws_.begin(), laws_.end(),
                     [](const WaitingLaw& l) { return l.kind == WaitingLaw::Kind::Exponential; });
}

double waiting_density(const WaitingTimeModel& model, int h, int n, double s) {
  if (n < 1) throw std::invalid_argument("waiting_density: n must be >= 1");
  const WaitingLaw& law = model.law(h);
  if (law.is_atomic()) {
    throw AtomicLaw("waiting_density: deterministic law has no density");
  }
  if (s < 0.0) return 0.0;
  // sum of n i.i.d. draws: Erlang(n, rate) or Gamma(n * shape, rate)
  const double a = law.kind == WaitingLaw::Kind::Exponential ? double(n) : double(n) * law.shape;
  const double rate = law.rate;
  if (s == 0.0) {
    if (a < 1.0) throw std::invalid_argument("waiting_density: density diverges at s = 0");
    return a == 1.0 ? rate : 0.0;
  }
  return std::exp(a * std::log(rate) + (a - 1.0) * std::log(s) - rate * s - std::lgamma(a));
}

double counting_tail(const WaitingTimeModel& model, int h, double s, int n) {
  if (n < 0) throw std::invalid_argument("counting_tail: n must be >= 0");
  if (s < 0.0) return 0.0;
  const WaitingLaw& law = model.law(h);
  switch (law.kind) {
    case WaitingLaw::Kind::Exponential: {
      const double mu = law.rate * s;
      if (mu == 0.0) return n == 0 ? 1.0 : 0.0;
      return std::exp(-mu + n * std::log(mu) - log_factorial(n));
    }
    case WaitingLaw::Kind::Gamma: {
      // F_n(s) - F_{n+1}(s) with F_n the CDF of Gamma(n * shape, rate)
      const double x = law.rate * s;
      const double Fn = n == 0 ? 1.0 : regularized_gamma_p(double(n) * law.shape, x);
      const double Fn1 = regularized_gamma_p(double(n + 1) * law.shape, x);
      return std::max(0.0, Fn - Fn1);
    }
    case WaitingLaw::Kind::Deterministic: {
      return int(std::floor(s / law.value + 1e-12)) == n ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Switching kernels
// ---------------------------------------------------------------------------

SwitchKernel::SwitchKernel(Kind kind, Eigen::VectorXd initial, Eigen::MatrixXd transition)
    : kind_(kind), initial_(std::move(initial)), transition_(std::move(transition)) {
  check_probability_vector(initial_, "SwitchKernel initial law");
  if (transition_.rows() != initial_.size() || transition_.cols() != initial_.size()) {
    throw std::invalid_argument("SwitchKernel: transition matrix shape mismatch");
  }
  for (int j = 0; j < transition_.rows(); ++j) {
    check_probability_vector(transition_.row(j).transpose(), "SwitchKernel transition row");
  }
}

SwitchKernel SwitchKernel::cyclic(Eigen::VectorXd initial) {
  const int n = int(initial.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) P(j, (j + 1) % n) = 1.0;
  return SwitchKernel(Kind::Cyclic, std::move(initial), std::move(P));
}

SwitchKernel SwitchKernel::complete(Eigen::VectorXd probabilities) {
  const int n = int(probabilities.size());
  for (int h = 0; h < n; ++h) {
    if (probabilities(h) <= 0.0) {
      throw std::invalid_argument("SwitchKernel: complete kernel needs strictly positive p");
    }
  }
  Eigen::MatrixXd P(n, n);
  for (int j = 0; j < n; ++j) P.row(j) = probabilities.transpose();
  return SwitchKernel(Kind::Complete, std::move(probabilities), std::move(P));
}

SwitchKernel SwitchKernel::general_markov(Eigen::VectorXd initial, Eigen::MatrixXd transition) {
  return SwitchKernel(Kind::GeneralMarkov, std::move(initial), std::move(transition));
}

SwitchKernel SwitchKernel::orthogonal(std::optional<Eigen::VectorXd> initial) {
  Eigen::VectorXd p = initial.value_or(Eigen::VectorXd::Constant(4, 0.25));
  if (p.size() != 4) throw std::invalid_argument("SwitchKernel: orthogonal kernel has 4 velocities");
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(4, 4);
  for (int j : {0, 2}) P(j, 1) = P(j, 3) = 0.5;
  for (int j : {1, 3}) P(j, 0) = P(j, 2) = 0.5;
  return SwitchKernel(Kind::Orthogonal, std::move(p), std::move(P));
}

int SwitchKernel::sample_initial(RngStream& rng) const {
  return rng.discrete(initial_.data(), int(initial_.size()));
}

int next_velocity(const SwitchKernel& kernel, int j, RngStream& rng) {
  const int n = kernel.size();
  if (j < 0 || j >= n) throw std::invalid_argument("next_velocity: index out of range");
  if (kernel.kind() == SwitchKernel::Kind::Cyclic) return (j + 1) % n;
  Eigen::VectorXd row = kernel.transition().row(j).transpose();
  return rng.discrete(row.data(), n);
}

namespace {

double allocation_complete(const SwitchKernel& kernel, const std::vector<int>& counts, int k) {
  const int n = kernel.size();
  int total = 0;
  for (int c : counts) total += c;
  std::vector<int> parts(counts.begin(), counts.end());
  parts[std::size_t(k)] -= 1;
  double value = multinomial(total - 1, parts);
  for (int h = 0; h < n; ++h) {
    value *= std::pow(kernel.initial()(h), double(counts[std::size_t(h)]));
  }
  return value;
}

double allocation_cyclic(const SwitchKernel& kernel, const std::vector<int>& counts, int k) {
  const int n = kernel.size();
  int total = 0;
  for (int c : counts) total += c;
  // the run is fully determined: it ends at k after `total` displacements
  const int start = ((k - (total - 1)) % n + n) % n;
  std::vector<int> run(std::size_t(n), 0);
  for (int i = 0; i < total; ++i) run[std::size_t((start + i) % n)] += 1;
  for (int h = 0; h < n; ++h) {
    if (run[std::size_t(h)] != counts[std::size_t(h)]) return 0.0;
  }
  return kernel.initial()(start);
}

double allocation_markov(const SwitchKernel& kernel, const std::vector<int>& counts, int k) {
  const int n = kernel.size();
  // DP over (displacement counts used so far, current velocity)
  std::vector<int> radix(static_cast<std::size_t>(n));
  std::size_t states = 1;
  for (int h = 0; h < n; ++h) {
    radix[std::size_t(h)] = counts[std::size_t(h)] + 1;
    states *= std::size_t(radix[std::size_t(h)]);
  }
  auto index_of = [&](const std::vector<int>& c) {
    std::size_t idx = 0;
    for (int h = n - 1; h >= 0; --h) idx = idx * std::size_t(radix[std::size_t(h)]) + std::size_t(c[std::size_t(h)]);
    return idx;
  };
  std::vector<double> dp(states * std::size_t(n), 0.0);
  std::vector<int> state(std::size_t(n), 0);
  for (int h = 0; h < n; ++h) {
    if (counts[std::size_t(h)] >= 1) {
      state.assign(std::size_t(n), 0);
      state[std::size_t(h)] = 1;
      dp[index_of(state) * std::size_t(n) + std::size_t(h)] = kernel.initial()(h);
    }
  }
  int total = 0;
  for (int c : counts) total += c;
  // iterate by number of displacements; enumerate all states with that total
  std::vector<std::vector<std::vector<int>>> by_total(std::size_t(total) + 1);
  std::function<void(int, int, std::vector<int>&)> gen = [&](int h, int used, std::vector<int>& cur) {
    if (h == n) {
      by_total[std::size_t(used)].push_back(cur);
      return;
    }
    for (int c = 0; c <= counts[std::size_t(h)] && used + c <= total; ++c) {
      cur[std::size_t(h)] = c;
      gen(h + 1, used + c, cur);
    }
    cur[std::size_t(h)] = 0;
  };
  std::vector<int> cur(std::size_t(n), 0);
  gen(0, 0, cur);
  for (int m = 1; m < total; ++m) {
    for (const auto& c : by_total[std::size_t(m)]) {
      const std::size_t base = index_of(c) * std::size_t(n);
      for (int j = 0; j < n; ++j) {
        const double mass = dp[base + std::size_t(j)];
        if (mass == 0.0) continue;
        for (int h = 0; h < n; ++h) {
          if (c[std::size_t(h)] >= counts[std::size_t(h)]) continue;
          const double pjh = kernel.transition()(j, h);
          if (pjh == 0.0) continue;
          std::vector<int> next = c;
          next[std::size_t(h)] += 1;
          dp[index_of(next) * std::size_t(n) + std::size_t(h)] += mass * pjh;
        }
      }
    }
  }
  return dp[index_of(counts) * std::size_t(n) + std::size_t(k)];
}

} // namespace

double allocation_probability(const SwitchKernel& kernel, const std::vector<int>& counts, int k) {
  const int n = kernel.size();
  if (int(counts.size()) != n) throw std::invalid_argument("allocation_probability: counts size mismatch");
  if (k < 0 || k >= n) throw std::invalid_argument("allocation_probability: terminal index out of range");
  for (int c : counts) {
    if (c < 0) throw std::invalid_argument("allocation_probability: negative count");
  }
  if (counts[std::size_t(k)] < 1) {
    throw InconsistentCounts("allocation_probability: terminal velocity must have an open displacement");
  }
  switch (kernel.kind()) {
    case SwitchKernel::Kind::Complete: return allocation_complete(kernel, counts, k);
    case SwitchKernel::Kind::Cyclic: return allocation_cyclic(kernel, counts, k);
    case SwitchKernel::Kind::GeneralMarkov:
    case SwitchKernel::Kind::Orthogonal: return allocation_markov(kernel, counts, k);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Counting-process rate
// ---------------------------------------------------------------------------

RateFunction RateFunction::constant(double rate) {
  if (rate < 0.0) throw std::invalid_argument("RateFunction: negative rate");
  RateFunction rf;
  rf.kind_ = Kind::Constant;
  rf.values_ = {rate};
  return rf;
}

RateFunction RateFunction::piecewise(std::vector<double> breakpoints, std::vector<double> values) {
  if (breakpoints.empty() || breakpoints.size() != values.size()) {
    throw std::invalid_argument("RateFunction: breakpoints/values size mismatch");
  }
  if (breakpoints.front() != 0.0) throw std::invalid_argument("RateFunction: first breakpoint must be 0");
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    if (breakpoints[i] <= breakpoints[i - 1]) {
      throw std::invalid_argument("RateFunction: breakpoints must increase");
    }
  }
  for (double v : values) {
    if (v < 0.0) throw std::invalid_argument("RateFunction: negative rate value");
  }
  RateFunction rf;
  rf.kind_ = Kind::Piecewise;
  rf.breakpoints_ = std::move(breakpoints);
  rf.values_ = std::move(values);
  return rf;
}

RateFunction RateFunction::callable(std::function<double(double)> rate,
                                    std::function<double(double)> cumulative,
                                    std::function<double(double)> sup_bound) {
  if (!rate) throw std::invalid_argument("RateFunction: rate callable required");
  RateFunction rf;
  rf.kind_ = Kind::Callable;
  rf.rate_fn_ = std::move(rate);
  rf.cumulative_fn_ = std::move(cumulative);
  rf.sup_fn_ = std::move(sup_bound);
  return rf;
}

double RateFunction::lambda(double t) const {
  switch (kind_) {
    case Kind::Constant: return values_[0];
    case Kind::Piecewise: {
      auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
      const std::size_t i = std::size_t(std::max<std::ptrdiff_t>(0, it - breakpoints_.begin() - 1));
      return values_[i];
    }
    case Kind::Callable: return rate_fn_(t);
  }
  return 0.0;
}

double RateFunction::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  switch (kind_) {
    case Kind::Constant: return values_[0] * t;
    case Kind::Piecewise: {
      double acc = 0.0;
      for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
        const double a = breakpoints_[i];
        if (a >= t) break;
        const double b = i + 1 < breakpoints_.size() ? std::min(breakpoints_[i + 1], t) : t;
        acc += values_[i] * (b - a);
      }
      return acc;
    }
    case Kind::Callable: {
      if (cumulative_fn_) return cumulative_fn_(t);
      return adaptive_simpson(rate_fn_, 0.0, t, 1e-12 * std::max(1.0, sup_bound(t) * t));
    }
  }
  return 0.0;
}

double RateFunction::sup_bound(double t) const {
  switch (kind_) {
    case Kind::Constant: return values_[0];
    case Kind::Piecewise: {
      double m = 0.0;
      for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
        if (breakpoints_[i] > t && i > 0) break;
        m = std::max(m, values_[i]);
      }
      return m;
    }
    case Kind::Callable: {
      if (!sup_fn_) throw UnboundedRate("RateFunction: no envelope available for callable rate");
      return sup_fn_(t);
    }
  }
  return 0.0;
}

RateFunction RateFunction::scaled(double factor) const {
  if (factor <= 0.0) throw std::invalid_argument("RateFunction: scale factor must be positive");
  switch (kind_) {
    case Kind::Constant: return constant(values_[0] * factor);
    case Kind::Piecewise: {
      std::vector<double> values = values_;
      for (double& v : values) v *= factor;
      return piecewise(breakpoints_, std::move(values));
    }
    case Kind::Callable: {
      auto rate = rate_fn_;
      auto cum = cumulative_fn_;
      auto sup = sup_fn_;
      return callable([rate, factor](double s) { return factor * rate(s); },
                      cum ? std::function<double(double)>(
                                [cum, factor](double s) { return factor * cum(s); })
                          : nullptr,
                      sup ? std::function<double(double)>(
                                [sup, factor](double s) { return factor * sup(s); })
                          : nullptr);
    }
  }
  return constant(0.0);
}

std::vector<double> sample_arrivals(const RateFunction& rate, double horizon, RngStream& rng) {
  std::vector<double> events;
  if (horizon <= 0.0) return events;
  if (rate.is_constant()) {
    const double lam = rate.constant_value();
    if (lam == 0.0) return events;
    double s = rng.exponential(lam);
    while (s <= horizon) {
      events.push_back(s);
      s += rng.exponential(lam);
    }
    return events;
  }
  // thinning against the finite envelope; exact for any bounded rate
  const double env = rate.sup_bound(horizon);
  if (env == 0.0) return events;
  double s = 0.0;
  for (;;) {
    s += rng.exponential(env);
    if (s > horizon) break;
    const double lam = rate.lambda(s);
    if (lam > env * (1.0 + 1e-12)) {
      throw UnboundedRate("sample_arrivals: rate exceeds its declared envelope");
    }
    if (rng.uniform() * env < lam) events.push_back(s);
  }
  return events;
}

} // namespace fvrm
