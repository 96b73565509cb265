#include "fvrm/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fvrm/analytic.hpp"
#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"

namespace fvrm {

// ---------------------------------------------------------------------------
// Rational
// ---------------------------------------------------------------------------

namespace {

long long checked_mul(long long a, long long b) {
  const __int128 p = __int128(a) * __int128(b);
  if (p > __int128(INT64_MAX) || p < __int128(INT64_MIN)) {
    throw Error("Rational: 64-bit overflow");
  }
  return (long long)(p);
}

long long checked_add(long long a, long long b) {
  const __int128 s = __int128(a) + __int128(b);
  if (s > __int128(INT64_MAX) || s < __int128(INT64_MIN)) {
    throw Error("Rational: 64-bit overflow");
  }
  return (long long)(s);
}

} // namespace

Rational::Rational(long long num) : num_(num), den_(1) {}

Rational::Rational(long long num, long long den) : num_(num), den_(den) { normalize(); }

void Rational::normalize() {
  if (den_ == 0) throw std::invalid_argument("Rational: zero denominator");
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  const long long g = std::gcd(std::abs(num_), den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

Rational Rational::operator-() const { return Rational(-num_, den_); }

Rational Rational::operator+(const Rational& o) const {
  return Rational(checked_add(checked_mul(num_, o.den_), checked_mul(o.num_, den_)),
                  checked_mul(den_, o.den_));
}

Rational Rational::operator-(const Rational& o) const { return *this + (-o); }

Rational Rational::operator*(const Rational& o) const {
  // cross-reduce first to keep the intermediates small
  const long long g1 = std::gcd(std::abs(num_), o.den_);
  const long long g2 = std::gcd(std::abs(o.num_), den_);
  return Rational(checked_mul(num_ / g1, o.num_ / g2), checked_mul(den_ / g2, o.den_ / g1));
}

Rational Rational::from_double(double x) {
  // continued-fraction expansion, denominators capped so that only values
  // genuinely meant as small fractions are accepted
  constexpr long long kMaxDen = 100000;
  long long best_num = 0, best_den = 1;
  double value = x;
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  for (int it = 0; it < 64; ++it) {
    const double a_f = std::floor(value);
    if (std::abs(a_f) > 1e15) break;
    const long long a = (long long)(a_f);
    const long long p2 = checked_add(checked_mul(a, p1), p0);
    const long long q2 = checked_add(checked_mul(a, q1), q0);
    if (q2 > kMaxDen) break;
    best_num = p2;
    best_den = q2;
    if (std::abs(double(p2) / double(q2) - x) < 1e-15 * std::max(1.0, std::abs(x))) break;
    const double frac = value - a_f;
    if (frac < 1e-15) break;
    value = 1.0 / frac;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
  }
  const Rational r(best_num, best_den);
  if (std::abs(r.to_double() - x) > 1e-12 * std::max(1.0, std::abs(x))) {
    throw Error("Rational::from_double: value is not close to a small rational");
  }
  return r;
}

// ---------------------------------------------------------------------------
// OperatorPolynomial
// ---------------------------------------------------------------------------

void OperatorPolynomial::add_term(const DerivativeIndex& index, const Rational& coefficient) {
  if (int(index.size()) != dims_) throw std::invalid_argument("OperatorPolynomial: index size");
  if (coefficient.is_zero()) return;
  auto it = terms_.find(index);
  if (it == terms_.end()) {
    terms_.emplace(index, coefficient);
  } else {
    it->second = it->second + coefficient;
    if (it->second.is_zero()) terms_.erase(it);
  }
}

OperatorPolynomial OperatorPolynomial::constant(int dims, const Rational& c) {
  OperatorPolynomial op(dims);
  op.add_term(DerivativeIndex(std::size_t(dims), 0), c);
  return op;
}

OperatorPolynomial OperatorPolynomial::derivative(int dims, int axis, int order) {
  OperatorPolynomial op(dims);
  DerivativeIndex idx(std::size_t(dims), 0);
  idx[std::size_t(axis)] = order;
  op.add_term(idx, Rational(1));
  return op;
}

OperatorPolynomial OperatorPolynomial::operator+(const OperatorPolynomial& o) const {
  OperatorPolynomial out = *this;
  for (const auto& [idx, c] : o.terms_) out.add_term(idx, c);
  return out;
}

OperatorPolynomial OperatorPolynomial::operator-(const OperatorPolynomial& o) const {
  OperatorPolynomial out = *this;
  for (const auto& [idx, c] : o.terms_) out.add_term(idx, -c);
  return out;
}

OperatorPolynomial OperatorPolynomial::operator*(const OperatorPolynomial& o) const {
  OperatorPolynomial out(dims_);
  for (const auto& [ia, ca] : terms_) {
    for (const auto& [ib, cb] : o.terms_) {
      DerivativeIndex idx(static_cast<std::size_t>(dims_));
      for (int d = 0; d < dims_; ++d) {
        idx[std::size_t(d)] = ia[std::size_t(d)] + ib[std::size_t(d)];
      }
      out.add_term(idx, ca * cb);
    }
  }
  return out;
}

OperatorPolynomial OperatorPolynomial::scaled(const Rational& c) const {
  OperatorPolynomial out(dims_);
  for (const auto& [idx, coeff] : terms_) out.add_term(idx, coeff * c);
  return out;
}

bool OperatorPolynomial::operator==(const OperatorPolynomial& o) const {
  return dims_ == o.dims_ && terms_ == o.terms_;
}

int OperatorPolynomial::max_total_order() const {
  int order = 0;
  for (const auto& [idx, c] : terms_) {
    order = std::max(order, std::accumulate(idx.begin(), idx.end(), 0));
  }
  return order;
}

std::string OperatorPolynomial::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [idx, c] : terms_) {
    if (!first) os << " + ";
    first = false;
    os << "(" << c.num();
    if (c.den() != 1) os << "/" << c.den();
    os << ")";
    for (int d = 0; d < dims_; ++d) {
      if (idx[std::size_t(d)] > 0) {
        os << (d == 0 ? " dt^" : " dx") << (d == 0 ? std::to_string(idx[0])
                                                   : std::to_string(d) + "^" + std::to_string(idx[std::size_t(d)]));
      }
    }
  }
  if (first) os << "0";
  return os.str();
}

// ---------------------------------------------------------------------------
// Equation builders
// ---------------------------------------------------------------------------

namespace {

Rational rational_pow(const Rational& base, int e) {
  Rational out(1);
  for (int i = 0; i < e; ++i) out = out * base;
  return out;
}

Rational rational_binomial(int n, int k) {
  if (k < 0 || k > n) return Rational(0);
  Rational out(1);
  for (int j = 1; j <= k; ++j) out = out * Rational(n - k + j, j);
  return out;
}

void for_each_combination_of(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[std::size_t(i)] = i;
  if (k > n) return;
  if (k == 0) {
    fn({});
    return;
  }
  for (;;) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[std::size_t(i)] == n - k + i) --i;
    if (i < 0) break;
    ++idx[std::size_t(i)];
    for (int j = i + 1; j < k; ++j) idx[std::size_t(j)] = idx[std::size_t(j - 1)] + 1;
  }
}

void check_parameters(int D, const std::vector<Rational>& p) {
  if (D < 1) throw std::invalid_argument("operator builder: D must be >= 1");
  if (int(p.size()) != D + 1) throw std::invalid_argument("operator builder: need D+1 probabilities");
  Rational sum(0);
  for (const Rational& pi : p) sum = sum + pi;
  if (sum != Rational(1)) throw std::invalid_argument("operator builder: probabilities must sum to 1");
}

} // namespace

OperatorPolynomial dth_order_from_double_sum(int D, const Rational& lambda,
                                             const std::vector<Rational>& p) {
  check_parameters(D, p);
  const int dims = D + 1;
  OperatorPolynomial op(dims);
  for (int k = 0; k <= D; ++k) {
    // combinations i of k coordinate indices out of {1, ..., D}
    for_each_combination_of(D, k, [&](const std::vector<int>& combo) {
      Rational p_outside = p[0];
      std::vector<bool> chosen(std::size_t(D), false);
      for (int c : combo) chosen[std::size_t(c)] = true;
      for (int j = 1; j <= D; ++j) {
        if (!chosen[std::size_t(j - 1)]) p_outside = p_outside + p[std::size_t(j)];
      }
      for (int h = 0; h <= D + 1 - k; ++h) {
        const Rational coeff =
            rational_pow(lambda, D + 1 - (h + k)) *
            (rational_binomial(D + 1 - k, h) - p_outside * rational_binomial(D - k, h));
        DerivativeIndex idx(std::size_t(dims), 0);
        idx[0] = h;
        for (int c : combo) idx[std::size_t(c + 1)] = 1;
        op.add_term(idx, coeff);
      }
    });
  }
  return op;
}

std::pair<OperatorPolynomial, OperatorPolynomial> elimination_operators(
    int n, int D, const Rational& lambda, const std::vector<Rational>& p) {
  check_parameters(D, p);
  if (n < 1 || n > D) throw std::invalid_argument("elimination_operators: need 1 <= n <= D");
  const int dims = D + 1;
  const auto dt = [&](int order) { return OperatorPolynomial::derivative(dims, 0, order); };
  const auto dx = [&](int axis) { return OperatorPolynomial::derivative(dims, axis); };
  const auto c = [&](const Rational& v) { return OperatorPolynomial::constant(dims, v); };

  // seeds from the first elimination step
  OperatorPolynomial Lambda = c(lambda * lambda * (p[0] + p[1] - Rational(1))) +
                              dt(1).scaled(lambda * (p[0] + p[1] - Rational(2))) +
                              dx(1).scaled(lambda * (p[0] - Rational(1))) -
                              dt(1) * dx(1);
  OperatorPolynomial Gamma = (dt(1) + c(lambda)).scaled(lambda * (p[0] + p[1])) +
                             dx(1).scaled(lambda * p[0]);
  // step n: eliminate f_n using (d/dt + E_n) f_n = G_n w_n + G_n sum_{j>n} f_j
  // with E_n = d/dx_n + lambda and G_n = lambda p_n, giving
  //   Lambda_n = (d/dt + d/dx_n + lambda) Lambda_{n-1}
  //            + lambda (p_n - 1) d^n/dt^n
  //            + lambda p_n (Gamma_{n-1} - Lambda_{n-1}) - d^{n+1}/dt^n dx_n
  for (int step = 2; step <= n; ++step) {
    const Rational pn = p[std::size_t(step)];
    const OperatorPolynomial transport = dt(1) + dx(step) + c(lambda);
    OperatorPolynomial next_lambda = transport * Lambda +
                                     dt(step).scaled(lambda * (pn - Rational(1))) +
                                     (Gamma - Lambda).scaled(lambda * pn) -
                                     dt(step) * dx(step);
    OperatorPolynomial next_gamma = transport * Gamma +
                                    (dt(step) + Gamma - Lambda).scaled(lambda * pn);
    Lambda = std::move(next_lambda);
    Gamma = std::move(next_gamma);
  }
  return {Lambda, Gamma};
}

std::pair<OperatorPolynomial, OperatorPolynomial> elimination_operators_closed_form(
    int n, int D, const Rational& lambda, const std::vector<Rational>& p) {
  check_parameters(D, p);
  if (n < 1 || n > D) throw std::invalid_argument("elimination_operators_closed_form: bad n");
  const int dims = D + 1;
  OperatorPolynomial Lambda(dims);
  OperatorPolynomial Gamma(dims);
  for (int k = 0; k <= n; ++k) {
    for_each_combination_of(n, k, [&](const std::vector<int>& combo) {
      Rational p_outside = p[0];
      std::vector<bool> chosen(std::size_t(n), false);
      for (int c : combo) chosen[std::size_t(c)] = true;
      for (int j = 1; j <= n; ++j) {
        if (!chosen[std::size_t(j - 1)]) p_outside = p_outside + p[std::size_t(j)];
      }
      for (int h = 0; h <= n - k; ++h) {
        const Rational lam_pow = rational_pow(lambda, n + 1 - (h + k));
        DerivativeIndex idx(std::size_t(dims), 0);
        idx[0] = h;
        for (int c : combo) idx[std::size_t(c + 1)] = 1;
        Lambda.add_term(idx, lam_pow * (rational_binomial(n - k, h) * p_outside -
                                        rational_binomial(n + 1 - k, h)));
        Gamma.add_term(idx, lam_pow * rational_binomial(n - k, h) * p_outside);
      }
      if (k >= 1) {
        DerivativeIndex idx(std::size_t(dims), 0);
        idx[0] = n + 1 - k;
        for (int c : combo) idx[std::size_t(c + 1)] = 1;
        Lambda.add_term(idx, Rational(-1));
      }
    });
  }
  return {Lambda, Gamma};
}

OperatorPolynomial dth_order_from_recursion(int D, const Rational& lambda,
                                            const std::vector<Rational>& p) {
  const auto [Lambda, Gamma] = elimination_operators(D, D, lambda, p);
  (void)Gamma;
  return OperatorPolynomial::derivative(D + 1, 0, D + 1) - Lambda;
}

OperatorPolynomial build_dth_order_operator(int D, const Rational& lambda,
                                            const std::vector<Rational>& p) {
  const OperatorPolynomial from_sum = dth_order_from_double_sum(D, lambda, p);
  const OperatorPolynomial from_recursion = dth_order_from_recursion(D, lambda, p);
  if (!(from_sum == from_recursion)) {
    throw Error("build_dth_order_operator: double sum and elimination recursion disagree:\n  " +
                from_sum.to_string() + "\n  " + from_recursion.to_string());
  }
  return from_sum;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

namespace {

// second-order central coefficients (offset, weight / h^order)
const std::vector<std::pair<int, double>>& central_coefficients(int order) {
  static const std::vector<std::vector<std::pair<int, double>>> tables = {
      {{0, 1.0}},
      {{-1, -0.5}, {1, 0.5}},
      {{-1, 1.0}, {0, -2.0}, {1, 1.0}},
      {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}},
      {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}},
      {{-3, -0.5}, {-2, 2.0}, {-1, -2.5}, {1, 2.5}, {2, -2.0}, {3, 0.5}},
  };
  if (order < 0 || order >= int(tables.size())) {
    throw std::invalid_argument("central_coefficients: derivative order beyond 5");
  }
  return tables[std::size_t(order)];
}

int stencil_reach(int order) { return central_coefficients(order).empty() ? 0 : std::abs(central_coefficients(order).front().first); }

// strict interior check with margin: every occupation coordinate of x in the
// support at time t stays above the margin
void require_interior(const MotionModel& model, double t, const Eigen::VectorXd& x, double margin) {
  Eigen::VectorXd occ;
  try {
    occ = position_to_occupation(model.velocities(), t, x);
  } catch (const OutsideHull&) {
    throw BoundaryTooClose("stencil: evaluation point outside the support");
  }
  for (int h = 0; h < occ.size(); ++h) {
    if (occ(h) < margin) {
      throw BoundaryTooClose("stencil: evaluation point within the boundary margin");
    }
  }
}

// nested central difference of the mixed derivative `index` at (t, x)
double apply_derivative(const SpaceTimeFn& f, const DerivativeIndex& index, double t,
                        const Eigen::VectorXd& x, double h_t, double h_x) {
  // build the tensor product of the per-axis stencils
  const int dims = int(index.size());
  std::vector<const std::vector<std::pair<int, double>>*> axis_coeffs(
      static_cast<std::size_t>(dims));
  for (int d = 0; d < dims; ++d) axis_coeffs[std::size_t(d)] = &central_coefficients(index[std::size_t(d)]);
  double scale = 1.0;
  for (int d = 0; d < dims; ++d) {
    const double h = d == 0 ? h_t : h_x;
    for (int o = 0; o < index[std::size_t(d)]; ++o) scale /= h;
  }
  double sum = 0.0;
  std::vector<int> offsets(std::size_t(dims), 0);
  std::function<void(int, double)> rec = [&](int d, double w) {
    if (d == dims) {
      Eigen::VectorXd xs = x;
      for (int i = 1; i < dims; ++i) xs(i - 1) += double(offsets[std::size_t(i)]) * h_x;
      sum += w * f(t + double(offsets[0]) * h_t, xs);
      return;
    }
    for (const auto& [o, c] : *axis_coeffs[std::size_t(d)]) {
      offsets[std::size_t(d)] = o;
      rec(d + 1, w * c);
    }
  };
  rec(0, 1.0);
  return sum * scale;
}

void for_each_grid_point(const PdeStencil& stencil,
                         const std::function<void(double, const Eigen::VectorXd&)>& fn) {
  const int dims = int(stencil.box_lo.size());
  const int n = std::max(1, stencil.points_per_axis);
  std::vector<int> idx(static_cast<std::size_t>(dims), 0);
  std::function<void(int)> rec = [&](int d) {
    if (d == dims) {
      Eigen::VectorXd pt(dims);
      for (int i = 0; i < dims; ++i) {
        const double f = n == 1 ? 0.5 : double(idx[std::size_t(i)]) / double(n - 1);
        pt(i) = stencil.box_lo(i) + f * (stencil.box_hi(i) - stencil.box_lo(i));
      }
      Eigen::VectorXd x = pt.tail(dims - 1);
      fn(pt(0), x);
      return;
    }
    for (int i = 0; i < n; ++i) {
      idx[std::size_t(d)] = i;
      rec(d + 1);
    }
  };
  rec(0);
}

RateFunction effective_rate(const MotionModel& model) {
  if (model.has_rate()) return model.rate();
  const WaitingTimeModel& waiting = model.waiting();
  if (!waiting.all_exponential()) {
    throw Error("pde: model has no Poisson rate representation");
  }
  const double lambda = waiting.law(0).rate;
  for (int h = 0; h < waiting.size(); ++h) {
    if (std::abs(waiting.law(h).rate - lambda) > 1e-12 * lambda) {
      throw Error("pde: per-velocity rates differ; no single Poisson rate");
    }
  }
  return RateFunction::constant(lambda);
}

} // namespace

std::vector<double> residual_system(const MotionModel& model, const std::vector<SpaceTimeFn>& f,
                                    const PdeStencil& stencil) {
  const VelocitySet& vs = model.velocities();
  const int n = vs.num_velocities();
  if (int(f.size()) != n) throw std::invalid_argument("residual_system: one evaluator per velocity");
  if (stencil.box_lo.size() != vs.dim() + 1 || stencil.box_hi.size() != vs.dim() + 1) {
    throw std::invalid_argument("residual_system: box must span (t, x)");
  }
  const RateFunction rate = effective_rate(model);
  const double margin = 2.0 * std::max(stencil.h_t, stencil.h_x);
  const double reach_t = stencil.h_t, reach_x = stencil.h_x;

  std::vector<double> max_residual(std::size_t(n), 0.0);
  for_each_grid_point(stencil, [&](double t, const Eigen::VectorXd& x) {
    // the whole first-order stencil must stay inside the margin
    for (double dt : {-reach_t, 0.0, reach_t}) {
      Eigen::VectorXd lo = x.array() - reach_x;
      Eigen::VectorXd hi = x.array() + reach_x;
      require_interior(model, t + dt, lo, margin);
      require_interior(model, t + dt, hi, margin);
    }
    const double lam = rate.lambda(t);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) values[std::size_t(i)] = f[std::size_t(i)](t, x);
    for (int i = 0; i < n; ++i) {
      DerivativeIndex dt_index(std::size_t(vs.dim()) + 1, 0);
      dt_index[0] = 1;
      double residual = apply_derivative(f[std::size_t(i)], dt_index, t, x, stencil.h_t, stencil.h_x);
      for (int d = 0; d < vs.dim(); ++d) {
        DerivativeIndex dx_index(std::size_t(vs.dim()) + 1, 0);
        dx_index[std::size_t(d) + 1] = 1;
        residual += vs.velocity(i)(d) *
                    apply_derivative(f[std::size_t(i)], dx_index, t, x, stencil.h_t, stencil.h_x);
      }
      residual += lam * values[std::size_t(i)];
      for (int j = 0; j < n; ++j) {
        residual -= lam * model.kernel().transition()(j, i) * values[std::size_t(j)];
      }
      max_residual[std::size_t(i)] = std::max(max_residual[std::size_t(i)], std::abs(residual));
    }
  });
  return max_residual;
}

double residual_operator(const OperatorPolynomial& op, const SpaceTimeFn& p,
                         const PdeStencil& stencil, const MotionModel* interior_check) {
  int reach_t = 0, reach_x = 0;
  for (const auto& [idx, c] : op.terms()) {
    reach_t = std::max(reach_t, stencil_reach(idx[0]));
    int rx = 0;
    for (std::size_t d = 1; d < idx.size(); ++d) rx = std::max(rx, stencil_reach(idx[d]));
    reach_x = std::max(reach_x, rx);
  }
  const double margin = 2.0 * std::max(stencil.h_t, stencil.h_x);

  double max_residual = 0.0;
  for_each_grid_point(stencil, [&](double t, const Eigen::VectorXd& x) {
    if (interior_check) {
      for (double dt : {-double(reach_t) * stencil.h_t, double(reach_t) * stencil.h_t}) {
        Eigen::VectorXd lo = x.array() - double(reach_x) * stencil.h_x;
        Eigen::VectorXd hi = x.array() + double(reach_x) * stencil.h_x;
        require_interior(*interior_check, t + dt, lo, margin);
        require_interior(*interior_check, t + dt, hi, margin);
      }
    }
    double residual = 0.0;
    for (const auto& [idx, c] : op.terms()) {
      residual += c.to_double() * apply_derivative(p, idx, t, x, stencil.h_t, stencil.h_x);
    }
    max_residual = std::max(max_residual, std::abs(residual));
  });
  return max_residual;
}

ConvergenceTable convergence_study(const std::function<double(double)>& residual_at, double h0,
                                   int halvings) {
  ConvergenceTable table;
  double h = h0;
  for (int i = 0; i <= halvings; ++i) {
    table.spacing.push_back(h);
    table.residual.push_back(residual_at(h));
    h *= 0.5;
  }
  for (std::size_t i = 0; i + 1 < table.residual.size(); ++i) {
    table.observed_order.push_back(std::log2(table.residual[i] / table.residual[i + 1]));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Conditional equivalence
// ---------------------------------------------------------------------------

ConditionalEquivalenceReport conditional_equivalence(const MotionModel& model,
                                                     const std::vector<int>& subset, double t,
                                                     std::int64_t replicas, std::uint64_t seed) {
  const VelocitySet& vs = model.velocities();
  const int n = vs.num_velocities();
  if (subset.empty() || !std::is_sorted(subset.begin(), subset.end())) {
    throw std::invalid_argument("conditional_equivalence: subset must be sorted and nonempty");
  }
  for (int i : subset) {
    if (i < 0 || i >= n) throw std::invalid_argument("conditional_equivalence: index out of range");
  }

  // constancy of the exit-retention probability over the subset rows
  const Eigen::MatrixXd& P = model.kernel().transition();
  double alpha = 0.0;
  for (std::size_t r = 0; r < subset.size(); ++r) {
    double row_sum = 0.0;
    for (int i : subset) row_sum += P(subset[r], i);
    if (r == 0) {
      alpha = row_sum;
    } else if (std::abs(row_sum - alpha) > 1e-12) {
      throw ConditionViolated("conditional_equivalence: subset retention varies across rows",
                              subset[r]);
    }
  }
  if (alpha <= 0.0) throw ConditionViolated("conditional_equivalence: retention is zero", subset[0]);

  const RateFunction rate = model.has_rate() ? model.rate() : [&] {
    const WaitingTimeModel& w = model.waiting();
    if (!w.all_exponential()) throw Error("conditional_equivalence: needs a Poisson stream");
    const double lambda = w.law(0).rate;
    for (int h = 0; h < w.size(); ++h) {
      if (std::abs(w.law(h).rate - lambda) > 1e-12 * lambda) {
        throw Error("conditional_equivalence: per-velocity rates differ");
      }
    }
    return RateFunction::constant(lambda);
  }();

  ConditionalEquivalenceReport report;
  report.alpha = alpha;
  report.replicas = replicas;
  double p_subset = 0.0;
  for (int i : subset) p_subset += model.kernel().initial()(i);
  report.analytic_probability = std::exp(-rate.cumulative(t) * (1.0 - alpha)) * p_subset;

  std::uint32_t subset_mask = 0;
  for (int i : subset) subset_mask |= (1u << unsigned(i));

  // conditioned samples by rejection
  const VelocitySet sub = vs.subset(subset);
  const ProjectionMap pm = build_projection(sub);
  std::vector<std::vector<double>> conditioned(std::size_t(pm.target_dim));
  for (std::int64_t r = 0; r < replicas; ++r) {
    RngStream rng(seed, std::uint64_t(r));
    const EndpointSample s = simulate_endpoint(model, t, rng);
    if ((s.used_mask & ~subset_mask) != 0u) continue;
    ++report.accepted;
    const Eigen::VectorXd xr = pm.apply(s.x);
    for (int d = 0; d < pm.target_dim; ++d) conditioned[std::size_t(d)].push_back(xr(d));
  }
  report.empirical_probability = double(report.accepted) / double(replicas);
  report.probability_sigma = std::sqrt(report.analytic_probability *
                                       (1.0 - report.analytic_probability) / double(replicas));
  report.probability_within_3_sigma =
      std::abs(report.empirical_probability - report.analytic_probability) <=
      3.0 * report.probability_sigma;

  // the scaled motion on the projected subset velocities
  Eigen::MatrixXd reduced(pm.target_dim, int(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) reduced.col(int(i)) = pm.apply(vs.velocity(subset[i]));
  Eigen::VectorXd init(int(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) init(int(i)) = model.kernel().initial()(subset[i]) / p_subset;
  Eigen::MatrixXd trans(int(subset.size()), int(subset.size()));
  for (std::size_t a = 0; a < subset.size(); ++a) {
    for (std::size_t b = 0; b < subset.size(); ++b) {
      trans(int(a), int(b)) = P(subset[a], subset[b]) / alpha;
    }
  }
  const MotionModel scaled(VelocitySet(reduced),
                           SwitchKernel::general_markov(std::move(init), std::move(trans)),
                           rate.scaled(alpha));

  std::vector<std::vector<double>> direct(std::size_t(pm.target_dim));
  for (std::int64_t r = 0; r < report.accepted; ++r) {
    RngStream rng(seed, std::uint64_t(replicas + r));
    const EndpointSample s = simulate_endpoint(scaled, t, rng);
    for (int d = 0; d < pm.target_dim; ++d) direct[std::size_t(d)].push_back(s.x(d));
  }

  report.ks_samples = report.accepted;
  double ks = 0.0;
  for (int d = 0; d < pm.target_dim; ++d) {
    ks = std::max(ks, ks_two_sample(conditioned[std::size_t(d)], direct[std::size_t(d)]));
  }
  report.ks_statistic = ks;
  const double nm = double(report.accepted);
  report.ks_threshold = ks_critical_value(0.001) * std::sqrt((nm + nm) / (nm * nm));
  report.ks_pass = report.ks_statistic <= report.ks_threshold;
  return report;
}

double nonhomogeneous_face_mass(const MotionModel& model, const RateFunction& rate, double t,
                                const std::vector<int>& face) {
  if (model.kernel().kind() != SwitchKernel::Kind::Complete) {
    throw std::invalid_argument("nonhomogeneous_face_mass: complete kernel required");
  }
  return face_mass_complete(model.kernel().initial(), rate.cumulative(t), face);
}

} // namespace fvrm
