#include "fvrm/math.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace fvrm {

namespace {

constexpr int kTableSize = 512;

const std::array<double, kTableSize>& log_factorial_table() {
  static const auto table = [] {
    std::array<double, kTableSize> t{};
    t[0] = 0.0;
    for (int n = 1; n < kTableSize; ++n) t[n] = t[n - 1] + std::log(double(n));
    return t;
  }();
  return table;
}

} // namespace

double log_factorial(int n) {
  if (n < 0) throw std::invalid_argument("log_factorial: negative argument");
  if (n < kTableSize) return log_factorial_table()[n];
  return std::lgamma(double(n) + 1.0);
}

double multinomial(int n, std::span<const int> parts) {
  long long sum = 0;
  for (int k : parts) {
    if (k < 0) throw std::invalid_argument("multinomial: negative part");
    sum += k;
  }
  if (sum != n) throw std::invalid_argument("multinomial: parts do not sum to n");
  if (n <= 20) {
    // exact in 64-bit: iteratively multiply C(m, k_i) factors
    unsigned long long acc = 1;
    int m = 0;
    for (int k : parts) {
      for (int j = 1; j <= k; ++j) {
        ++m;
        acc = acc * static_cast<unsigned long long>(m) / static_cast<unsigned long long>(j);
      }
    }
    return double(acc);
  }
  double lg = log_factorial(n);
  for (int k : parts) lg -= log_factorial(k);
  return std::exp(lg);
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  const int parts[2] = {k, n - k};
  return multinomial(n, parts);
}

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("regularized_gamma_p: a must be positive");
  if (x < 0.0) throw std::invalid_argument("regularized_gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  const double lga = std::lgamma(a);
  if (x < a + 1.0) {
    // lower series
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 10000; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lga);
  }
  // upper continued fraction (Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 10000; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - lga) * h;
  return 1.0 - q;
}

namespace {

double simpson_rule(double fa, double fm, double fb, double a, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                            double fa, double fm, double fb, double whole, double tol,
                            int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson_rule(fa, flm, fm, a, m);
  const double right = simpson_rule(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = simpson_rule(fa, fm, fb, a, b);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

double adaptive_simpson_split(const std::function<double(double)>& f, double a, double b,
                              std::span<const double> splits, double tol) {
  std::vector<double> cuts;
  cuts.push_back(a);
  for (double s : splits) {
    if (s > a && s < b) cuts.push_back(s);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  const double piece_tol = tol / double(cuts.size() - 1);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += adaptive_simpson(f, cuts[i], cuts[i + 1], piece_tol);
  }
  return total;
}

double ks_two_sample(std::vector<double>& a, std::vector<double>& b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < n && j < m) {
    const double x = std::min(a[i], b[j]);
    while (i < n && a[i] <= x) ++i;
    while (j < m && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / double(n) - double(j) / double(m)));
  }
  return d;
}

double ks_one_sample(std::vector<double>& sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const std::size_t n = sample.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double F = cdf(sample[i]);
    d = std::max(d, std::abs(F - double(i) / double(n)));
    d = std::max(d, std::abs(double(i + 1) / double(n) - F));
  }
  return d;
}

double ks_critical_value(double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

} // namespace fvrm
