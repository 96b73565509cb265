#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fvrm {

/// ln(n!) with a cached table for small n.
double log_factorial(int n);

/// Multinomial coefficient n! / (k_0! ... k_r!). Exact integer arithmetic for
/// n <= 20, log-space otherwise.
double multinomial(int n, std::span<const int> parts);

/// Binomial coefficient, exact for n <= 20, log-space above.
double binomial(int n, int k);

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
/// Series for x < a + 1, continued fraction otherwise.
double regularized_gamma_p(double a, double x);

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 50);

/// Simpson quadrature with the interval pre-split at the given interior
/// points (integrand kinks); each piece is integrated adaptively.
double adaptive_simpson_split(const std::function<double(double)>& f, double a, double b,
                              std::span<const double> splits, double tol);

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_1(x) - F_2(x)|.
/// Both samples are sorted in place.
double ks_two_sample(std::vector<double>& a, std::vector<double>& b);

/// One-sample KS statistic against a CDF.
double ks_one_sample(std::vector<double>& sample, const std::function<double(double)>& cdf);

/// Asymptotic critical value c(alpha) for the KS distribution, so that the
/// test rejects when D > c(alpha) * sqrt((n+m)/(n*m)) (two-sample) or
/// D > c(alpha) / sqrt(n) (one-sample). c(alpha) = sqrt(-ln(alpha/2)/2).
double ks_critical_value(double alpha);

} // namespace fvrm
