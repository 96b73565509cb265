#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fvrm/simulator.hpp"

namespace fvrm {

// ---------------------------------------------------------------------------
// Exact rational scalars and constant-coefficient differential operators
// ---------------------------------------------------------------------------

/// Exact rational with 64-bit numerator/denominator, overflow-checked.
class Rational {
public:
  Rational() = default;
  Rational(long long num);  // NOLINT(google-explicit-constructor)
  Rational(long long num, long long den);

  long long num() const { return num_; }
  long long den() const { return den_; }
  double to_double() const { return double(num_) / double(den_); }
  bool is_zero() const { return num_ == 0; }

  Rational operator-() const;
  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator!=(const Rational& o) const { return !(*this == o); }

  /// Closest rational with a small denominator (<= 10^12); throws when the
  /// double is not within 1e-12 of such a rational.
  static Rational from_double(double x);

private:
  long long num_ = 0;
  long long den_ = 1;
  void normalize();
};

/// Multi-index (a_t, a_{x_1}, ..., a_{x_D}) of a mixed partial derivative.
using DerivativeIndex = std::vector<int>;

/// Finitely supported map from derivative multi-indices to exact rational
/// coefficients, with the algebra of commuting constant-coefficient operators.
class OperatorPolynomial {
public:
  explicit OperatorPolynomial(int dims = 1) : dims_(dims) {}  // dims = 1 + D

  int dims() const { return dims_; }
  const std::map<DerivativeIndex, Rational>& terms() const { return terms_; }

  void add_term(const DerivativeIndex& index, const Rational& coefficient);
  static OperatorPolynomial constant(int dims, const Rational& c);
  /// d/dt (axis 0) or d/dx_i (axis i).
  static OperatorPolynomial derivative(int dims, int axis, int order = 1);

  OperatorPolynomial operator+(const OperatorPolynomial& o) const;
  OperatorPolynomial operator-(const OperatorPolynomial& o) const;
  OperatorPolynomial operator*(const OperatorPolynomial& o) const;
  OperatorPolynomial scaled(const Rational& c) const;
  bool operator==(const OperatorPolynomial& o) const;

  int max_total_order() const;
  std::string to_string() const;

private:
  int dims_;
  std::map<DerivativeIndex, Rational> terms_;
};

// ---------------------------------------------------------------------------
// The D-th order equation of the complete canonical motion
// ---------------------------------------------------------------------------

/// Coefficient map of the scalar equation satisfied by the inner density of
/// the complete canonical motion with constant rate, built verbatim from the
/// closed double sum. The operator is also derived independently through the
/// iterative elimination recursion and both constructions must agree exactly;
/// a mismatch throws.
OperatorPolynomial build_dth_order_operator(int D, const Rational& lambda,
                                            const std::vector<Rational>& p);

/// The two constructions separately (exposed for the exactness tests).
OperatorPolynomial dth_order_from_double_sum(int D, const Rational& lambda,
                                             const std::vector<Rational>& p);
OperatorPolynomial dth_order_from_recursion(int D, const Rational& lambda,
                                            const std::vector<Rational>& p);

/// Elimination-step operators Lambda_n / Gamma_n from the seed pair, and
/// their closed forms, for the recursion-consistency checks.
std::pair<OperatorPolynomial, OperatorPolynomial> elimination_operators(
    int n, int D, const Rational& lambda, const std::vector<Rational>& p);
std::pair<OperatorPolynomial, OperatorPolynomial> elimination_operators_closed_form(
    int n, int D, const Rational& lambda, const std::vector<Rational>& p);

// ---------------------------------------------------------------------------
// Finite-difference residuals
// ---------------------------------------------------------------------------

/// Interior evaluation box in (t, x) with per-axis spacings.
struct PdeStencil {
  double h_t = 1e-2;
  double h_x = 1e-2;
  Eigen::VectorXd box_lo, box_hi;  // size 1 + D: (t, x_1, ..., x_D)
  int points_per_axis = 3;
};

using SpaceTimeFn = std::function<double(double /*t*/, const Eigen::VectorXd& /*x*/)>;

/// Max |residual| of the first-order transport system
///   d f_i/dt + <grad f_i, v_i> + lambda(t) f_i - lambda(t) sum_j p_{j,i} f_j
/// per equation, by second-order central differences on the stencil box.
/// Throws BoundaryTooClose when a stencil point leaves the interior margin.
std::vector<double> residual_system(const MotionModel& model, const std::vector<SpaceTimeFn>& f,
                                    const PdeStencil& stencil);

/// Max |L p| over the box for a constant-coefficient operator applied by
/// nested central differences.
double residual_operator(const OperatorPolynomial& op, const SpaceTimeFn& p,
                         const PdeStencil& stencil,
                         const MotionModel* interior_check = nullptr);

/// Convergence table: spacings h, h/2, ..., with observed orders between
/// consecutive rows.
struct ConvergenceTable {
  std::vector<double> spacing;
  std::vector<double> residual;
  std::vector<double> observed_order;  // size = rows - 1
};

ConvergenceTable convergence_study(const std::function<double(double /*h*/)>& residual_at,
                                   double h0, int halvings);

// ---------------------------------------------------------------------------
// Conditional equivalence (velocity-subset conditioning)
// ---------------------------------------------------------------------------

struct ConditionalEquivalenceReport {
  double alpha = 0.0;                 // common exit-retention probability
  double analytic_probability = 0.0;  // P{no off-subset displacements}
  double empirical_probability = 0.0;
  double probability_sigma = 0.0;  // binomial standard error
  std::int64_t replicas = 0;
  std::int64_t accepted = 0;
  double ks_statistic = 0.0;
  double ks_threshold = 0.0;
  std::int64_t ks_samples = 0;
  bool probability_within_3_sigma = false;
  bool ks_pass = false;
};

/// Verifies that, conditionally on no displacement outside the velocity
/// subset, the motion equals in law the reduced motion with rate scaled by
/// alpha and renormalized kernel: (i) the conditioning probability against
/// its closed form, (ii) a two-sample KS test between conditioned samples and
/// the directly simulated scaled motion, projected to the subset's
/// coordinates. Throws ConditionViolated when the kernel rows exit the
/// subset with non-constant probability.
ConditionalEquivalenceReport conditional_equivalence(const MotionModel& model,
                                                     const std::vector<int>& subset, double t,
                                                     std::int64_t replicas, std::uint64_t seed);

/// Probability masses of the complete canonical motion under a
/// non-homogeneous rate: the homogeneous closed forms with Lambda(t) in place
/// of lambda t.
double nonhomogeneous_face_mass(const MotionModel& model, const RateFunction& rate, double t,
                                const std::vector<int>& face);

} // namespace fvrm
