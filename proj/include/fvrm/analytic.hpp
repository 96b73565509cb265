#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "fvrm/simulator.hpp"

namespace fvrm {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

struct SeriesResult {
  double value = 0.0;
  int terms_used = 0;
  double remainder_bound = 0.0;
};

/// Bessel-type entire function
///   I~_{alpha,nu}(z) = sum_{n>=0} (z/nu)^(n nu) / (n!^(nu-alpha) (n+1)!^alpha),
/// 0 <= alpha <= nu. Terms are positive and eventually geometric; the series
/// stops once the next term is below tol * partial sum with a decreasing
/// ratio, and the remainder is bounded geometrically.
SeriesResult bessel_tilde(int alpha, int nu, double z, double tol = 1e-14);

/// Modified Bessel function of order 1, I_1(z) = sum (z/2)^(2n+1) / (n!(n+1)!).
double bessel_i1(double z);

// ---------------------------------------------------------------------------
// Density values
// ---------------------------------------------------------------------------

/// A density (or mass) together with the formula that produced it and the
/// truncation diagnostics of any series/quadrature involved.
struct DensityValue {
  double value = 0.0;
  std::string formula;
  std::vector<int> face;  // velocity subset carrying the region; empty = inner
  int terms_used = 0;
  double remainder_bound = 0.0;
};

// ---------------------------------------------------------------------------
// Master formula (minimal motions)
// ---------------------------------------------------------------------------

/// Joint law P{X(t) in dx, N_h(t) = n_h for all h, V(t) = v_k} / dx for a
/// minimal motion: the product of the waiting-sum densities at the occupation
/// times, the inverse velocity-difference Jacobian, the counting tail of the
/// terminal velocity, and the allocation probability.
/// Counts must be >= 1 for every velocity (inner region).
DensityValue minimal_joint_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                   const std::vector<int>& counts, int k);

/// Same joint law on the face spanned by the given velocity subset:
/// counts are a full-length vector, zero off the face, >= 1 on it; k is a
/// global velocity index in the face. The density is taken with respect to
/// the face coordinates selected by the Lemma-1 projection of the subset.
DensityValue face_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                          const std::vector<int>& face, const std::vector<int>& counts, int k);

/// Face density at x summed over every count vector supported on the face
/// (all counts >= 1 there, zero elsewhere), with respect to the face's
/// Lemma-1 projected coordinates. With `face` = all velocities this is the
/// total inner density of a minimal motion under any supported kernel.
DensityValue face_density_total(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                const std::vector<int>& face, double tol = 1e-9);

/// P{only velocity h is ever used up to t} = p_h P{first wait > t}.
double vertex_mass(const MotionModel& model, double t, int h);

/// Count-summed inner density of the sub-motion restricted to `subset`, with
/// an explicit minimal geometry for the subset velocities (columns of
/// `geometry`, one per subset member, spanning R^(|subset|-1)). Evaluates to
/// zero outside the open sub-support. This is the workhorse behind
/// face_density_total and the fiber integration of non-minimal motions.
double subset_density_with_geometry(const MotionModel& model, const std::vector<int>& subset,
                                    const Eigen::MatrixXd& geometry, double t,
                                    const Eigen::VectorXd& xi, double tol);

// ---------------------------------------------------------------------------
// Cyclic canonical motions
// ---------------------------------------------------------------------------

/// Inner density piece of the cyclic canonical motion with per-velocity
/// exponential rates, restricted to total displacement counts of residue j
/// modulo D+1 (j = 0 means full cycles). The full inner density is the sum
/// over j = 0..D.
DensityValue cyclic_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                            int residue, double tol = 1e-12);

double cyclic_density_total(const MotionModel& model, double t, const Eigen::VectorXd& x,
                            double tol = 1e-12);

// ---------------------------------------------------------------------------
// Complete canonical motions (homogeneous Poisson)
// ---------------------------------------------------------------------------

enum class CompleteForm { Series, Integral };

/// Inner density of the complete canonical motion. The series form sums the
/// count expansion by total-degree shells with a geometric tail bound; the
/// integral form evaluates the Bessel-product integral by adaptive quadrature
/// with an explicit tail cutoff.
DensityValue complete_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                              CompleteForm form, double tol = 1e-12);

/// Closed form of the joint density with all displacement counts and the
/// terminal velocity fixed.
double complete_joint_terminal_density(const MotionModel& model, double t,
                                       const Eigen::VectorXd& x, const std::vector<int>& counts,
                                       int k);

/// Closed form with the counts fixed, summed over the terminal velocity.
double complete_joint_counts_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                     const std::vector<int>& counts);

/// f_i(x, t): inner density restricted to terminal velocity v_i, summed over
/// all counts (the unknowns of the governing first-order system).
double complete_terminal_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                 int i, double tol = 1e-12);

// ---------------------------------------------------------------------------
// Probability masses of the complete canonical motion
// ---------------------------------------------------------------------------

/// P{the motion uses all and only the velocities in `face` during [0, t]}:
/// exp(-Lt) sum_{h in face} p_h e^{L t p_h} prod_{j != h} (e^{L t p_j} - 1),
/// evaluated with expm1 (all factors positive, no cancellation).
/// `lambda_t` is Lambda(t), so non-homogeneous rates plug in directly.
double face_mass_complete(const Eigen::VectorXd& p, double lambda_t, const std::vector<int>& face);

/// The same mass in the alternating subset form (exposed for cross-testing).
double face_mass_complete_alternating(const Eigen::VectorXd& p, double lambda_t,
                                      const std::vector<int>& face);

/// P{exactly `num_velocities` distinct velocities are used in [0, t]}.
double mass_exactly_velocities(const Eigen::VectorXd& p, double lambda_t, int num_velocities);

/// P{X(t) lies on the border of its support} = P{some velocity is unused}.
double border_mass(const Eigen::VectorXd& p, double lambda_t);

// ---------------------------------------------------------------------------
// Combinatorial identities
// ---------------------------------------------------------------------------

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double scale = 0.0;  // magnitude of the largest contributing term
};

/// Alternating subset power sum: LHS is
/// sum_h (-1)^(H-h) sum_{|S|=h} (sum_S c)^m, RHS is 0 for m < H and the
/// all-positive multinomial sum for m >= H.
IdentityCheck identity_subset_power_sum(std::span<const double> c, int m);

/// Exponential-product identity: LHS is sum_h c_h e^{b c_h} prod_{j!=h}
/// (e^{b c_j} - 1), RHS the alternating subset sum.
IdentityCheck identity_exp_product(std::span<const double> c, double beta);

} // namespace fvrm
