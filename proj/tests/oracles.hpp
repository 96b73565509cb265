#pragma once

// Test-only oracles, independent of the library's evaluation paths:
// numeric convolutions instead of closed-form waiting densities, sequence
// enumeration instead of allocation formulas, Poisson-multinomial sums
// instead of the mass identities, and plain cubature for normalizations.

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "fvrm/simulator.hpp"

namespace fvrm::testing {

/// Density of the sum of `m` i.i.d. waits at s, by iterated trapezoid
/// convolution on a grid with Richardson extrapolation.
double convolution_density(const WaitingLaw& law, int m, double s, int grid = 2048);

/// P{renewal count at s equals m}, from numerically integrated convolution
/// CDFs.
double renewal_count_numeric(const WaitingLaw& law, int m, double s, int grid = 2048);

/// P{C_n = counts, terminal = k} by explicit enumeration of velocity
/// sequences weighted by the kernel.
double allocation_by_enumeration(const SwitchKernel& kernel, const std::vector<int>& counts, int k);

/// Joint density P{X(t) in dx, counts, V(t)=v_k}/dx for a minimal motion,
/// assembled from the independent pieces above (numeric convolutions,
/// sequence enumeration, numeric Jacobian).
double master_density_oracle(const MotionModel& model, double t, const Eigen::VectorXd& x,
                             const std::vector<int>& counts, int k, int grid = 2048);

/// P{exact used-velocity set == face} for the complete canonical motion by
/// the Poisson-multinomial sum over the number of displacements.
double face_mass_oracle(const Eigen::VectorXd& p, double lambda_t, const std::vector<int>& face);

/// Integral of f over the canonical simplex {x >= 0, sum x <= t} by a Duffy
/// map and tensor Gauss-Legendre quadrature.
double integrate_simplex(int dim, double t, const std::function<double(const Eigen::VectorXd&)>& f,
                         int points_per_axis = 24);

/// Gauss-Legendre nodes/weights on [0, 1].
void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights);

} // namespace fvrm::testing
