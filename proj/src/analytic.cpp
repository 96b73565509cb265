#include "fvrm/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "fvrm/errors.hpp"
#include "fvrm/math.hpp"

namespace fvrm {

namespace {

void require(bool cond, const char* message) {
  if (!cond) throw std::invalid_argument(message);
}

// Strictly positive occupation coordinates of an inner point of a minimal
// motion; throws OutsideSupport on or beyond the boundary.
Eigen::VectorXd inner_occupation(const VelocitySet& vs, double t, const Eigen::VectorXd& x) {
  Eigen::VectorXd occ;
  try {
    occ = position_to_occupation(vs, t, x);
  } catch (const OutsideHull&) {
    throw OutsideSupport("density: point outside the support");
  }
  const double tol = 1e-12 * std::max(1.0, t);
  for (int h = 0; h < occ.size(); ++h) {
    if (occ(h) <= tol) throw OutsideSupport("density: point not strictly inside the support");
  }
  return occ;
}

double bordered_abs_det(const Eigen::MatrixXd& velocities) {
  const int n = int(velocities.cols());
  Eigen::MatrixXd B(n, n);
  B.row(0).setOnes();
  B.bottomRows(n - 1) = velocities;
  return std::abs(B.partialPivLu().determinant());
}

void for_each_subset(int n, const std::function<void(const std::vector<int>&)>& fn) {
  for (unsigned mask = 1; mask < (1u << unsigned(n)); ++mask) {
    std::vector<int> subset;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << unsigned(i))) subset.push_back(i);
    }
    fn(subset);
  }
}

// lambda * p_h for the complete canonical closed forms
struct CompleteParams {
  double lambda = 0.0;
  Eigen::VectorXd p;
};

CompleteParams complete_params(const MotionModel& model) {
  require(model.kernel().kind() == SwitchKernel::Kind::Complete,
          "complete-motion formula requires a complete kernel");
  require(model.is_canonical(), "complete-motion formula requires canonical velocities");
  const WaitingTimeModel waiting = model.analytic_waiting();
  require(waiting.all_exponential(), "complete-motion formula requires exponential waits");
  const double lambda = waiting.law(0).rate;
  for (int h = 0; h < waiting.size(); ++h) {
    require(std::abs(waiting.law(h).rate - lambda) <= 1e-12 * lambda,
            "complete-motion formula requires a single homogeneous rate");
  }
  return {lambda, model.kernel().initial()};
}

} // namespace

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

SeriesResult bessel_tilde(int alpha, int nu, double z, double tol) {
  require(nu >= 1, "bessel_tilde: nu must be >= 1");
  require(alpha >= 0 && alpha <= nu, "bessel_tilde: need 0 <= alpha <= nu");
  require(z >= 0.0, "bessel_tilde: z must be nonnegative");
  SeriesResult out;
  if (z == 0.0) {
    out.value = 1.0;
    out.terms_used = 1;
    return out;
  }
  const double q = std::pow(z / double(nu), double(nu));
  double term = 1.0;
  double sum = 1.0;
  int n = 0;
  for (;;) {
    const double ratio = q / (std::pow(double(n + 1), double(nu - alpha)) *
                              std::pow(double(n + 2), double(alpha)));
    term *= ratio;
    sum += term;
    ++n;
    if (n > 100000) throw Error("bessel_tilde: series failed to converge");
    if (ratio < 1.0 && term <= tol * sum) {
      const double next_ratio = q / (std::pow(double(n + 1), double(nu - alpha)) *
                                     std::pow(double(n + 2), double(alpha)));
      out.remainder_bound = term * next_ratio / (1.0 - next_ratio);
      break;
    }
  }
  out.value = sum;
  out.terms_used = n + 1;
  return out;
}

double bessel_i1(double z) {
  const double y = 0.25 * z * z;
  double term = 0.5 * z;
  double sum = term;
  for (int n = 0; n < 100000; ++n) {
    term *= y / (double(n + 1) * double(n + 2));
    sum += term;
    if (term <= 1e-17 * sum) break;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Master formula
// ---------------------------------------------------------------------------

DensityValue minimal_joint_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                   const std::vector<int>& counts, int k) {
  const VelocitySet& vs = model.velocities();
  if (!vs.is_minimal()) throw NotMinimal("minimal_joint_density: motion is not minimal");
  const int n = vs.num_velocities();
  require(int(counts.size()) == n, "minimal_joint_density: counts size mismatch");
  require(k >= 0 && k < n, "minimal_joint_density: terminal index out of range");
  if (counts[std::size_t(k)] < 1) {
    throw InconsistentCounts("minimal_joint_density: terminal velocity needs an open displacement");
  }
  for (int c : counts) {
    if (c < 1) {
      throw InconsistentCounts("minimal_joint_density: inner region requires every count >= 1");
    }
  }
  const WaitingTimeModel waiting = model.analytic_waiting();
  const Eigen::VectorXd occ = inner_occupation(vs, t, x);

  double value = allocation_probability(model.kernel(), counts, k);
  value /= bordered_abs_det(vs.matrix());
  for (int h = 0; h < n; ++h) {
    if (h == k) continue;
    value *= waiting_density(waiting, h, counts[std::size_t(h)], occ(h));
  }
  value *= counting_tail(waiting, k, occ(k), counts[std::size_t(k)] - 1);

  DensityValue out;
  out.value = value;
  out.formula = "master-joint";
  out.terms_used = 1;
  return out;
}

DensityValue face_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                          const std::vector<int>& face, const std::vector<int>& counts, int k) {
  const VelocitySet& vs = model.velocities();
  if (!vs.is_minimal()) throw NotMinimal("face_density: motion is not minimal");
  const int n = vs.num_velocities();
  require(!face.empty() && std::is_sorted(face.begin(), face.end()),
          "face_density: face must be a sorted nonempty index set");
  require(int(counts.size()) == n, "face_density: counts size mismatch");
  require(std::find(face.begin(), face.end(), k) != face.end(),
          "face_density: terminal velocity must belong to the face");
  for (int h = 0; h < n; ++h) {
    const bool on_face = std::find(face.begin(), face.end(), h) != face.end();
    if (on_face && counts[std::size_t(h)] < 1) {
      throw InconsistentCounts("face_density: counts must be >= 1 on the face");
    }
    if (!on_face && counts[std::size_t(h)] != 0) {
      throw InconsistentCounts("face_density: counts must vanish off the face");
    }
  }
  if (int(face.size()) == n) return minimal_joint_density(model, t, x, counts, k);

  const WaitingTimeModel waiting = model.analytic_waiting();
  const VelocitySet sub = vs.subset(face);
  const ProjectionMap pm = build_projection(sub);
  Eigen::MatrixXd sub_proj(pm.target_dim, int(face.size()));
  for (std::size_t i = 0; i < face.size(); ++i) sub_proj.col(int(i)) = pm.apply(sub.velocity(int(i)));

  // occupation times of the face velocities from the projected coordinates
  const int H1 = int(face.size());
  Eigen::MatrixXd B(H1, H1);
  B.row(0).setOnes();
  B.bottomRows(H1 - 1) = sub_proj;
  Eigen::VectorXd rhs(H1);
  rhs(0) = t;
  rhs.tail(H1 - 1) = pm.apply(x);
  const Eigen::VectorXd occ = B.partialPivLu().solve(rhs);
  const double tol = 1e-12 * std::max(1.0, t);
  for (int i = 0; i < H1; ++i) {
    if (occ(i) <= tol) throw OutsideFace("face_density: point not in the face's relative interior");
  }
  // the point must actually sit on the face, not merely project into it
  Eigen::VectorXd reassembled = Eigen::VectorXd::Zero(vs.dim());
  for (int i = 0; i < H1; ++i) reassembled += vs.velocity(face[std::size_t(i)]) * occ(i);
  if ((reassembled - x).norm() > 1e-9 * std::max(1.0, vs.scale() * t)) {
    throw OutsideFace("face_density: point does not lie on the face");
  }

  double value = allocation_probability(model.kernel(), counts, k);
  value /= bordered_abs_det(sub_proj);
  int k_local = 0;
  for (int i = 0; i < H1; ++i) {
    if (face[std::size_t(i)] == k) k_local = i;
  }
  for (int i = 0; i < H1; ++i) {
    const int h = face[std::size_t(i)];
    if (h == k) continue;
    value *= waiting_density(waiting, h, counts[std::size_t(h)], occ(i));
  }
  value *= counting_tail(waiting, k, occ(k_local), counts[std::size_t(k)] - 1);

  DensityValue out;
  out.value = value;
  out.formula = "face-joint";
  out.face = face;
  out.terms_used = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Cyclic canonical motions
// ---------------------------------------------------------------------------

namespace {

struct CyclicParams {
  Eigen::VectorXd rates;
  Eigen::VectorXd p;
};

CyclicParams cyclic_params(const MotionModel& model) {
  require(model.kernel().kind() == SwitchKernel::Kind::Cyclic,
          "cyclic_density: kernel must be cyclic");
  require(model.is_canonical(), "cyclic_density: velocities must be canonical");
  const WaitingTimeModel waiting = model.analytic_waiting();
  require(waiting.all_exponential(), "cyclic_density: waits must be exponential");
  Eigen::VectorXd rates(waiting.size());
  for (int h = 0; h < waiting.size(); ++h) rates(h) = waiting.law(h).rate;
  return {rates, model.kernel().initial()};
}

} // namespace

DensityValue cyclic_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                            int residue, double tol) {
  const auto [rates, p] = cyclic_params(model);
  const int D = model.velocities().dim();
  const int n = D + 1;
  require(residue >= 0 && residue <= D, "cyclic_density: residue out of range");
  const Eigen::VectorXd occ = inner_occupation(model.velocities(), t, x);

  double w = 1.0;
  double exponent = 0.0;
  for (int h = 0; h < n; ++h) {
    w *= rates(h) * occ(h);
    exponent -= rates(h) * occ(h);
  }
  const double z = double(n) * std::pow(w, 1.0 / double(n));
  const SeriesResult bessel = bessel_tilde(residue, n, z, tol);

  auto wrap = [n](int h) { return ((h % n) + n) % n; };
  double sum = 0.0;
  if (residue == 0) {
    for (int k = 0; k < n; ++k) {
      double prod = 1.0;
      for (int h = 0; h < n; ++h) {
        if (h != k) prod *= rates(h);
      }
      sum += p(wrap(k + 1)) * prod;
    }
  } else {
    double all_rates = 1.0;
    for (int h = 0; h < n; ++h) all_rates *= rates(h);
    for (int k = 0; k < n; ++k) {
      double prod = occ(k);
      for (int i = 1; i <= residue - 1; ++i) {
        const int h = wrap(k - i);
        prod *= rates(h) * occ(h);
      }
      sum += p(wrap(k - residue + 1)) * prod;
    }
    sum *= all_rates;
  }

  DensityValue out;
  out.value = std::exp(exponent) * sum * bessel.value;
  out.formula = residue == 0 ? "cyclic-full-cycles" : "cyclic-residue";
  out.terms_used = bessel.terms_used;
  out.remainder_bound = std::exp(exponent) * sum * bessel.remainder_bound;
  return out;
}

double cyclic_density_total(const MotionModel& model, double t, const Eigen::VectorXd& x,
                            double tol) {
  double total = 0.0;
  for (int j = 0; j <= model.velocities().dim(); ++j) {
    total += cyclic_density(model, t, x, j, tol).value;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Complete canonical motions
// ---------------------------------------------------------------------------

namespace {

// Shared shell summation for the count expansions of the complete canonical
// motion. weight_mode 0: plain sum (inner density); 1: weight by the count of
// velocity `weight_index` (density joint with the terminal velocity).
//
// The shell value is a product-polynomial coefficient,
//   S_m = (m + n [- 1])! e^{-lambda t} / lambda * [z^m] prod_h A_h(z),
// with A_h(z) = sum_j (lambda p_h)^{j+1} u_h^j / (j! (j+1)!) z^j, so the
// inner loops are plain convolutions with no transcendental calls.
SeriesResult complete_shell_sum(const CompleteParams& cp, double t, const Eigen::VectorXd& occ,
                                int weight_mode, int weight_index, double tol) {
  const int n = int(occ.size());
  const double base = std::exp(-cp.lambda * t) / cp.lambda;

  double c_max = 0.0;
  for (int h = 0; h < n; ++h) c_max = std::max(c_max, cp.lambda * cp.p(h) * occ(h));

  constexpr int kMaxShells = 300;  // keeps (m + n + 1)! finite in a double
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n));
  for (int h = 0; h < n; ++h) {
    auto& col = a[std::size_t(h)];
    col.resize(kMaxShells);
    col[0] = cp.lambda * cp.p(h);
    const double ratio = cp.lambda * cp.p(h) * occ(h);
    for (int j = 0; j + 1 < kMaxShells; ++j) {
      col[std::size_t(j) + 1] = col[std::size_t(j)] * ratio / (double(j + 1) * double(j + 2));
    }
    if (weight_mode == 1 && h == weight_index) {
      for (int j = 0; j < kMaxShells; ++j) col[std::size_t(j)] *= double(j + 1);
    }
  }
  std::vector<double> poly = a[0];
  std::vector<double> next(static_cast<std::size_t>(kMaxShells));
  for (int h = 1; h < n; ++h) {
    std::fill(next.begin(), next.end(), 0.0);
    const auto& col = a[std::size_t(h)];
    for (int i = 0; i < kMaxShells; ++i) {
      const double pi = poly[std::size_t(i)];
      if (pi == 0.0) continue;
      for (int j = 0; i + j < kMaxShells; ++j) next[std::size_t(i + j)] += pi * col[std::size_t(j)];
    }
    poly.swap(next);
  }

  double total = 0.0;
  double factorial = 1.0;  // (m + fact_start)! updated incrementally
  const int fact_start = weight_mode == 1 ? n - 1 : n;
  for (int i = 2; i <= fact_start; ++i) factorial *= double(i);

  SeriesResult out;
  for (int m = 0; m < kMaxShells; ++m) {
    if (m > 0) factorial *= double(m + fact_start);
    const double shell = base * factorial * poly[std::size_t(m)];
    total += shell;
    ++out.terms_used;

    // geometric tail: every composition of m+1 comes from a parent by
    // incrementing its largest coordinate (>= q), each parent used <= n times
    const int q = (m + n + n) / n;  // ceil((m + 1 + n) / n) with n = D+1
    const double denom = double(std::max(1, q - 1)) * double(q);
    double rho = double(n) * double(m + n + 1) * c_max / denom;
    if (weight_mode == 1) rho *= 2.0;  // terminal-count weight can grow by one per shell
    if (rho < 0.5 && m >= n) {
      const double rem = shell * rho / (1.0 - rho);
      if (rem <= tol * std::max(total, 1e-300)) {
        out.remainder_bound = rem;
        break;
      }
    }
  }
  out.value = total;
  return out;
}

} // namespace

double complete_joint_terminal_density(const MotionModel& model, double t,
                                       const Eigen::VectorXd& x, const std::vector<int>& counts,
                                       int k) {
  const CompleteParams cp = complete_params(model);
  const int n = model.velocities().num_velocities();
  require(int(counts.size()) == n, "complete_joint_terminal_density: counts size mismatch");
  if (counts[std::size_t(k)] < 1) {
    throw InconsistentCounts("complete_joint_terminal_density: terminal count must be >= 1");
  }
  for (int c : counts) {
    if (c < 1) throw InconsistentCounts("complete_joint_terminal_density: counts must be >= 1");
  }
  const Eigen::VectorXd occ = inner_occupation(model.velocities(), t, x);
  int total = 0;
  for (int c : counts) total += c;
  double lg = -cp.lambda * t - std::log(cp.lambda) + log_factorial(total - 1) +
              std::log(double(counts[std::size_t(k)]));
  for (int h = 0; h < n; ++h) {
    const int nh = counts[std::size_t(h)];
    lg += nh * std::log(cp.lambda * cp.p(h)) + (nh - 1) * std::log(occ(h)) -
          log_factorial(nh - 1) - log_factorial(nh);
  }
  return std::exp(lg);
}

double complete_joint_counts_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                     const std::vector<int>& counts) {
  const CompleteParams cp = complete_params(model);
  const int n = model.velocities().num_velocities();
  require(int(counts.size()) == n, "complete_joint_counts_density: counts size mismatch");
  for (int c : counts) {
    if (c < 1) throw InconsistentCounts("complete_joint_counts_density: counts must be >= 1");
  }
  const Eigen::VectorXd occ = inner_occupation(model.velocities(), t, x);
  int total = 0;
  for (int c : counts) total += c;
  double lg = -cp.lambda * t - std::log(cp.lambda) + log_factorial(total);
  for (int h = 0; h < n; ++h) {
    const int nh = counts[std::size_t(h)];
    lg += nh * std::log(cp.lambda * cp.p(h)) + (nh - 1) * std::log(occ(h)) -
          log_factorial(nh - 1) - log_factorial(nh);
  }
  return std::exp(lg);
}

DensityValue complete_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                              CompleteForm form, double tol) {
  const CompleteParams cp = complete_params(model);
  const Eigen::VectorXd occ = inner_occupation(model.velocities(), t, x);
  const int n = int(occ.size());

  DensityValue out;
  if (form == CompleteForm::Series) {
    const SeriesResult s = complete_shell_sum(cp, t, occ, 0, 0, tol);
    out.value = s.value;
    out.formula = "complete-series";
    out.terms_used = s.terms_used;
    out.remainder_bound = s.remainder_bound;
    return out;
  }

  // integral form: prefactor * int_0^W e^{-w} w^{(D+1)/2} prod I_1(2 sqrt(w c_h)) dw
  std::vector<double> c(static_cast<std::size_t>(n));
  double prefactor = std::exp(-cp.lambda * t) / cp.lambda;
  double sigma = 0.0;
  for (int h = 0; h < n; ++h) {
    c[std::size_t(h)] = cp.lambda * cp.p(h) * occ(h);
    prefactor *= std::sqrt(cp.lambda * cp.p(h) / occ(h));
    sigma += std::sqrt(c[std::size_t(h)]);
  }
  const double half_n = 0.5 * double(n);
  auto integrand = [&](double w) {
    double v = std::exp(-w) * std::pow(w, half_n);
    for (int h = 0; h < n; ++h) v *= bessel_i1(2.0 * std::sqrt(w * c[std::size_t(h)]));
    return v;
  };
  // decay envelope phi(w) = -w + 2 sigma sqrt(w) + (n/2) ln w, using I_1(z) < e^z
  auto phi = [&](double w) { return -w + 2.0 * sigma * std::sqrt(w) + half_n * std::log(w); };
  const double sqrt_peak = 0.5 * (sigma + std::sqrt(sigma * sigma + 2.0 * half_n));
  const double scale = std::exp(phi(std::max(sqrt_peak * sqrt_peak, 1e-12)));
  const double abs_tol = 0.5 * tol * std::max(scale, 1e-300);
  double W = std::max({16.0 * sigma * sigma, 4.0 * double(n), 40.0});
  auto slope = [&](double w) { return -1.0 + sigma / std::sqrt(w) + half_n / w; };
  while (slope(W) > -0.5) W *= 2.0;
  while (2.0 * std::exp(phi(W)) > abs_tol) W *= 1.5;
  const double integral = adaptive_simpson(integrand, 0.0, W, abs_tol);
  out.value = prefactor * integral;
  out.formula = "complete-integral";
  out.terms_used = 0;
  out.remainder_bound = prefactor * (2.0 * std::exp(phi(W)) + abs_tol);
  return out;
}

double complete_terminal_density(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                 int i, double tol) {
  const CompleteParams cp = complete_params(model);
  require(i >= 0 && i < model.velocities().num_velocities(),
          "complete_terminal_density: index out of range");
  const Eigen::VectorXd occ = inner_occupation(model.velocities(), t, x);
  return complete_shell_sum(cp, t, occ, 1, i, tol).value;
}

// ---------------------------------------------------------------------------
// Count-summed subset densities
// ---------------------------------------------------------------------------

double subset_density_with_geometry(const MotionModel& model, const std::vector<int>& subset,
                                    const Eigen::MatrixXd& geometry, double t,
                                    const Eigen::VectorXd& xi, double tol) {
  const int H1 = int(subset.size());
  const int n_all = model.velocities().num_velocities();
  const WaitingTimeModel waiting = model.analytic_waiting();
  constexpr int kMaxShells = 400;

  Eigen::MatrixXd B(H1, H1);
  B.row(0).setOnes();
  B.bottomRows(H1 - 1) = geometry;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  Eigen::VectorXd rhs(H1);
  rhs(0) = t;
  rhs.tail(H1 - 1) = xi;
  const Eigen::VectorXd occ = lu.solve(rhs);
  const double pos_tol = 1e-12 * std::max(1.0, t);
  for (int i = 0; i < H1; ++i) {
    if (occ(i) <= pos_tol) return 0.0;  // outside the open sub-support
  }
  const double inv_jacobian = 1.0 / std::abs(lu.determinant());

  const bool exponential = waiting.all_exponential();
  // Poisson-style envelope of a whole shell for exponential laws: the
  // composition sum of Erlang factors collapses by the multinomial theorem
  double sigma = 0.0, base = 0.0;
  if (exponential) {
    double expo = 0.0;
    for (int i = 0; i < H1; ++i) {
      const double lam = waiting.law(subset[std::size_t(i)]).rate;
      sigma += lam * occ(i);
      expo -= lam * occ(i);
    }
    double rate_sum = 0.0;
    for (int k = 0; k < H1; ++k) {
      double prod = 1.0;
      for (int i = 0; i < H1; ++i) {
        if (i != k) prod *= waiting.law(subset[std::size_t(i)]).rate;
      }
      rate_sum += prod;
    }
    base = rate_sum * std::exp(expo);
  }

  const SwitchKernel& kernel = model.kernel();
  double total = 0.0;
  double prev_shell = 0.0;
  int flat_shells = 0;

  for (int m = H1; m < kMaxShells; ++m) {
    double shell = 0.0;
    auto add_term = [&](const std::vector<int>& local_counts, int k_local, double alloc) {
      if (alloc == 0.0) return;
      double value = alloc * inv_jacobian;
      for (int i = 0; i < H1; ++i) {
        const int h = subset[std::size_t(i)];
        if (i == k_local) {
          value *= counting_tail(waiting, h, occ(i), local_counts[std::size_t(i)] - 1);
        } else {
          value *= waiting_density(waiting, h, local_counts[std::size_t(i)], occ(i));
        }
      }
      shell += value;
    };

    if (kernel.kind() == SwitchKernel::Kind::Cyclic) {
      // the run is a consecutive arc of the cycle; counts follow from (m, k)
      for (int i = 0; i < H1; ++i) {
        const int k = subset[std::size_t(i)];
        const int start = ((k - (m - 1)) % n_all + n_all) % n_all;
        std::vector<int> full(std::size_t(n_all), 0);
        for (int step = 0; step < m; ++step) full[std::size_t((start + step) % n_all)] += 1;
        bool supported = true;
        for (int h = 0; h < n_all && supported; ++h) {
          const bool in_subset = std::binary_search(subset.begin(), subset.end(), h);
          if (in_subset ? full[std::size_t(h)] < 1 : full[std::size_t(h)] != 0) supported = false;
        }
        if (!supported) continue;
        std::vector<int> local(static_cast<std::size_t>(H1));
        for (int j = 0; j < H1; ++j) local[std::size_t(j)] = full[std::size_t(subset[std::size_t(j)])];
        add_term(local, i, allocation_probability(kernel, full, k));
      }
    } else {
      // all positive compositions of m over the subset, each terminal in turn
      std::vector<int> local(static_cast<std::size_t>(H1));
      std::function<void(int, int)> rec = [&](int i, int remaining) {
        if (i == H1 - 1) {
          local[std::size_t(i)] = remaining;
          std::vector<int> full(std::size_t(n_all), 0);
          for (int j = 0; j < H1; ++j) full[std::size_t(subset[std::size_t(j)])] = local[std::size_t(j)];
          for (int k_local = 0; k_local < H1; ++k_local) {
            const double alloc = allocation_probability(kernel, full, subset[std::size_t(k_local)]);
            add_term(local, k_local, alloc);
          }
          return;
        }
        for (int c = 1; c <= remaining - (H1 - 1 - i); ++c) {
          local[std::size_t(i)] = c;
          rec(i + 1, remaining - c);
        }
      };
      rec(0, m);
    }

    total += shell;
    const int j = m - H1;
    if (exponential) {
      // remainder <= base * inv_jacobian * sum_{j' > j} sigma^j' / j'!
      if (double(j) + 2.0 > sigma) {
        const double tail = std::exp((j + 1) * std::log(std::max(sigma, 1e-300)) -
                                     log_factorial(j + 1)) /
                            (1.0 - sigma / (double(j) + 2.0));
        if (base * inv_jacobian * tail <= tol * std::max(total, 1e-300)) break;
      }
    } else {
      // pragmatic stop for non-exponential laws: three consecutive
      // negligible, non-increasing shells
      if (shell <= tol * std::max(total, 1e-300) && shell <= prev_shell) {
        if (++flat_shells >= 3) break;
      } else {
        flat_shells = 0;
      }
      prev_shell = shell;
    }
  }
  return total;
}

DensityValue face_density_total(const MotionModel& model, double t, const Eigen::VectorXd& x,
                                const std::vector<int>& face, double tol) {
  const VelocitySet& vs = model.velocities();
  require(!face.empty() && std::is_sorted(face.begin(), face.end()),
          "face_density_total: face must be a sorted nonempty index set");
  const VelocitySet sub = vs.subset(face);
  const ProjectionMap pm = build_projection(sub);
  Eigen::MatrixXd projected(pm.target_dim, int(face.size()));
  for (std::size_t i = 0; i < face.size(); ++i) projected.col(int(i)) = pm.apply(sub.velocity(int(i)));
  if (pm.target_dim != int(face.size()) - 1) {
    throw NotMinimal("face_density_total: face velocities are affinely dependent");
  }
  // the point must sit on the face, not merely project into it
  Eigen::MatrixXd B(int(face.size()), int(face.size()));
  B.row(0).setOnes();
  B.bottomRows(int(face.size()) - 1) = projected;
  Eigen::VectorXd rhs(int(face.size()));
  rhs(0) = t;
  rhs.tail(int(face.size()) - 1) = pm.apply(x);
  const Eigen::VectorXd occ = B.partialPivLu().solve(rhs);
  Eigen::VectorXd reassembled = Eigen::VectorXd::Zero(vs.dim());
  for (std::size_t i = 0; i < face.size(); ++i) reassembled += vs.velocity(face[i]) * occ(int(i));
  if ((reassembled - x).norm() > 1e-9 * std::max(1.0, vs.scale() * t)) {
    throw OutsideFace("face_density_total: point does not lie on the face");
  }

  DensityValue out;
  out.value = subset_density_with_geometry(model, face, projected, t, pm.apply(x), tol);
  out.formula = "face-sum";
  out.face = face;
  return out;
}

double vertex_mass(const MotionModel& model, double t, int h) {
  // only velocity h used: every event redraw must return h, so the mass is
  // p_h E[ P(h,h)^{#completed h-renewals by t} ]
  const WaitingTimeModel waiting = model.analytic_waiting();
  const double p_h = model.kernel().initial()(h);
  const double self = model.kernel().transition()(h, h);
  const WaitingLaw& law = waiting.law(h);
  if (law.kind == WaitingLaw::Kind::Exponential) {
    return p_h * std::exp(-law.rate * t * (1.0 - self));
  }
  double sum = 0.0;
  double factor = 1.0;
  for (int n = 0; n < 10000; ++n) {
    const double tail = counting_tail(waiting, h, t, n);
    sum += tail * factor;
    factor *= self;
    if (factor < 1e-16 || (n > 4 && tail < 1e-16)) break;
  }
  return p_h * sum;
}

// ---------------------------------------------------------------------------
// Probability masses
// ---------------------------------------------------------------------------

double face_mass_complete(const Eigen::VectorXd& p, double lambda_t, const std::vector<int>& face) {
  require(!face.empty(), "face_mass_complete: empty face");
  double sum = 0.0;
  for (int h : face) {
    double prod = p(h) * std::exp(lambda_t * p(h));
    for (int j : face) {
      if (j != h) prod *= std::expm1(lambda_t * p(j));
    }
    sum += prod;
  }
  return std::exp(-lambda_t) * sum;
}

double face_mass_complete_alternating(const Eigen::VectorXd& p, double lambda_t,
                                      const std::vector<int>& face) {
  const int H1 = int(face.size());
  double total = 0.0;
  for_each_subset(H1, [&](const std::vector<int>& local) {
    double ps = 0.0;
    for (int i : local) ps += p(face[std::size_t(i)]);
    const double term = ps * std::exp(-lambda_t * (1.0 - ps));
    total += (((H1 - int(local.size())) % 2 == 0) ? term : -term);
  });
  return total;
}

double mass_exactly_velocities(const Eigen::VectorXd& p, double lambda_t, int num_velocities) {
  const int n = int(p.size());
  require(num_velocities >= 1 && num_velocities <= n, "mass_exactly_velocities: bad count");
  double total = 0.0;
  for_each_subset(n, [&](const std::vector<int>& subset) {
    const int h = int(subset.size());
    if (h > num_velocities) return;
    double ps = 0.0;
    for (int i : subset) ps += p(i);
    const double weight = binomial(n - h, num_velocities - h);
    const double term = weight * ps * std::exp(-lambda_t * (1.0 - ps));
    total += ((num_velocities - h) % 2 == 0) ? term : -term;
  });
  return total;
}

double border_mass(const Eigen::VectorXd& p, double lambda_t) {
  const int n = int(p.size());
  double total = 0.0;
  for_each_subset(n, [&](const std::vector<int>& subset) {
    const int h = int(subset.size());
    if (h > n - 1) return;
    double ps = 0.0;
    for (int i : subset) ps += p(i);
    const double term = ps * std::exp(-lambda_t * (1.0 - ps));
    total += ((n - 1 - h) % 2 == 0) ? term : -term;
  });
  return total;
}

// ---------------------------------------------------------------------------
// Combinatorial identities
// ---------------------------------------------------------------------------

IdentityCheck identity_subset_power_sum(std::span<const double> c, int m) {
  const int H = int(c.size());
  require(H >= 1, "identity_subset_power_sum: empty coefficient list");
  require(m >= 0, "identity_subset_power_sum: negative exponent");
  IdentityCheck out;
  for_each_subset(H, [&](const std::vector<int>& subset) {
    double cs = 0.0;
    for (int i : subset) cs += c[std::size_t(i)];
    const double term = std::pow(cs, double(m));
    out.scale = std::max(out.scale, std::abs(term));
    out.lhs += ((H - int(subset.size())) % 2 == 0) ? term : -term;
  });
  if (m == 0) {
    // every power is 1 and the alternating binomial sum misses its empty
    // term: the value is -(-1)^H, not 0
    out.rhs = (H % 2 == 0) ? -1.0 : 1.0;
    return out;
  }
  if (m >= H) {
    // all-positive compositions of m into H parts
    std::vector<int> parts(static_cast<std::size_t>(H));
    std::function<void(int, int)> rec = [&](int i, int remaining) {
      if (i == H - 1) {
        parts[std::size_t(i)] = remaining;
        double prod = multinomial(m, parts);
        for (int j = 0; j < H; ++j) prod *= std::pow(c[std::size_t(j)], double(parts[std::size_t(j)]));
        out.rhs += prod;
        return;
      }
      for (int v = 1; v <= remaining - (H - 1 - i); ++v) {
        parts[std::size_t(i)] = v;
        rec(i + 1, remaining - v);
      }
    };
    rec(0, m);
  }
  return out;
}

IdentityCheck identity_exp_product(std::span<const double> c, double beta) {
  const int H = int(c.size());
  require(H >= 1, "identity_exp_product: empty coefficient list");
  IdentityCheck out;
  for (int h = 0; h < H; ++h) {
    double prod = c[std::size_t(h)] * std::exp(beta * c[std::size_t(h)]);
    for (int j = 0; j < H; ++j) {
      if (j != h) prod *= std::expm1(beta * c[std::size_t(j)]);
    }
    out.scale = std::max(out.scale, std::abs(prod));
    out.lhs += prod;
  }
  for_each_subset(H, [&](const std::vector<int>& subset) {
    double cs = 0.0;
    for (int i : subset) cs += c[std::size_t(i)];
    const double term = cs * std::exp(beta * cs);
    out.scale = std::max(out.scale, std::abs(term));
    out.rhs += ((H - int(subset.size())) % 2 == 0) ? term : -term;
  });
  return out;
}

} // namespace fvrm
