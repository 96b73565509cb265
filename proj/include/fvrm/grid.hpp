#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace fvrm {

/// Bins over the canonical support {x >= 0, sum x <= t}. Each hypercube cell
/// of side t/n is split into slabs s <= sum of fractional coordinates < s+1,
/// which tile the simplex exactly (no partial cells at the diagonal face).
/// Keys are (i_1, ..., i_D, s).
class SimplexGrid {
public:
  SimplexGrid(int dim, int bins, double t);

  int dim() const { return dim_; }
  int bins() const { return bins_; }
  double horizon() const { return t_; }

  std::vector<int> key_for(const Eigen::VectorXd& x) const;
  bool contains_key(const std::vector<int>& key) const;
  double cell_volume(const std::vector<int>& key) const;
  void for_each_cell(const std::function<void(const std::vector<int>&)>& fn) const;

  /// Integral of f over the cell. Exact subdivision quadrature for D <= 2,
  /// centroid rule otherwise.
  double cell_integral(const std::vector<int>& key,
                       const std::function<double(const Eigen::VectorXd&)>& f,
                       double tol) const;

  Eigen::VectorXd cell_centroid(const std::vector<int>& key) const;

private:
  int dim_;
  int bins_;
  double t_;
};

/// Axis-aligned boxes over [lo, hi], `bins` cells per axis. Keys are the
/// per-axis cell indices.
class BoxGrid {
public:
  BoxGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, int bins);

  int dim() const { return int(lo_.size()); }
  int bins() const { return bins_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }

  std::vector<int> key_for(const Eigen::VectorXd& x) const;
  void cell_bounds(const std::vector<int>& key, Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;
  double cell_volume() const;
  void for_each_cell(const std::function<void(const std::vector<int>&)>& fn) const;
  Eigen::VectorXd cell_centroid(const std::vector<int>& key) const;

  /// Integral of f over the cell; for D = 1 adaptive with the integrand
  /// pre-split at the given kink abscissae, centroid rule for D >= 2.
  double cell_integral(const std::vector<int>& key,
                       const std::function<double(const Eigen::VectorXd&)>& f, double tol,
                       const std::vector<double>& kinks = {}) const;

private:
  Eigen::VectorXd lo_, hi_;
  int bins_;
};

/// Adaptive integral of f over the triangle (a, b, c).
double integrate_triangle(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                          const Eigen::Vector2d& c, double tol, int max_depth = 12);

} // namespace fvrm
