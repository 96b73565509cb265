#include "fvrm/grid.hpp"

#include <cmath>
#include <stdexcept>

#include "fvrm/math.hpp"

namespace fvrm {

namespace {

// Eulerian number A(D, s): volume fraction D! * vol{ f in [0,1]^D : s <= sum f < s+1 }.
double eulerian(int D, int s) {
  double a = 0.0;
  for (int j = 0; j <= s; ++j) {
    const double term = binomial(D + 1, j) * std::pow(double(s + 1 - j), D);
    a += (j % 2 == 0 ? term : -term);
  }
  return a;
}

} // namespace

SimplexGrid::SimplexGrid(int dim, int bins, double t) : dim_(dim), bins_(bins), t_(t) {
  if (dim < 1 || bins < 1 || t <= 0.0) throw std::invalid_argument("SimplexGrid: bad parameters");
}

std::vector<int> SimplexGrid::key_for(const Eigen::VectorXd& x) const {
  std::vector<int> key(static_cast<std::size_t>(dim_) + 1);
  double frac_sum = 0.0;
  for (int d = 0; d < dim_; ++d) {
    const double u = x(d) * double(bins_) / t_;
    int i = int(std::floor(u));
    i = std::max(0, std::min(bins_ - 1, i));
    key[std::size_t(d)] = i;
    frac_sum += u - double(i);
  }
  int s = int(std::floor(frac_sum));
  s = std::max(0, std::min(dim_ - 1, s));
  key[std::size_t(dim_)] = s;
  return key;
}

bool SimplexGrid::contains_key(const std::vector<int>& key) const {
  int sum = 0;
  for (int d = 0; d < dim_; ++d) {
    if (key[std::size_t(d)] < 0 || key[std::size_t(d)] >= bins_) return false;
    sum += key[std::size_t(d)];
  }
  const int s = key[std::size_t(dim_)];
  if (s < 0 || s >= dim_) return false;
  return sum + s <= bins_ - 1;
}

double SimplexGrid::cell_volume(const std::vector<int>& key) const {
  const int s = key[std::size_t(dim_)];
  double vol = eulerian(dim_, s) * std::pow(t_ / double(bins_), dim_);
  for (int i = 2; i <= dim_; ++i) vol /= double(i);
  return vol;
}

void SimplexGrid::for_each_cell(const std::function<void(const std::vector<int>&)>& fn) const {
  std::vector<int> key(std::size_t(dim_) + 1, 0);
  std::function<void(int, int)> rec = [&](int d, int used) {
    if (d == dim_) {
      for (int s = 0; s < dim_ && used + s <= bins_ - 1; ++s) {
        key[std::size_t(dim_)] = s;
        fn(key);
      }
      return;
    }
    for (int i = 0; used + i <= bins_ - 1; ++i) {
      key[std::size_t(d)] = i;
      rec(d + 1, used + i);
    }
  };
  rec(0, 0);
}

Eigen::VectorXd SimplexGrid::cell_centroid(const std::vector<int>& key) const {
  // centroid of the slab within the unit cube, shifted and scaled
  const int s = key[std::size_t(dim_)];
  Eigen::VectorXd c(dim_);
  const double w = t_ / double(bins_);
  // slab centroid along the diagonal: fractional coordinates average to
  // (s + 1/2)/D per axis by symmetry
  const double f = (double(s) + 0.5) / double(dim_);
  for (int d = 0; d < dim_; ++d) c(d) = (double(key[std::size_t(d)]) + f) * w;
  return c;
}

double SimplexGrid::cell_integral(const std::vector<int>& key,
                                  const std::function<double(const Eigen::VectorXd&)>& f,
                                  double tol) const {
  const double w = t_ / double(bins_);
  if (dim_ == 1) {
    const double a = double(key[0]) * w;
    const double b = a + w;
    return adaptive_simpson([&](double x) {
      Eigen::VectorXd v(1);
      v(0) = x;
      return f(v);
    }, a, b, tol);
  }
  if (dim_ == 2) {
    const double i = double(key[0]), j = double(key[1]);
    const int s = key[2];
    Eigen::Vector2d a, b, c;
    if (s == 0) {
      a = {i * w, j * w};
      b = {(i + 1) * w, j * w};
      c = {i * w, (j + 1) * w};
    } else {
      a = {(i + 1) * w, j * w};
      b = {i * w, (j + 1) * w};
      c = {(i + 1) * w, (j + 1) * w};
    }
    return integrate_triangle(f, a, b, c, tol);
  }
  return f(cell_centroid(key)) * cell_volume(key);
}

BoxGrid::BoxGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, int bins)
    : lo_(std::move(lo)), hi_(std::move(hi)), bins_(bins) {
  if (lo_.size() != hi_.size() || bins < 1) throw std::invalid_argument("BoxGrid: bad parameters");
  for (int d = 0; d < lo_.size(); ++d) {
    if (!(hi_(d) > lo_(d))) throw std::invalid_argument("BoxGrid: empty extent");
  }
}

std::vector<int> BoxGrid::key_for(const Eigen::VectorXd& x) const {
  std::vector<int> key(static_cast<std::size_t>(dim()));
  for (int d = 0; d < dim(); ++d) {
    const double u = (x(d) - lo_(d)) / (hi_(d) - lo_(d)) * double(bins_);
    key[std::size_t(d)] = std::max(0, std::min(bins_ - 1, int(std::floor(u))));
  }
  return key;
}

void BoxGrid::cell_bounds(const std::vector<int>& key, Eigen::VectorXd& lo,
                          Eigen::VectorXd& hi) const {
  lo.resize(dim());
  hi.resize(dim());
  for (int d = 0; d < dim(); ++d) {
    const double w = (hi_(d) - lo_(d)) / double(bins_);
    lo(d) = lo_(d) + double(key[std::size_t(d)]) * w;
    hi(d) = lo(d) + w;
  }
}

double BoxGrid::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < dim(); ++d) v *= (hi_(d) - lo_(d)) / double(bins_);
  return v;
}

void BoxGrid::for_each_cell(const std::function<void(const std::vector<int>&)>& fn) const {
  std::vector<int> key(std::size_t(dim()), 0);
  std::function<void(int)> rec = [&](int d) {
    if (d == dim()) {
      fn(key);
      return;
    }
    for (int i = 0; i < bins_; ++i) {
      key[std::size_t(d)] = i;
      rec(d + 1);
    }
  };
  rec(0);
}

Eigen::VectorXd BoxGrid::cell_centroid(const std::vector<int>& key) const {
  Eigen::VectorXd lo, hi;
  cell_bounds(key, lo, hi);
  return 0.5 * (lo + hi);
}

double BoxGrid::cell_integral(const std::vector<int>& key,
                              const std::function<double(const Eigen::VectorXd&)>& f, double tol,
                              const std::vector<double>& kinks) const {
  Eigen::VectorXd lo, hi;
  cell_bounds(key, lo, hi);
  if (dim() == 1) {
    return adaptive_simpson_split([&](double x) {
      Eigen::VectorXd v(1);
      v(0) = x;
      return f(v);
    }, lo(0), hi(0), kinks, tol);
  }
  return f(cell_centroid(key)) * cell_volume();
}

namespace {

double triangle_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

double integrate_triangle_rec(const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                              const Eigen::Vector2d& c, double coarse, double tol, int depth) {
  const Eigen::Vector2d ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  const double area4 = triangle_area(a, ab, ca);
  const double f0 = f((a + ab + ca) / 3.0) * area4;
  const double f1 = f((ab + b + bc) / 3.0) * area4;
  const double f2 = f((ca + bc + c) / 3.0) * area4;
  const double f3 = f((ab + bc + ca) / 3.0) * area4;
  const double fine = f0 + f1 + f2 + f3;
  if (depth <= 0 || std::abs(fine - coarse) <= 3.0 * tol) {
    return fine + (fine - coarse) / 3.0;
  }
  return integrate_triangle_rec(f, a, ab, ca, f0, 0.25 * tol, depth - 1) +
         integrate_triangle_rec(f, ab, b, bc, f1, 0.25 * tol, depth - 1) +
         integrate_triangle_rec(f, ca, bc, c, f2, 0.25 * tol, depth - 1) +
         integrate_triangle_rec(f, ab, bc, ca, f3, 0.25 * tol, depth - 1);
}

} // namespace

double integrate_triangle(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                          const Eigen::Vector2d& c, double tol, int max_depth) {
  const double coarse = f((a + b + c) / 3.0) * triangle_area(a, b, c);
  return integrate_triangle_rec(f, a, b, c, coarse, tol, max_depth);
}

} // namespace fvrm
