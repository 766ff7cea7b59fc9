#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sjde {

/// Equally spaced state grid on [lower, upper] with `points` nodes.
struct StateGrid {
  double lower = -9;
  double upper = 9;
  int points = 1900;

  void validate() const {
    if (!(lower < upper)) throw std::invalid_argument("grid lower bound must be below the upper bound");
    if (points < 3) throw std::invalid_argument("grid needs at least 3 points");
  }

  double spacing() const { return (upper - lower) / (points - 1); }
  double operator[](int j) const { return lower + (upper - lower) * j / (points - 1); }

  Eigen::ArrayXd values() const {
    Eigen::ArrayXd v(points);
    for (int j = 0; j < points; ++j) v[j] = (*this)[j];
    return v;
  }

  /// Nearest grid index; states outside the grid clamp to the boundary.
  int nearest(double x) const {
    const double t = std::round((x - lower) / spacing());
    return static_cast<int>(std::clamp(t, 0.0, static_cast<double>(points - 1)));
  }

  /// Left bracketing index j and weight on j+1 for linear interpolation,
  /// clamped to the grid.
  std::pair<int, double> bracket(double x) const {
    if (!(x > lower)) return {0, 0.0};
    if (!(x < upper)) return {points - 2, 1.0};
    const double t = (x - lower) / spacing();
    const int j = std::min(static_cast<int>(t), points - 2);
    return {j, std::clamp(t - j, 0.0, 1.0)};
  }

  template <typename Derived>
  double interpolate(const Eigen::ArrayBase<Derived>& f, double x) const {
    const auto [j, w] = bracket(x);
    return (1.0 - w) * f[j] + w * f[j + 1];
  }

  /// Index used for the initial state s_0 = 0. Throws if 0 is outside the grid.
  int origin_index() const {
    if (lower > 0 || upper < 0) throw std::invalid_argument("grid must contain the initial state 0");
    return nearest(0.0);
  }
  bool contains_origin_exactly() const { return (*this)[origin_index()] == 0.0; }
};

inline bool operator==(const StateGrid& a, const StateGrid& b) {
  return a.lower == b.lower && a.upper == b.upper && a.points == b.points;
}

}  // namespace sjde
