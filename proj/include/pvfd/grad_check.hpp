#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pvfd {

struct GradCheckReport {
  bool passed = true;
  std::size_t worst_index = 0;
  double worst_relative_error = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

// Scalar objective and its reverse-mode gradient at a point.
using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Compares `gradient(x)` to central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps.
// The per-coordinate error is |a - n| / max(|a|, |n|, zero_floor). The floor
// should sit above the round-off of the difference quotient, roughly
// |f| * 2^-52 / eps, so coordinates FD cannot resolve get an absolute bound of
// tol * zero_floor instead of a meaningless relative one.
// `coordinates` restricts the check to a subset (all coordinates when empty).
GradCheckReport grad_check(const ScalarFn& f, const GradientFn& gradient,
                           std::span<const double> x, double eps, double tol,
                           std::span<const std::size_t> coordinates = {},
                           double zero_floor = 1e-10);

}  // namespace pvfd
