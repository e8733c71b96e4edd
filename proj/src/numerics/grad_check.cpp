#include "pvfd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pvfd {

GradCheckReport grad_check(const ScalarFn& f, const GradientFn& gradient,
                           std::span<const double> x, double eps, double tol,
                           std::span<const std::size_t> coordinates, double zero_floor) {
  const std::vector<double> analytic = gradient(x);
  std::vector<std::size_t> all;
  if (coordinates.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coordinates = all;
  }
  std::vector<double> probe(x.begin(), x.end());
  GradCheckReport report;
  for (auto i : coordinates) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(probe);
    probe[i] = saved - eps;
    const double down = f(probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double diff = std::abs(analytic[i] - numeric);
    const double err = diff / std::max(scale, zero_floor);
    ++report.checked;
    if (err > report.worst_relative_error || report.checked == 1) {
      report.worst_relative_error = err;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.worst_relative_error < tol;
  return report;
}

}  // namespace pvfd
