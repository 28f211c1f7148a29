// Central finite differences shared by the gradient tests.

#ifndef STRATVR_TEST_GRADCHECK_HPP
#define STRATVR_TEST_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace stratvr::testing {

inline constexpr double kFiniteDifferenceStep = 1e-6;

inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x,
                                               double step = kFiniteDifferenceStep) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor). Coordinates are compared on the
/// scale of the whole gradient so near-zero entries do not dominate.
inline double gradient_relative_error(const std::vector<double>& analytic,
                                      const std::vector<double>& numeric, double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / scale;
}

}  // namespace stratvr::testing

#endif
