#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "rdpv/random.hpp"

namespace rdpv::testutil {

// Central finite difference of a scalar function at coordinate i.
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x, std::size_t i, double h = 1e-5) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Relative error with the spec's denominator convention.
inline double rel_err(double analytic, double reference) {
  return std::abs(analytic - reference) / (std::abs(reference) + 1e-8);
}

inline std::vector<double> random_vector(std::size_t n, rdpv::RandomStream& rng,
                                         double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace rdpv::testutil
