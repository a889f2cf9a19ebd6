#pragma once

#include "errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace swarm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
};

/// Adaptive Gauss-Kronrod integral over [a, b]. Throws QuadratureFailure when the
/// error estimate exceeds the relative tolerance measured against the L1 norm.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-10,
                                    const char* label = "integral") {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  QuadratureResult r;
  r.value = GK::integrate(f, a, b, 18, rel_tol, &r.error, &r.l1);
  if (!std::isfinite(r.value) || r.error > 10.0 * rel_tol * r.l1 + 1e-300) {
    throw QuadratureFailure(std::string("quadrature did not converge for ") + label, r.error);
  }
  return r;
}

/// Breakpoints clustering towards theta = 0, where e^{k(cos - 1)} concentrates for large k.
inline std::vector<double> peaked_breakpoints(double k) {
  std::vector<double> pts{0.0};
  double w = 1.0 / std::sqrt(k + 1.0);
  while (w < kPi) {
    pts.push_back(w);
    w *= 4.0;
  }
  pts.push_back(kPi);
  return pts;
}

/// Integral over [0, pi] split at breakpoints; errors and L1 norms are accumulated.
template <class F>
QuadratureResult integrate_split(F&& f, const std::vector<double>& pts, double rel_tol = 1e-10,
                                 const char* label = "integral") {
  QuadratureResult total;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    double err = 0.0, l1 = 0.0;
    double v = GK::integrate(f, pts[i], pts[i + 1], 18, rel_tol, &err, &l1);
    total.value += v;
    total.error += err;
    total.l1 += l1;
  }
  if (!std::isfinite(total.value) || total.error > 10.0 * rel_tol * total.l1 + 1e-300) {
    throw QuadratureFailure(std::string("quadrature did not converge for ") + label, total.error);
  }
  return total;
}

} // namespace swarm
