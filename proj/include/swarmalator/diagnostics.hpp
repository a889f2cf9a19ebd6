#pragma once

#include "errors.hpp"
#include "particles.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace swarm {

/// (1/2pi) arg( (1/N) sum (1 + cos phi) e^{2 pi i x2} ), in [0, 1).
inline double center_of_mass_x2(const ParticleState& s) {
  if (s.size() == 0) throw InvalidParameter("center of mass of an empty state");
  double re = 0.0, im = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double m = 1.0 + std::cos(s.phase[k]);
    re += m * std::cos(kTwoPi * s.x2[k]);
    im += m * std::sin(kTwoPi * s.x2[k]);
  }
  re /= static_cast<double>(s.size());
  im /= static_cast<double>(s.size());
  if (std::hypot(re, im) < 1e-12)
    throw UndefinedObservable("center of mass undefined: vanishing resultant");
  return wrap_angle(std::atan2(im, re)) / kTwoPi;
}

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
};

/// Removes wrap events (|jump| > 0.5) from a series of circular coordinates in [0, 1).
inline std::vector<double> unwrap_circular(const std::vector<double>& y) {
  std::vector<double> out(y.size());
  if (y.empty()) return out;
  out[0] = y[0];
  double offset = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    double d = y[i] - y[i - 1];
    if (d > 0.5) offset -= 1.0;
    else if (d < -0.5) offset += 1.0;
    out[i] = y[i] + offset;
  }
  return out;
}

/// Ordinary least squares y = a + b t with the standard error of b.
inline SlopeFit ols(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw InsufficientData("regression needs at least two distinct times");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * tm;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - f.intercept - f.slope * t[i];
    ssr += r * r;
  }
  f.std_error = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2) / sxx) : 0.0;
  return f;
}

/// Travelling-wave speed: slope of the unwrapped center-of-mass series.
inline SlopeFit wave_speed(const std::vector<double>& times, const std::vector<double>& series) {
  if (times.size() != series.size()) throw InvalidParameter("time and value series differ in length");
  if (times.size() < 10) throw InsufficientData("wave speed needs at least 10 samples");
  return ols(times, unwrap_circular(series));
}

struct FieldGrid {
  int nx = 0, ny = 0;
  double dx = 0.01;
  std::vector<double> density;    // nx * ny, index i + nx * j
  std::vector<double> mean_phase;  // nx * ny, in [0, 2 pi)
  int cnx = 0, cny = 0;
  double coarse = 0.05;
  std::vector<double> mean_vel_x, mean_vel_y;  // cnx * cny
};

namespace detail {
inline int cells_for(double h, const char* name) {
  if (!(h > 0.0 && h <= 1.0)) throw InvalidParameter(std::string(name) + " must lie in (0, 1]");
  double n = std::round(1.0 / h);
  if (std::abs(n * h - 1.0) > 1e-9) throw InvalidParameter(std::string(name) + " must divide 1 evenly");
  return static_cast<int>(n);
}
inline int cell_index(double x, int n) { return std::min(static_cast<int>(x * n), n - 1); }
} // namespace detail

inline FieldGrid rasterize(const ParticleState& s, double dx = 0.01, double coarse = 0.05) {
  FieldGrid g;
  g.dx = dx;
  g.coarse = coarse;
  g.nx = g.ny = detail::cells_for(dx, "dx");
  g.cnx = g.cny = detail::cells_for(coarse, "coarse");
  const std::size_t cells = static_cast<std::size_t>(g.nx) * g.ny;
  const std::size_t ccells = static_cast<std::size_t>(g.cnx) * g.cny;
  std::vector<std::size_t> count(cells, 0), ccount(ccells, 0);
  std::vector<double> pc(cells, 0.0), ps(cells, 0.0);
  g.mean_vel_x.assign(ccells, 0.0);
  g.mean_vel_y.assign(ccells, 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::size_t c = detail::cell_index(s.x1[k], g.nx) + static_cast<std::size_t>(g.nx) * detail::cell_index(s.x2[k], g.ny);
    ++count[c];
    pc[c] += std::cos(s.phase[k]);
    ps[c] += std::sin(s.phase[k]);
    std::size_t cc = detail::cell_index(s.x1[k], g.cnx) + static_cast<std::size_t>(g.cnx) * detail::cell_index(s.x2[k], g.cny);
    ++ccount[cc];
    g.mean_vel_x[cc] += std::cos(s.theta[k]);
    g.mean_vel_y[cc] += std::sin(s.theta[k]);
  }
  g.density.assign(cells, 0.0);
  g.mean_phase.assign(cells, 0.0);
  const double n = static_cast<double>(s.size());
  for (std::size_t c = 0; c < cells; ++c) {
    if (count[c] == 0) continue;
    g.density[c] = static_cast<double>(count[c]) / n;
    g.mean_phase[c] = wrap_angle(std::atan2(ps[c], pc[c]));
  }
  for (std::size_t c = 0; c < ccells; ++c) {
    if (ccount[c] == 0) continue;
    g.mean_vel_x[c] /= static_cast<double>(ccount[c]);
    g.mean_vel_y[c] /= static_cast<double>(ccount[c]);
  }
  return g;
}

/// Particle counts in the strips x2 in [k/nstrips, (k+1)/nstrips).
inline std::vector<std::size_t> band_profile(const ParticleState& s, int nstrips = 100) {
  if (nstrips < 2) throw InvalidParameter("nstrips must be >= 2");
  std::vector<std::size_t> counts(static_cast<std::size_t>(nstrips), 0);
  for (double x2 : s.x2) ++counts[detail::cell_index(x2, nstrips)];
  return counts;
}

struct OrderParameters {
  double j_norm = 0.0, l_norm = 0.0;
  double mean_angle = 0.0, mean_phase = 0.0;
};

inline OrderParameters order_parameters(const ParticleState& s) {
  if (s.size() == 0) throw InvalidParameter("order parameters of an empty state");
  double cx = 0, sx = 0, cp = 0, sp = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cx += std::cos(s.theta[k]);
    sx += std::sin(s.theta[k]);
    cp += std::cos(s.phase[k]);
    sp += std::sin(s.phase[k]);
  }
  const double n = static_cast<double>(s.size());
  OrderParameters o;
  o.j_norm = std::hypot(cx, sx) / n;
  o.l_norm = std::hypot(cp, sp) / n;
  o.mean_angle = wrap_angle(std::atan2(sx, cx));
  o.mean_phase = wrap_angle(std::atan2(sp, cp));
  return o;
}

} // namespace swarm
