#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace swarm {

using Cons = std::array<double, 5>;

enum class SourceVariant { Conservative, Printed };
enum class Splitting { Symmetric, XY };

inline std::string to_string(SourceVariant v) { return v == SourceVariant::Printed ? "printed" : "conservative"; }
inline std::string to_string(Splitting s) { return s == Splitting::XY ? "xy" : "symmetric"; }

inline SourceVariant parse_source_variant(const std::string& s) {
  if (s == "conservative") return SourceVariant::Conservative;
  if (s == "printed") return SourceVariant::Printed;
  throw InvalidParameter("unknown source_variant '" + s + "' (expected conservative or printed)");
}

inline Splitting parse_splitting(const std::string& s) {
  if (s == "symmetric") return Splitting::Symmetric;
  if (s == "xy") return Splitting::XY;
  throw InvalidParameter("unknown splitting '" + s + "' (expected symmetric or xy)");
}

struct FVConfig {
  HydroCoeffs coeffs;
  bool nsh = false;
  double cfl = 0.1;
  // dt |b| max(rho, rho^2) / dx^2 bound for the phase-gradient part of the flux
  double diffusion_number = 0.25;
  int nx = 100, ny = 100;
  double t_end = 1.0;
  double perturb_rho = 0.25, perturb_u = 0.75, perturb_alpha = 0.75;
  SourceVariant source = SourceVariant::Conservative;
  Splitting splitting = Splitting::Symmetric;

  /// Coefficients actually used: the noiseless limit sets b' = b and Theta' = 0.
  HydroCoeffs effective() const {
    HydroCoeffs c = coeffs;
    if (nsh) {
      c.bp = c.b;
      c.thetap = 0.0;
    }
    return c;
  }

  void validate() const {
    if (!(cfl > 0.0 && cfl <= 1.0)) throw InvalidParameter("cfl must lie in (0, 1]");
    if (!(diffusion_number > 0.0 && diffusion_number <= 0.5))
      throw InvalidParameter("diffusion_number must lie in (0, 0.5]");
    if (nx < 3 || ny < 3) throw InvalidParameter("grid needs at least 3 cells per direction");
    if (nx != ny) throw InvalidParameter("the unit-torus grid requires nx == ny (dx = dy)");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InvalidParameter("t_end must be >= 0");
    for (double a : {perturb_rho, perturb_u, perturb_alpha})
      if (!(a >= 0.0)) throw InvalidParameter("perturbation amplitudes must be >= 0");
    if (perturb_rho >= 1.0) throw InvalidParameter("density perturbation must stay below 1");
  }
};

struct HydroState {
  int nx = 0, ny = 0;
  double dx = 0.0;
  double time = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t complex_flags = 0;  // interfaces that needed the complex-eigenvalue envelope
  double phase_shift = 0.0;         // accumulated mean phase rotation (unwrapped)
  std::array<std::vector<double>, 5> q;

  std::size_t cells() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
  Cons at(std::size_t c) const { return {q[0][c], q[1][c], q[2][c], q[3][c], q[4][c]}; }
  void set(std::size_t c, const Cons& v) {
    for (int a = 0; a < 5; ++a) q[a][c] = v[a];
  }
  void resize(int nx_, int ny_) {
    nx = nx_;
    ny = ny_;
    dx = 1.0 / nx_;
    for (auto& f : q) f.assign(cells(), 0.0);
  }
  double mass() const {
    // pairwise-free Kahan sum keeps the total reproducible
    double s = 0.0, c = 0.0;
    for (double v : q[0]) {
      double y = v * dx * dx - c;
      double t = s + y;
      c = (t - s) - y;
      s = t;
    }
    return s;
  }
  double alpha(std::size_t c) const { return wrap_angle(std::atan2(q[4][c], q[3][c])); }
  double velocity_angle(std::size_t c) const { return wrap_angle(std::atan2(q[2][c], q[1][c])); }
};

/// Wrap-aware phase difference across an interface, divided by the spacing.
inline double phase_gradient(double cl, double sl, double cr, double sr, double dx) {
  if (!(std::hypot(cl, sl) > 0.0) || !(std::hypot(cr, sr) > 0.0))
    throw DegeneratePhase("phase gradient of a zero-magnitude (cos, sin) pair");
  return std::atan2(sr * cl - sl * cr, cr * cl + sr * sl) / dx;
}

struct FluxEigs {
  double nu1 = 0, nu2 = 0, nup = 0, num = 0;
  bool complex = false;  // Delta < 0: nup/num hold the real part +/- |imaginary part|

  double min() const { return std::min({nu1, nu2, nup, num}); }
  double max() const { return std::max({nu1, nu2, nup, num}); }
  double max_abs() const { return std::max(std::abs(min()), std::abs(max())); }
};

/// Eigenvalues of the x-direction flux Jacobian.
inline FluxEigs flux_jacobian_eigs(const Cons& q, double z, const HydroCoeffs& c) {
  if (!(q[0] > 0.0)) throw PositivityLoss(0, 0.0);
  const double u = q[1] / q[0], bz = c.b * z * q[0];
  const double delta = 4.0 * c.c2 * (c.c2 - c.c1) * u * u + 4.0 * c.c1 * c.theta +
                       4.0 * c.b * z * (c.c1 - c.c2) * q[1] + bz * bz;
  FluxEigs e;
  e.nu1 = c.c1 * u + bz;
  e.nu2 = c.c2 * u + bz;
  const double mid = c.c2 * u + 1.5 * bz, half = 0.5 * std::sqrt(std::abs(delta));
  e.nup = mid + half;
  e.num = mid - half;
  e.complex = delta < 0.0;
  return e;
}

/// Analytic x-direction flux with the interface phase gradient z.
inline Cons analytic_flux(const Cons& q, double z, const HydroCoeffs& c) {
  const double u = q[1] / q[0], bz = c.b * z * q[0];
  return {c.c1 * q[1] + bz * q[0], c.c2 * q[1] * u + c.theta * q[0] + bz * q[1],
          c.c2 * q[2] * u + bz * q[2], c.c1 * q[3] * u + bz * q[3], c.c1 * q[4] * u + bz * q[4]};
}

/// The 5x5 Jacobian of analytic_flux with respect to q (z held fixed).
inline std::array<std::array<double, 5>, 5> flux_jacobian(const Cons& q, double z, const HydroCoeffs& c) {
  const double u = q[1] / q[0], v = q[2] / q[0], a3 = q[3] / q[0], a4 = q[4] / q[0];
  const double bz = c.b * z;
  std::array<std::array<double, 5>, 5> J{};
  J[0] = {2.0 * bz * q[0], c.c1, 0, 0, 0};
  J[1] = {-c.c2 * u * u + c.theta + bz * q[1], 2.0 * c.c2 * u + bz * q[0], 0, 0, 0};
  J[2] = {-c.c2 * u * v + bz * q[2], c.c2 * v, c.c2 * u + bz * q[0], 0, 0};
  J[3] = {-c.c1 * u * a3 + bz * q[3], c.c1 * a3, 0, c.c1 * u + bz * q[0], 0};
  J[4] = {-c.c1 * u * a4 + bz * q[4], c.c1 * a4, 0, 0, c.c1 * u + bz * q[0]};
  return J;
}

struct HlleResult {
  Cons flux{};
  double smax = 0.0;
  bool complex = false;
};

/// Speed c1 u + 3 b z rho of the density/phase wave that the frozen-z Jacobian misses:
/// z depends on the neighbouring phases, and linearising with that dependence gives speeds
/// nu1 and nu1 + 2 b z rho.
inline double phase_coupling_speed(const Cons& q, double z, const HydroCoeffs& c) {
  return c.c1 * q[1] / q[0] + 3.0 * c.b * z * q[0];
}

inline HlleResult hlle_flux_ex(const Cons& qL, const Cons& qR, double z, const HydroCoeffs& c) {
  FluxEigs eL = flux_jacobian_eigs(qL, z, c), eR = flux_jacobian_eigs(qR, z, c);
  const double wL = phase_coupling_speed(qL, z, c), wR = phase_coupling_speed(qR, z, c);
  const double bm = std::min({eL.min(), eR.min(), wL, wR, 0.0});
  const double bp = std::max({eL.max(), eR.max(), wL, wR, 0.0});
  HlleResult r;
  r.smax = std::max(-bm, bp);
  r.complex = eL.complex || eR.complex;
  Cons fL = analytic_flux(qL, z, c);
  if (bp == bm) {
    r.flux = fL;
    return r;
  }
  Cons fR = analytic_flux(qR, z, c);
  const double inv = 1.0 / (bp - bm);
  for (int a = 0; a < 5; ++a) r.flux[a] = (bp * fL[a] - bm * fR[a] + bp * bm * (qR[a] - qL[a])) * inv;
  return r;
}

inline Cons hlle_flux(const Cons& qL, const Cons& qR, double z, const HydroCoeffs& c) {
  return hlle_flux_ex(qL, qR, z, c).flux;
}

namespace detail {

inline Cons swap_xy(Cons q) {
  std::swap(q[1], q[2]);
  return q;
}

struct SweepOutcome {
  double smax = 0.0;
  std::uint64_t complex = 0;
};

/// One directional HLLE update in: -> out. dir 0 sweeps along x (index i), dir 1 along y.
/// Returns the largest wave speed seen; out is untouched if dt * smax / dx exceeds cfl_limit.
inline SweepOutcome sweep(const HydroState& in, HydroState& out, int dir, double dt,
                          const HydroCoeffs& c, double cfl_limit) {
  const int n_along = dir == 0 ? in.nx : in.ny;
  const int n_lines = dir == 0 ? in.ny : in.nx;
  const double h = in.dx;
  std::vector<double> line_smax(n_lines, 0.0);
  std::vector<std::uint64_t> line_complex(n_lines, 0);
  std::vector<Cons> flux(static_cast<std::size_t>(n_along) * n_lines);
  auto cell = [&](int line, int pos) {
    return dir == 0 ? in.index(pos, line) : in.index(line, pos);
  };
  parallel_for(static_cast<std::size_t>(n_lines), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t L = lo; L < hi; ++L) {
      const int line = static_cast<int>(L);
      for (int p = 0; p < n_along; ++p) {
        std::size_t a = cell(line, p), b = cell(line, (p + 1) % n_along);
        Cons qL = in.at(a), qR = in.at(b);
        if (dir == 1) {
          qL = swap_xy(qL);
          qR = swap_xy(qR);
        }
        double z = phase_gradient(qL[3], qL[4], qR[3], qR[4], h);
        HlleResult r = hlle_flux_ex(qL, qR, z, c);
        if (dir == 1) r.flux = swap_xy(r.flux);
        flux[L * n_along + p] = r.flux;
        line_smax[L] = std::max(line_smax[L], r.smax);
        line_complex[L] += r.complex ? 1 : 0;
      }
    }
  }, std::max(1u, std::min(thread_count(), static_cast<unsigned>(n_lines / 8 + 1))));
  SweepOutcome o;
  for (int L = 0; L < n_lines; ++L) {
    o.smax = std::max(o.smax, line_smax[L]);
    o.complex += line_complex[L];
  }
  if (dt * o.smax / h > cfl_limit) return o;
  const double r = dt / h;
  for (int L = 0; L < n_lines; ++L) {
    for (int p = 0; p < n_along; ++p) {
      std::size_t a = cell(L, p);
      const Cons& fr = flux[static_cast<std::size_t>(L) * n_along + p];
      const Cons& fl = flux[static_cast<std::size_t>(L) * n_along + (p + n_along - 1) % n_along];
      for (int k = 0; k < 5; ++k) out.q[k][a] = in.q[k][a] - r * (fr[k] - fl[k]);
      if (!std::isfinite(out.q[0][a] + out.q[1][a] + out.q[2][a] + out.q[3][a] + out.q[4][a]))
        throw IntegrationDiverged("non-finite hydro state in cell " + std::to_string(a), in.steps);
      if (!(out.q[0][a] > 0.0))
        throw PositivityLoss(a, in.time);
    }
  }
  return o;
}

/// Largest wave speed over all interfaces in both directions.
inline double max_wave_speed(const HydroState& s, const HydroCoeffs& c) {
  double smax = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    for (int j = 0; j < s.ny; ++j) {
      for (int i = 0; i < s.nx; ++i) {
        std::size_t a = s.index(i, j);
        std::size_t b = dir == 0 ? s.index((i + 1) % s.nx, j) : s.index(i, (j + 1) % s.ny);
        Cons qL = s.at(a), qR = s.at(b);
        if (dir == 1) {
          qL = swap_xy(qL);
          qR = swap_xy(qR);
        }
        double z = phase_gradient(qL[3], qL[4], qR[3], qR[4], s.dx);
        FluxEigs eL = flux_jacobian_eigs(qL, z, c), eR = flux_jacobian_eigs(qR, z, c);
        smax = std::max({smax, eL.max_abs(), eR.max_abs(), std::abs(phase_coupling_speed(qL, z, c)),
                         std::abs(phase_coupling_speed(qR, z, c))});
      }
    }
  }
  return smax;
}

} // namespace detail

inline double max_wave_speed(const HydroState& s, const FVConfig& cfg) {
  return detail::max_wave_speed(s, cfg.effective());
}

/// Velocity normalisation: (q1, q2) rescaled to magnitude q0.
inline void relax_velocity(HydroState& s) {
  for (std::size_t c = 0; c < s.cells(); ++c) {
    double m = std::sqrt(s.q[1][c] * s.q[1][c] + s.q[2][c] * s.q[2][c]);
    if (!(m > 0.0)) throw DegeneratePhase("velocity vanished in cell " + std::to_string(c));
    double f = s.q[0][c] / m;
    s.q[1][c] *= f;
    s.q[2][c] *= f;
  }
}

/// (q3, q4) rescaled to magnitude q0.
inline void renormalize_phase(HydroState& s) {
  for (std::size_t c = 0; c < s.cells(); ++c) {
    double m = std::sqrt(s.q[3][c] * s.q[3][c] + s.q[4][c] * s.q[4][c]);
    if (!(m > 0.0)) throw DegeneratePhase("phase vector vanished in cell " + std::to_string(c));
    double f = s.q[0][c] / m;
    s.q[3][c] *= f;
    s.q[4][c] *= f;
  }
}

/// Rate of change of alpha from the source terms, per cell.
inline std::vector<double> phase_source_rate(const HydroState& s, const HydroCoeffs& c,
                                             SourceVariant variant) {
  std::vector<double> rate(s.cells(), 0.0);
  const double h = s.dx;
  const double db = c.b - c.bp;
  for (int j = 0; j < s.ny; ++j) {
    const int jn = (j + 1) % s.ny, js = (j + s.ny - 1) % s.ny;
    for (int i = 0; i < s.nx; ++i) {
      const int ie = (i + 1) % s.nx, iw = (i + s.nx - 1) % s.nx;
      std::size_t C = s.index(i, j), E = s.index(ie, j), W = s.index(iw, j), N = s.index(i, jn),
                  S = s.index(i, js);
      double gx = phase_gradient(s.q[3][W], s.q[4][W], s.q[3][E], s.q[4][E], 2.0 * h);
      double gy = phase_gradient(s.q[3][S], s.q[4][S], s.q[3][N], s.q[4][N], 2.0 * h);
      const double rho = s.q[0][C];
      double r = db * rho * (gx * gx + gy * gy);
      if (c.thetap != 0.0) {
        double lap = ((s.q[0][E] + s.q[0][W]) + (s.q[0][N] + s.q[0][S]) - 4.0 * rho) / (h * h);
        double rx = (s.q[0][E] - s.q[0][W]) / (2.0 * h), ry = (s.q[0][N] - s.q[0][S]) / (2.0 * h);
        double grad2 = rx * rx + ry * ry;
        double extra = variant == SourceVariant::Printed ? grad2 / (4.0 * rho) : grad2 / rho;
        r += c.thetap * (lap + extra);
      }
      rate[C] = r;
    }
  }
  return rate;
}

/// Rotates (q3, q4) by dt * rate.
inline void apply_phase_source(HydroState& s, const std::vector<double>& rate, double dt) {
  for (std::size_t c = 0; c < s.cells(); ++c) {
    const double w = dt * rate[c];
    if (w == 0.0) continue;
    const double cw = std::cos(w), sw = std::sin(w);
    const double a = s.q[3][c], b = s.q[4][c];
    s.q[3][c] = a * cw - b * sw;
    s.q[4][c] = b * cw + a * sw;
  }
}

struct StepInfo {
  double dt = 0.0;
  double cfl = 0.0;        // largest dt * |nu| / dx over all sweeps of the accepted step
  double max_speed = 0.0;  // largest |nu| seen
  int retries = 0;
};

/// One full split step. dt_cap bounds the step (e.g. to land on an output time).
inline StepInfo step(HydroState& s, const FVConfig& cfg, double dt_cap = INFINITY) {
  const HydroCoeffs c = cfg.effective();
  const double h = s.dx;
  double smax = detail::max_wave_speed(s, c);
  double rmax = 0.0;
  for (double r : s.q[0]) rmax = std::max(rmax, std::max(r, r * r));
  const double dt_diff = std::abs(c.b) * rmax > 0.0 ? cfg.diffusion_number * h * h / (std::abs(c.b) * rmax) : INFINITY;
  double dt = smax > 0.0 ? cfg.cfl * h / smax : dt_cap;
  dt = std::min({dt, dt_diff, dt_cap});
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw IntegrationDiverged("no admissible hydro time step", s.steps);
  const double limit = cfg.cfl * (1.0 + 1e-12);
  HydroState a = s, b = s, tmp = s;
  StepInfo info;
  std::uint64_t complex = 0;
  for (;;) {
    bool ok = true;
    double seen = 0.0;
    complex = 0;
    auto run = [&](HydroState& out, int first) {
      auto o1 = detail::sweep(s, tmp, first, dt, c, limit);
      seen = std::max(seen, o1.smax);
      complex += o1.complex;
      if (dt * o1.smax / h > limit) return false;
      auto o2 = detail::sweep(tmp, out, 1 - first, dt, c, limit);
      seen = std::max(seen, o2.smax);
      complex += o2.complex;
      return dt * o2.smax / h <= limit;
    };
    ok = run(a, 0);
    if (ok && cfg.splitting == Splitting::Symmetric) ok = run(b, 1);
    if (ok) {
      info.max_speed = seen;
      info.cfl = dt * seen / h;
      break;
    }
    if (++info.retries > 30) throw IntegrationDiverged("CFL retries exhausted", s.steps);
    dt = std::min(cfg.cfl * h / seen, dt_diff);
  }
  HydroState next = std::move(a);
  if (cfg.splitting == Splitting::Symmetric) {
    for (int k = 0; k < 5; ++k)
      for (std::size_t i = 0; i < s.cells(); ++i) next.q[k][i] = 0.5 * (next.q[k][i] + b.q[k][i]);
  }
  relax_velocity(next);
  if (!cfg.nsh) apply_phase_source(next, phase_source_rate(next, c, cfg.source), dt);
  renormalize_phase(next);
  // mean phase rotation of this step
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < s.cells(); ++i) {
    const double c0 = s.q[3][i], s0 = s.q[4][i], c1 = next.q[3][i], s1 = next.q[4][i];
    re += (c1 * c0 + s1 * s0) / (s.q[0][i] * next.q[0][i]);
    im += (s1 * c0 - c1 * s0) / (s.q[0][i] * next.q[0][i]);
  }
  next.phase_shift = s.phase_shift + std::atan2(im, re);
  next.time = s.time + dt;
  next.steps = s.steps + 1;
  next.complex_flags = s.complex_flags + complex;
  s = std::move(next);
  info.dt = dt;
  return info;
}

/// Mean phase speed so far: the travelling-wave lambda in alpha = ... - lambda t.
inline double phase_speed_estimate(const HydroState& s) {
  return s.time > 0.0 ? -s.phase_shift / s.time : 0.0;
}

/// Steps until t_target, landing on it exactly. on_step(state, info) runs after each step.
inline void advance_to(HydroState& s, const FVConfig& cfg, double t_target,
                       const std::function<void(const HydroState&, const StepInfo&)>& on_step = {}) {
  while (s.time < t_target * (1.0 - 1e-14) && t_target - s.time > 1e-15) {
    StepInfo info = step(s, cfg, t_target - s.time);
    if (on_step) on_step(s, info);
  }
}

/// Cell-centred doubly periodic travelling-wave data, optionally perturbed per cell.
inline HydroState init_tw_perturbed(const FVConfig& cfg, int p, int m, double u0_angle, bool perturb,
                                    std::uint64_t seed = 1, double alpha0 = 0.0) {
  cfg.validate();
  HydroState s;
  s.resize(cfg.nx, cfg.ny);
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const std::size_t c = s.index(i, j);
      const double x1 = (i + 0.5) * s.dx, x2 = (j + 0.5) * s.dx;
      double rho = 1.0, th = u0_angle, al = kTwoPi * (p * x1 + m * x2) + alpha0;
      if (perturb) {
        CounterStream rng(seed, c, 0, StreamPurpose::Perturb);
        rho += cfg.perturb_rho * (2.0 * rng.uniform() - 1.0);
        th += cfg.perturb_u * (2.0 * rng.uniform() - 1.0);
        al += cfg.perturb_alpha * (2.0 * rng.uniform() - 1.0);
      }
      s.set(c, {rho, rho * std::cos(th), rho * std::sin(th), rho * std::cos(al), rho * std::sin(al)});
    }
  }
  return s;
}

/// RMS over cells of the wrapped difference between alpha and 2 pi (p x1 + m x2) + alpha0 - lambda t.
/// alpha0 of the travelling wave closest to the phase field: circular mean of alpha - 2 pi (p x1 + m x2) + lambda t.
inline double fit_phase_offset(const HydroState& s, int p, int m, double lambda) {
  double re = 0.0, im = 0.0;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      const double x1 = (i + 0.5) * s.dx, x2 = (j + 0.5) * s.dx;
      const double d = s.alpha(s.index(i, j)) - kTwoPi * (p * x1 + m * x2) + lambda * s.time;
      re += std::cos(d);
      im += std::sin(d);
    }
  return std::atan2(im, re);
}

inline double phase_l2_deviation(const HydroState& s, int p, int m, double lambda, double alpha0 = 0.0) {
  double acc = 0.0;
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      const double x1 = (i + 0.5) * s.dx, x2 = (j + 0.5) * s.dx;
      const double exact = kTwoPi * (p * x1 + m * x2) + alpha0 - lambda * s.time;
      const double d = wrap_pi(s.alpha(s.index(i, j)) - exact);
      acc += d * d;
    }
  }
  return std::sqrt(acc / static_cast<double>(s.cells()));
}

/// RMS deviation of the density from a constant.
inline double density_l2_deviation(const HydroState& s, double rho0 = 1.0) {
  double acc = 0.0;
  for (double v : s.q[0]) acc += (v - rho0) * (v - rho0);
  return std::sqrt(acc / static_cast<double>(s.cells()));
}

} // namespace swarm
