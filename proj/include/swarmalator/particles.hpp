#pragma once

#include "errors.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace swarm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Minimum-image displacement on the unit torus, result in (-0.5, 0.5].
inline double min_image(double d) { return d - std::ceil(d - 0.5); }

/// Wrap a coordinate into [0, 1).
inline double wrap_unit(double x) {
  x -= std::floor(x);
  return x >= 1.0 ? 0.0 : x;
}

struct KernelSet {
  double force_amplitude = 0.0;  // |omega'| for the normalised linear kernel
  double cutoff = 0.0;
  double sampling_weight = 0.0;  // zeta = eta = weight * 1{r <= R}

  static KernelSet for_radius(double R) {
    return {3.0 / (kPi * R * R * R), R, 1.0 / (R * R)};
  }

  /// omega(r) = (3/pi)(1 - r/R)/R^2 on r <= R; integrates to one over the plane.
  double omega(double r) const {
    return r <= cutoff ? 3.0 / kPi * (1.0 - r / cutoff) / (cutoff * cutoff) : 0.0;
  }
};

enum class Integrator { EulerMaruyama, Pdmp };

struct SimConfig {
  std::size_t N = 1000;
  double R = 0.05;
  double nu_t = 1.0, D_t = 1.0, nup_t = 1.0, Dp_t = 1.0;
  double gamma = 0.0;
  double dt = 0.0;  // 0 selects the default rule
  std::uint64_t seed = 1;
  /// Gradient of an external potential V acting on the velocity (experimental).
  std::function<Vec2(double, double)> grad_potential;

  double nu() const { return nu_t / R; }
  double D() const { return D_t / R; }
  double nup() const { return nup_t / R; }
  double Dp() const { return Dp_t / R; }
  double k() const { return D_t > 0.0 ? nu_t / D_t : std::numeric_limits<double>::infinity(); }
  double kprime() const {
    return Dp_t > 0.0 ? nup_t / Dp_t : std::numeric_limits<double>::infinity();
  }
  KernelSet kernels() const { return KernelSet::for_radius(R); }

  /// dt = 1e-2 / max(C|gamma|, nu, D, nu', D').
  double default_dt() const {
    double m = std::max({kernels().force_amplitude * std::abs(gamma), nu(), D(), nup(), Dp()});
    return m > 0.0 ? 1e-2 / m : 1e-2;
  }
  double time_step() const { return dt > 0.0 ? dt : default_dt(); }

  void validate() const {
    if (N < 1) throw InvalidParameter("N must be >= 1");
    if (!(R > 0.0 && R < 0.5)) throw InvalidParameter("R must lie in (0, 0.5)");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw InvalidParameter("dt must be > 0");
    for (double v : {nu_t, D_t, nup_t, Dp_t})
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidParameter("rates must be finite and >= 0");
    if (!std::isfinite(gamma)) throw InvalidParameter("gamma must be finite");
  }
};

struct ParticleState {
  std::vector<double> x1, x2, theta, phase;
  std::vector<double> next_jump;  // PDMP clocks, empty until first used
  double time = 0.0;
  std::uint64_t step = 0;
  std::uint64_t jumps = 0;
  std::uint64_t degenerate_j = 0, degenerate_l = 0;

  std::size_t size() const { return x1.size(); }
  void resize(std::size_t n) {
    x1.assign(n, 0.0);
    x2.assign(n, 0.0);
    theta.assign(n, 0.0);
    phase.assign(n, 0.0);
    next_jump.clear();
  }
};

/// Per-particle local averages. j and l are the raw sums J_k, L_k; the mean directions are
/// their arguments, replaced by the particle's own angle when the sum degenerates.
struct Interactions {
  std::vector<double> jx, jy, lx, ly, fx, fy;
  std::vector<double> mean_vel_angle, mean_phase;
  std::uint64_t degenerate_j = 0, degenerate_l = 0;
};

inline constexpr double kDegenerateThreshold = 1e-14;

namespace detail {

/// Cell-sorted snapshot of the state used by the neighbour sums.
struct CellGrid {
  int nc = 1;
  std::vector<std::uint32_t> cell_start;
  std::vector<std::uint32_t> order;
  std::vector<double> sx, sy, ct, st, cp, sp;

  void build(const ParticleState& s, double R) {
    const std::size_t n = s.size();
    nc = std::max(1, static_cast<int>(std::floor(1.0 / R)));
    if (nc < 3) nc = 1;
    const std::size_t ncells = static_cast<std::size_t>(nc) * nc;
    std::vector<std::uint32_t> cell(n);
    cell_start.assign(ncells + 1, 0);
    for (std::size_t k = 0; k < n; ++k) {
      int cx = std::min(static_cast<int>(s.x1[k] * nc), nc - 1);
      int cy = std::min(static_cast<int>(s.x2[k] * nc), nc - 1);
      cell[k] = static_cast<std::uint32_t>(cy * nc + cx);
      ++cell_start[cell[k] + 1];
    }
    for (std::size_t c = 0; c < ncells; ++c) cell_start[c + 1] += cell_start[c];
    order.resize(n);
    std::vector<std::uint32_t> fill(cell_start.begin(), cell_start.end() - 1);
    for (std::size_t k = 0; k < n; ++k) order[fill[cell[k]]++] = static_cast<std::uint32_t>(k);
    sx.resize(n);
    sy.resize(n);
    ct.resize(n);
    st.resize(n);
    cp.resize(n);
    sp.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
      std::uint32_t k = order[a];
      sx[a] = s.x1[k];
      sy[a] = s.x2[k];
      ct[a] = std::cos(s.theta[k]);
      st[a] = std::sin(s.theta[k]);
      cp[a] = std::cos(s.phase[k]);
      sp[a] = std::sin(s.phase[k]);
    }
  }
};

struct PairSums {
  double jx = 0, jy = 0, lx = 0, ly = 0, fx = 0, fy = 0;
};

/// Calls visit(k, a, sums) for every particle k (sorted position a), in parallel over cells.
template <class Visit>
void for_each_neighbourhood(const CellGrid& g, double R, Visit&& visit) {
  const double R2 = R * R;
  const int nc = g.nc;
  const std::size_t ncells = static_cast<std::size_t>(nc) * nc;
  parallel_for(ncells, [&](std::size_t c_lo, std::size_t c_hi) {
    for (std::size_t c = c_lo; c < c_hi; ++c) {
      const int cx = static_cast<int>(c % nc), cy = static_cast<int>(c / nc);
      std::uint32_t nb_lo[9], nb_hi[9];
      double shx[9], shy[9];
      int nnb = 0;
      if (nc == 1) {
        nb_lo[0] = 0;
        nb_hi[0] = g.cell_start[1];
        shx[0] = shy[0] = 0.0;
        nnb = 1;
      } else {
        for (int oy = -1; oy <= 1; ++oy) {
          for (int ox = -1; ox <= 1; ++ox) {
            int x = cx + ox, y = cy + oy;
            double sx = 0.0, sy = 0.0;
            if (x < 0) { x += nc; sx = -1.0; } else if (x >= nc) { x -= nc; sx = 1.0; }
            if (y < 0) { y += nc; sy = -1.0; } else if (y >= nc) { y -= nc; sy = 1.0; }
            std::size_t id = static_cast<std::size_t>(y) * nc + x;
            nb_lo[nnb] = g.cell_start[id];
            nb_hi[nnb] = g.cell_start[id + 1];
            shx[nnb] = sx;
            shy[nnb] = sy;
            ++nnb;
          }
        }
      }
      for (std::uint32_t a = g.cell_start[c]; a < g.cell_start[c + 1]; ++a) {
        const double xa = g.sx[a], ya = g.sy[a], cpa = g.cp[a], spa = g.sp[a];
        PairSums s;
        for (int q = 0; q < nnb; ++q) {
          const double ox = shx[q] - xa, oy = shy[q] - ya;
          for (std::uint32_t b = nb_lo[q]; b < nb_hi[q]; ++b) {
            double dx = g.sx[b] + ox, dy = g.sy[b] + oy;
            if (nc == 1) {
              dx = min_image(g.sx[b] - xa);
              dy = min_image(g.sy[b] - ya);
            }
            const double r2 = dx * dx + dy * dy;
            if (r2 > R2) continue;
            s.jx += g.ct[b];
            s.jy += g.st[b];
            s.lx += g.cp[b];
            s.ly += g.sp[b];
            if (r2 > 0.0) {
              const double w = (g.sp[b] * cpa - g.cp[b] * spa) / std::sqrt(r2);
              s.fx += dx * w;
              s.fy += dy * w;
            }
          }
        }
        visit(g.order[a], a, s);
      }
    }
  });
}

} // namespace detail

/// Reusable buffers for the stepping routines.
struct SimWorkspace {
  detail::CellGrid grid;
};

inline Interactions compute_interactions(const ParticleState& state, const SimConfig& config,
                                         SimWorkspace& ws) {
  const std::size_t n = state.size();
  Interactions out;
  for (auto* v : {&out.jx, &out.jy, &out.lx, &out.ly, &out.fx, &out.fy, &out.mean_vel_angle,
                  &out.mean_phase})
    v->assign(n, 0.0);
  if (n == 0) return out;
  const KernelSet ker = config.kernels();
  const double zeta = ker.sampling_weight / static_cast<double>(n);
  const double fscale = -config.gamma * ker.force_amplitude / static_cast<double>(n);
  ws.grid.build(state, config.R);
  std::vector<std::uint8_t> degj(n, 0), degl(n, 0);
  detail::for_each_neighbourhood(ws.grid, config.R, [&](std::uint32_t k, std::uint32_t,
                                                        const detail::PairSums& s) {
    out.jx[k] = zeta * s.jx;
    out.jy[k] = zeta * s.jy;
    out.lx[k] = zeta * s.lx;
    out.ly[k] = zeta * s.ly;
    out.fx[k] = fscale * s.fx;
    out.fy[k] = fscale * s.fy;
    if (std::hypot(out.jx[k], out.jy[k]) < kDegenerateThreshold) {
      degj[k] = 1;
      out.mean_vel_angle[k] = state.theta[k];
    } else {
      out.mean_vel_angle[k] = wrap_angle(std::atan2(out.jy[k], out.jx[k]));
    }
    if (std::hypot(out.lx[k], out.ly[k]) < kDegenerateThreshold) {
      degl[k] = 1;
      out.mean_phase[k] = state.phase[k];
    } else {
      out.mean_phase[k] = wrap_angle(std::atan2(out.ly[k], out.lx[k]));
    }
  });
  for (std::size_t k = 0; k < n; ++k) {
    out.degenerate_j += degj[k];
    out.degenerate_l += degl[k];
  }
  return out;
}

inline Interactions compute_interactions(const ParticleState& state, const SimConfig& config) {
  SimWorkspace ws;
  return compute_interactions(state, config, ws);
}

namespace detail {

inline void check_finite(const ParticleState& s, std::size_t k) {
  if (!std::isfinite(s.x1[k]) || !std::isfinite(s.x2[k]) || !std::isfinite(s.theta[k]) ||
      !std::isfinite(s.phase[k]))
    throw IntegrationDiverged("non-finite particle state (particle " + std::to_string(k) + ")",
                              s.step);
}

} // namespace detail

/// One Euler-Maruyama step of the particle system.
inline void step_em(ParticleState& state, const SimConfig& config, SimWorkspace& ws) {
  const std::size_t n = state.size();
  if (n == 0) return;
  const double dt = config.time_step();
  const KernelSet ker = config.kernels();
  const double zeta = ker.sampling_weight / static_cast<double>(n);
  const double fscale = -config.gamma * ker.force_amplitude / static_cast<double>(n);
  const double nu = config.nu(), nup = config.nup();
  const double sd = std::sqrt(2.0 * config.D() * dt), sdp = std::sqrt(2.0 * config.Dp() * dt);
  const bool potential = static_cast<bool>(config.grad_potential);
  ws.grid.build(state, config.R);
  std::vector<std::uint8_t> flags(n, 0);
  detail::for_each_neighbourhood(ws.grid, config.R, [&](std::uint32_t k, std::uint32_t a,
                                                        const detail::PairSums& s) {
    const double ct = ws.grid.ct[a], st = ws.grid.st[a];
    const double cp = ws.grid.cp[a], sp = ws.grid.sp[a];
    const double jx = zeta * s.jx, jy = zeta * s.jy, lx = zeta * s.lx, ly = zeta * s.ly;
    const double jn = std::hypot(jx, jy), ln = std::hypot(lx, ly);
    // sin(mean - own) from the unnormalised sums
    double drift_t = 0.0, drift_p = 0.0;
    if (jn >= kDegenerateThreshold) drift_t = nu * (jy * ct - jx * st) / jn;
    else flags[k] |= 1;
    if (ln >= kDegenerateThreshold) drift_p = nup * (ly * cp - lx * sp) / ln;
    else flags[k] |= 2;
    if (potential) {
      Vec2 g = config.grad_potential(state.x1[k], state.x2[k]);
      drift_t += g.x * st - g.y * ct;
    }
    CounterStream rng(config.seed, k, state.step, StreamPurpose::Diffusion);
    const double xi = rng.normal(), xip = rng.normal();
    state.x1[k] = wrap_unit(state.x1[k] + (ct + fscale * s.fx) * dt);
    state.x2[k] = wrap_unit(state.x2[k] + (st + fscale * s.fy) * dt);
    state.theta[k] = wrap_angle(state.theta[k] + drift_t * dt + sd * xi);
    state.phase[k] = wrap_angle(state.phase[k] + drift_p * dt + sdp * xip);
    if (!std::isfinite(state.x1[k] + state.x2[k] + state.theta[k] + state.phase[k])) flags[k] |= 4;
  });
  for (std::size_t k = 0; k < n; ++k) {
    if (flags[k] & 4) detail::check_finite(state, k);
    state.degenerate_j += flags[k] & 1;
    state.degenerate_l += (flags[k] >> 1) & 1;
  }
  state.time += dt;
  ++state.step;
}

inline void step_em(ParticleState& state, const SimConfig& config) {
  SimWorkspace ws;
  step_em(state, config, ws);
}

/// One step of the jump process: positions drift, (theta, phi) are resampled from the local
/// von Mises equilibria whenever the particle's rate-D exponential clock rings.
inline void step_pdmp(ParticleState& state, const SimConfig& config, SimWorkspace& ws) {
  const std::size_t n = state.size();
  if (n == 0) return;
  const double rate = config.D();
  if (!(rate > 0.0)) throw InvalidParameter("PDMP requires a positive jump rate D");
  const double dt = config.time_step();
  const double k = config.k(), kp = config.kprime();
  const KernelSet ker = config.kernels();
  const double zeta = ker.sampling_weight / static_cast<double>(n);
  const double fscale = -config.gamma * ker.force_amplitude / static_cast<double>(n);
  if (state.next_jump.size() != n) {
    state.next_jump.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
      CounterStream rng(config.seed, q, state.step, StreamPurpose::Jump);
      state.next_jump[q] = state.time + rng.exponential(rate);
    }
  }
  const double t_end = state.time + dt;
  ws.grid.build(state, config.R);
  std::vector<std::uint32_t> jumps(n, 0);
  std::vector<std::uint8_t> flags(n, 0);
  detail::for_each_neighbourhood(ws.grid, config.R, [&](std::uint32_t q, std::uint32_t a,
                                                        const detail::PairSums& s) {
    const double ct = ws.grid.ct[a], st = ws.grid.st[a];
    state.x1[q] = wrap_unit(state.x1[q] + (ct + fscale * s.fx) * dt);
    state.x2[q] = wrap_unit(state.x2[q] + (st + fscale * s.fy) * dt);
    if (state.next_jump[q] <= t_end) {
      CounterStream rng(config.seed, q, state.step + 1, StreamPurpose::Jump);
      const double jx = zeta * s.jx, jy = zeta * s.jy, lx = zeta * s.lx, ly = zeta * s.ly;
      double mt = state.theta[q], mp = state.phase[q];
      if (std::hypot(jx, jy) >= kDegenerateThreshold) mt = std::atan2(jy, jx);
      else flags[q] |= 1;
      if (std::hypot(lx, ly) >= kDegenerateThreshold) mp = std::atan2(ly, lx);
      else flags[q] |= 2;
      while (state.next_jump[q] <= t_end) {
        state.theta[q] = sample_von_mises(rng, mt, k);
        state.phase[q] = sample_von_mises(rng, mp, kp);
        state.next_jump[q] += rng.exponential(rate);
        ++jumps[q];
      }
    }
    if (!std::isfinite(state.x1[q] + state.x2[q] + state.theta[q] + state.phase[q])) flags[q] |= 4;
  });
  for (std::size_t q = 0; q < n; ++q) {
    if (flags[q] & 4) detail::check_finite(state, q);
    state.jumps += jumps[q];
    state.degenerate_j += flags[q] & 1;
    state.degenerate_l += (flags[q] >> 1) & 1;
  }
  state.time = t_end;
  ++state.step;
}

inline void step_pdmp(ParticleState& state, const SimConfig& config) {
  SimWorkspace ws;
  step_pdmp(state, config, ws);
}

inline void check_unit(Vec2 u0) {
  if (std::abs(std::hypot(u0.x, u0.y) - 1.0) > 1e-12)
    throw InvalidParameter("initial velocity u0 must be a unit vector");
}

/// Uniform positions; theta ~ vM(angle(u0), k); phi ~ vM(2 pi (p x1 + m x2) + alpha0, kprime).
inline ParticleState init_doubly_periodic(const SimConfig& config, int p, int m, Vec2 u0, double k,
                                          double kprime, double alpha0 = 0.0) {
  config.validate();
  check_unit(u0);
  ParticleState s;
  s.resize(config.N);
  const double mu_t = std::atan2(u0.y, u0.x);
  parallel_for(config.N, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      CounterStream rng(config.seed, q, 0, StreamPurpose::Init);
      s.x1[q] = rng.uniform();
      s.x2[q] = rng.uniform();
      s.theta[q] = sample_von_mises(rng, mu_t, k);
      s.phase[q] = sample_von_mises(rng, kTwoPi * (p * s.x1[q] + m * s.x2[q]) + alpha0, kprime);
    }
  });
  return s;
}

inline ParticleState init_uniform(const SimConfig& config) {
  config.validate();
  ParticleState s;
  s.resize(config.N);
  parallel_for(config.N, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      CounterStream rng(config.seed, q, 0, StreamPurpose::Init);
      s.x1[q] = rng.uniform();
      s.x2[q] = rng.uniform();
      s.theta[q] = kTwoPi * rng.uniform();
      s.phase[q] = kTwoPi * rng.uniform();
    }
  });
  return s;
}

} // namespace swarm
