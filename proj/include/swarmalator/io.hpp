#pragma once

#include "analysis.hpp"
#include "config.hpp"
#include "diagnostics.hpp"
#include "hydro.hpp"
#include "particles.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#ifndef SWARM_VERSION
#define SWARM_VERSION "unknown"
#endif

namespace swarm {

namespace fs = std::filesystem;

inline const char* version() { return SWARM_VERSION; }

/// Creates `dir` by renaming a freshly built sibling into place. An existing non-empty
/// directory is an error unless force is set, in which case it is replaced.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force)
        throw ConfigError("output directory '" + dir.string() + "' exists and is not empty (use --force)");
    }
    fs::remove_all(dir, ec);
    if (ec) throw ConfigError("cannot clear output directory '" + dir.string() + "': " + ec.message());
  }
  fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent, ec);
  if (ec) throw ConfigError("cannot create '" + parent.string() + "': " + ec.message());
  fs::path tmp;
  for (std::uint64_t i = 0;; ++i) {
    tmp = parent / (dir.filename().string() + ".partial-" + std::to_string(splitmix64(i) % 1000000));
    if (fs::create_directory(tmp, ec)) break;
    if (i > 64) throw ConfigError("cannot create a staging directory next to '" + dir.string() + "'");
  }
  fs::create_directory(tmp / "frames");
  fs::rename(tmp, dir, ec);
  if (ec) {
    fs::remove_all(tmp);
    throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  }
}

inline void write_text(const fs::path& file, const std::string& text) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + file.string() + "'");
  f << text;
}

inline nlohmann::json coeffs_json(const HydroCoeffs& c) {
  return {{"c1", c.c1},   {"c2", c.c2},         {"c1prime", c.c1p},       {"c2prime", c.c2p},
          {"b", c.b},     {"bprime", c.bp},     {"Theta", c.theta},       {"Thetaprime", c.thetap},
          {"kappa", c.kappa}};
}

namespace detail {

template <class T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.append(reinterpret_cast<const char*>(b), sizeof(T));
}

inline void put_column(std::string& buf, const std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  } else {
    for (double x : v) put_le(buf, x);
  }
}

} // namespace detail

/// frames/NNNNNN.bin plus frames/index.csv (frame,time,file).
class FrameWriter {
public:
  explicit FrameWriter(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_ / "frames");
    index_.open(dir_ / "frames" / "index.csv", std::ios::binary);
    index_ << "frame,time,file\n";
  }

  /// Little endian: uint64 N, float64 time, then x1, x2, theta, phi columns.
  std::string write(const ParticleState& s) {
    std::string buf;
    detail::put_le<std::uint64_t>(buf, s.size());
    detail::put_le(buf, s.time);
    for (const auto* col : {&s.x1, &s.x2, &s.theta, &s.phase}) detail::put_column(buf, *col);
    return emit(buf, s.time);
  }

  /// Little endian: uint64 nx, uint64 ny, float64 time, then the five conserved fields.
  std::string write(const HydroState& s) {
    std::string buf;
    detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(s.nx));
    detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(s.ny));
    detail::put_le(buf, s.time);
    for (const auto& col : s.q) detail::put_column(buf, col);
    return emit(buf, s.time);
  }

  std::size_t count() const { return count_; }

private:
  std::string emit(const std::string& buf, double time) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.bin", count_);
    std::ofstream f(dir_ / "frames" / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write frame " + std::string(name));
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    index_ << count_ << ',' << format_double(time) << ',' << name << '\n';
    index_.flush();
    ++count_;
    return (dir_ / "frames" / name).string();
  }

  fs::path dir_;
  std::ofstream index_;
  std::size_t count_ = 0;
};

struct ParticleRunResult {
  std::vector<double> times, com;
  std::optional<SlopeFit> speed;
  ParticleState final_state;
  std::size_t frames = 0;
};

struct ParticleRunHooks {
  std::optional<fs::path> output;  // manifest, metrics.csv and frames land here
  std::function<void(const ParticleState&, std::size_t)> on_frame;
};

inline nlohmann::json particle_manifest(const ParticleRunConfig& c) {
  nlohmann::json j;
  j["mode"] = "particle";
  j["version"] = version();
  j["config"] = serialize(c);
  const auto& s = c.sim;
  j["params"] = {{"N", s.N},         {"R", s.R},         {"nu_t", s.nu_t}, {"D_t", s.D_t},
                 {"nup_t", s.nup_t}, {"Dp_t", s.Dp_t},   {"gamma", s.gamma},
                 {"dt", s.time_step()}, {"seed", s.seed}, {"kind", to_string(c.kind)},
                 {"init", to_string(c.init)}, {"p", c.p}, {"m", c.m}, {"u0_angle", c.u0_angle},
                 {"alpha0", c.alpha0}, {"t_end", c.t_end}, {"frame_every", c.frame_every},
                 {"record_every", c.metrics_interval()}, {"integrator", to_string(c.integrator)},
                 {"threads", thread_count()}};
  j["derived"] = {{"nu", s.nu()}, {"D", s.D()}, {"nuprime", s.nup()}, {"Dprime", s.Dp()},
                  {"k", s.k()}, {"kprime", s.kprime()}, {"force_amplitude", s.kernels().force_amplitude}};
  if (!c.bprime_spec.empty()) j["target_bprime"] = c.bprime_spec;
  if (std::isfinite(s.k()) && std::isfinite(s.kprime())) {
    const HydroCoeffs hc = assemble_coeffs({s.k(), s.kprime(), s.gamma, 2, c.kind});
    j["coefficients"] = coeffs_json(hc);
    j["predicted_com_speed"] = nullptr;
    if (c.p == 0 && c.m != 0) {
      const double lam = tw_lambda(0, c.m, std::cos(c.u0_angle), std::sin(c.u0_angle), hc, true);
      j["predicted_com_speed"] = lam / (kTwoPi * c.m);
    }
  } else {
    j["coefficients"] = nullptr;
  }
  return j;
}

namespace detail {

inline void write_row(std::ostream& o, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) o << ',';
    o << format_double(v);
    first = false;
  }
  o << '\n';
}

inline double safe_com(const ParticleState& s) {
  try {
    return center_of_mass_x2(s);
  } catch (const UndefinedObservable&) {
    return std::nan("");
  }
}

inline std::uint64_t steps_for(double interval, double dt) {
  if (!(interval > 0.0)) return 0;
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(interval / dt)));
}

} // namespace detail

/// Runs a particle simulation to t_end. Metrics are sampled every metrics_interval();
/// the speed is the slope of the unwrapped center of mass (needs ten samples).
inline ParticleRunResult run_particles(const ParticleRunConfig& c, const ParticleRunHooks& hooks = {}) {
  c.sim.validate();
  const double dt = c.sim.time_step();
  const auto nsteps = static_cast<std::uint64_t>(std::ceil(c.t_end / dt - 1e-9));
  const std::uint64_t record = detail::steps_for(c.metrics_interval(), dt);
  const std::uint64_t frame = detail::steps_for(c.frame_every, dt);

  ParticleRunResult r;
  const double ua = c.u0_angle;
  ParticleState s = c.init == ParticleInit::Uniform
                        ? init_uniform(c.sim)
                        : init_doubly_periodic(c.sim, c.p, c.m, {std::cos(ua), std::sin(ua)}, c.sim.k(),
                                               c.sim.kprime(), c.alpha0);

  std::optional<FrameWriter> frames;
  std::ofstream metrics;
  if (hooks.output) {
    write_text(*hooks.output / "manifest.json", particle_manifest(c).dump(2) + "\n");
    metrics.open(*hooks.output / "metrics.csv", std::ios::binary);
    metrics << "time,com_x2,wave_speed_running,j_norm,l_norm,mean_phase\n";
    if (frame) frames.emplace(*hooks.output);
  }
  auto observe = [&] {
    const double com = detail::safe_com(s);
    r.times.push_back(s.time);
    r.com.push_back(com);
    double running = std::nan("");
    if (r.times.size() >= 10 && std::isfinite(com)) {
      try {
        running = wave_speed(r.times, r.com).slope;
      } catch (const NumericalError&) {
      }
    }
    if (metrics.is_open()) {
      const OrderParameters o = order_parameters(s);
      detail::write_row(metrics, {s.time, com, running, o.j_norm, o.l_norm, o.mean_phase});
    }
  };
  auto snapshot = [&] {
    if (frames) frames->write(s);
    if (hooks.on_frame) hooks.on_frame(s, r.frames);
    ++r.frames;
  };

  SimWorkspace ws;
  observe();
  if (frame) snapshot();
  for (std::uint64_t n = 1; n <= nsteps; ++n) {
    if (c.integrator == Integrator::Pdmp) step_pdmp(s, c.sim, ws);
    else step_em(s, c.sim, ws);
    if (n % record == 0 || n == nsteps) observe();
    if (frame && (n % frame == 0)) snapshot();
  }
  bool finite = true;
  for (double v : r.com) finite = finite && std::isfinite(v);
  if (finite && r.times.size() >= 10) r.speed = wave_speed(r.times, r.com);
  r.final_state = std::move(s);
  return r;
}

struct HydroRunResult {
  HydroState final_state;
  std::uint64_t steps = 0;
  double mass0 = 0.0, mass1 = 0.0;
  double phase_speed = 0.0;
  double lambda_theory = 0.0;
  std::size_t frames = 0;
};

struct HydroRunHooks {
  std::optional<fs::path> output;
  std::function<void(const HydroState&, std::size_t)> on_frame;
};

inline nlohmann::json hydro_manifest(const HydroRunConfig& c) {
  nlohmann::json j;
  j["mode"] = "hydro";
  j["version"] = version();
  j["config"] = serialize(c);
  j["params"] = {{"nx", c.fv.nx},       {"ny", c.fv.ny},         {"k", c.model.k},
                 {"kprime", c.model.kprime}, {"gamma", c.model.gamma}, {"kind", to_string(c.model.kind)},
                 {"nsh", c.fv.nsh},     {"p", c.p},              {"m", c.m},
                 {"u0_angle", c.u0_angle}, {"alpha0", c.alpha0}, {"perturb", c.perturb},
                 {"t_end", c.fv.t_end}, {"frame_every", c.frame_every}, {"seed", c.seed},
                 {"cfl", c.fv.cfl},     {"source_variant", to_string(c.fv.source)},
                 {"splitting", to_string(c.fv.splitting)}, {"threads", thread_count()}};
  j["coefficients"] = coeffs_json(c.fv.coeffs);
  j["effective_coefficients"] = coeffs_json(c.fv.effective());
  return j;
}

/// Travelling-wave speed of the initial profile with the coefficients the scheme uses.
inline double hydro_tw_lambda(const HydroRunConfig& c) {
  return tw_lambda(c.p, c.m, std::cos(c.u0_angle), std::sin(c.u0_angle), c.fv.effective(), true);
}

inline HydroRunResult run_hydro(const HydroRunConfig& c, const HydroRunHooks& hooks = {}) {
  HydroRunResult r;
  HydroState s = init_tw_perturbed(c.fv, c.p, c.m, c.u0_angle, c.perturb, c.seed, c.alpha0);
  r.mass0 = s.mass();
  r.lambda_theory = hydro_tw_lambda(c);
  std::optional<FrameWriter> frames;
  std::ofstream metrics;
  if (hooks.output) {
    write_text(*hooks.output / "manifest.json", hydro_manifest(c).dump(2) + "\n");
    metrics.open(*hooks.output / "metrics.csv", std::ios::binary);
    metrics << "time,dt,mass,max_speed,phase_speed_estimate\n";
    if (c.frame_every > 0.0) frames.emplace(*hooks.output);
  }
  auto snapshot = [&] {
    if (frames) frames->write(s);
    if (hooks.on_frame) hooks.on_frame(s, r.frames);
    ++r.frames;
  };
  if (c.frame_every > 0.0) snapshot();
  auto on_step = [&](const HydroState& st, const StepInfo& info) {
    if (metrics.is_open())
      detail::write_row(metrics, {st.time, info.dt, st.mass(), info.max_speed, phase_speed_estimate(st)});
  };
  if (c.frame_every > 0.0) {
    for (std::uint64_t f = 1;; ++f) {
      const double target = std::min(c.fv.t_end, static_cast<double>(f) * c.frame_every);
      advance_to(s, c.fv, target, on_step);
      if (target < c.fv.t_end || static_cast<double>(f) * c.frame_every <= c.fv.t_end * (1 + 1e-12))
        snapshot();
      if (target >= c.fv.t_end) break;
    }
  } else {
    advance_to(s, c.fv, c.fv.t_end, on_step);
  }
  r.steps = s.steps;
  r.mass1 = s.mass();
  r.phase_speed = phase_speed_estimate(s);
  r.final_state = std::move(s);
  return r;
}

struct ConvergenceRow {
  std::size_t N = 0;
  std::vector<double> speeds;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> failures;
  double mean = 0.0, std = 0.0;  // std uses the n - 1 denominator
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::optional<SlopeFit> std_slope;  // log(std) against log(N)
};

/// runner(N, seed) -> measured speed. Seeds are derive_seed(base_seed, repetition), shared
/// across N. Runs throwing NumericalError are recorded as failures and excluded.
template <class Runner>
ConvergenceResult run_convergence_study(Runner&& runner, const std::vector<std::size_t>& Ns, int repetitions,
                                        std::uint64_t base_seed = 1) {
  if (repetitions < 3) throw InvalidParameter("convergence study needs at least 3 repetitions");
  if (Ns.empty()) throw InvalidParameter("convergence study needs at least one N");
  ConvergenceResult out;
  std::vector<double> logn, logs;
  for (std::size_t N : Ns) {
    ConvergenceRow row;
    row.N = N;
    for (int r = 0; r < repetitions; ++r) {
      const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(r));
      try {
        const double v = runner(N, seed);
        if (!std::isfinite(v)) throw NumericalError("non-finite speed");
        row.speeds.push_back(v);
        row.seeds.push_back(seed);
      } catch (const NumericalError& e) {
        row.failures.push_back("N=" + std::to_string(N) + " seed=" + std::to_string(seed) + ": " + e.what());
      }
    }
    const std::size_t n = row.speeds.size();
    if (n > 0) {
      double m = 0.0;
      for (double v : row.speeds) m += v;
      m /= static_cast<double>(n);
      double ss = 0.0;
      for (double v : row.speeds) ss += (v - m) * (v - m);
      row.mean = m;
      row.std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    } else {
      row.mean = row.std = std::nan("");
    }
    if (n >= 2 && row.std > 0.0) {
      logn.push_back(std::log(static_cast<double>(N)));
      logs.push_back(std::log(row.std));
    }
    out.rows.push_back(std::move(row));
  }
  if (logn.size() >= 2) {
    try {
      out.std_slope = ols(logn, logs);
    } catch (const InsufficientData&) {
    }
  }
  return out;
}

/// Speed of one travelling-wave particle run, for use as a convergence-study runner.
inline double particle_speed(ParticleRunConfig c, std::size_t N, std::uint64_t seed) {
  c.sim.N = N;
  c.sim.seed = seed;
  auto r = run_particles(c);
  if (!r.speed) throw UndefinedObservable("center of mass undefined during the run");
  return r.speed->slope;
}

inline std::string convergence_csv(const ConvergenceResult& r) {
  std::string s = "N,runs,failed,mean_speed,std_speed\n";
  for (const auto& row : r.rows)
    s += std::to_string(row.N) + "," + std::to_string(row.speeds.size()) + "," +
         std::to_string(row.failures.size()) + "," + format_double(row.mean) + "," + format_double(row.std) + "\n";
  return s;
}

} // namespace swarm
