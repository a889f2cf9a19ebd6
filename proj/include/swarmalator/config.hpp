#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "hydro.hpp"
#include "particles.hpp"
#include "quadrature.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace swarm {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct ConfigEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

/// Flat key = value file; '#' starts a comment.
class KeyValues {
public:
  static KeyValues parse(std::istream& in, const std::string& source = "<config>") {
    KeyValues kv;
    kv.source_ = source;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      std::string s = trim(raw);
      if (s.empty()) continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(line) + ": expected key = value");
      std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
      if (kv.entries_.count(key))
        throw ConfigError(source + ":" + std::to_string(line) + ": duplicate key '" + key + "'");
      kv.entries_[key] = {value, line, false};
    }
    return kv;
  }

  static KeyValues parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    return parse(f, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string str(const std::string& key) {
    auto& e = entry(key);
    e.used = true;
    return e.value;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return has(key) ? str(key) : fallback;
  }

  double num(const std::string& key) {
    auto& e = entry(key);
    e.used = true;
    double v = 0.0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    if (e.value == "pi") return kPi;
    if (e.value == "-pi") return -kPi;
    auto r = std::from_chars(b, end, v);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) fail(key, e, "malformed number '" + e.value + "'");
    return v;
  }
  double num(const std::string& key, double fallback) { return has(key) ? num(key) : fallback; }

  long long integer(const std::string& key) {
    auto& e = entry(key);
    double v = num(key);
    if (v != std::floor(v) || std::abs(v) > 9.0e15) fail(key, e, "expected an integer, got '" + e.value + "'");
    return static_cast<long long>(v);
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key) {
    auto& e = entry(key);
    e.used = true;
    const std::string& v = e.value;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(key, e, "expected a boolean, got '" + v + "'");
    return false;
  }
  bool boolean(const std::string& key, bool fallback) { return has(key) ? boolean(key) : fallback; }

  /// Throws for any key that was never read.
  void reject_unknown() const {
    for (const auto& [k, e] : entries_)
      if (!e.used) throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
  }

  int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw InvalidParameter(source_ + ":" + std::to_string(line_of(key)) + ": key '" + key + "': " + msg);
  }

private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  ConfigEntry& entry(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    return it->second;
  }
  [[noreturn]] void fail(const std::string& key, const ConfigEntry& e, const std::string& msg) const {
    throw InvalidParameter(source_ + ":" + std::to_string(e.line) + ": key '" + key + "': " + msg);
  }

  std::string source_;
  std::map<std::string, ConfigEntry> entries_;
};

enum class ParticleInit { DoublyPeriodic, Uniform };

struct ParticleRunConfig {
  SimConfig sim;
  Integrator integrator = Integrator::EulerMaruyama;
  CollisionKind kind = CollisionKind::FokkerPlanck;
  int n = 2;
  ParticleInit init = ParticleInit::DoublyPeriodic;
  int p = 0, m = 1;
  double u0_angle = -kPi / 2;
  double alpha0 = 0.0;
  double t_end = 0.1;
  double frame_every = 0.0;   // 0 disables frames
  double record_every = 0.0;  // metrics sampling interval; 0 picks t_end / 100
  std::string bprime_spec;    // target_bprime as written, empty when gamma was given
  bool plots = false;

  double metrics_interval() const { return record_every > 0.0 ? record_every : t_end / 100.0; }
};

struct HydroRunConfig {
  FVConfig fv;
  ModelParams model;
  int p = 0, m = 1;
  double u0_angle = kPi / 2;
  double alpha0 = 0.0;
  bool perturb = false;
  std::uint64_t seed = 1;
  double frame_every = 0.0;
  bool plots = false;
};

inline std::string to_string(Integrator i) { return i == Integrator::Pdmp ? "pdmp" : "em"; }
inline std::string to_string(ParticleInit i) {
  return i == ParticleInit::Uniform ? "uniform" : "doubly_periodic";
}

/// b' = (1 + c1(k)) / (2 pi) makes the (0, 1) wave with U = (0, -1) travel at unit speed.
inline double unit_speed_bprime(double k) { return (1.0 + c1_of(k, 2)) / kTwoPi; }

inline ParticleRunConfig parse_particle_config(KeyValues kv) {
  ParticleRunConfig c;
  auto& s = c.sim;
  const long long N = kv.integer("N");
  if (N < 1) kv.fail("N", "must be >= 1");
  s.N = static_cast<std::size_t>(N);
  s.R = kv.num("R");
  s.nu_t = kv.num("nu_t");
  s.D_t = kv.num("D_t");
  s.nup_t = kv.num("nup_t");
  s.Dp_t = kv.num("Dp_t");
  s.dt = kv.num("dt", 0.0);
  const long long seed = kv.integer("seed", 1);
  if (seed < 0) kv.fail("seed", "must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  c.n = static_cast<int>(kv.integer("n", 2));
  if (kv.has("kind")) {
    try {
      c.kind = parse_collision_kind(kv.str("kind"));
    } catch (const ConfigError& e) {
      kv.fail("kind", e.what());
    }
  }
  if (c.n != 2)
    throw UnsupportedConfiguration(kv.source() + ":" + std::to_string(kv.line_of("n")) +
                                   ": key 'n': particle simulations are two-dimensional only");
  const bool has_gamma = kv.has("gamma"), has_target = kv.has("target_bprime");
  if (has_gamma == has_target)
    throw ConfigError(kv.source() + ": exactly one of 'gamma' and 'target_bprime' is required");
  if (has_gamma) {
    s.gamma = kv.num("gamma");
  } else {
    c.bprime_spec = kv.str("target_bprime");
    double target = 0.0;
    if (c.bprime_spec == "unit_speed") {
      if (!(s.k() > 0.0 && std::isfinite(s.k()))) kv.fail("target_bprime", "unit_speed needs 0 < k < inf");
      target = unit_speed_bprime(s.k());
    } else {
      target = kv.num("target_bprime");
    }
    if (!(s.kprime() > 0.0 && std::isfinite(s.kprime())))
      kv.fail("target_bprime", "needs a finite positive k' = nup_t / Dp_t");
    s.gamma = gamma_for_bprime(target, s.kprime(), c.kind);
  }
  std::string init = kv.str("init", "doubly_periodic");
  if (init == "doubly_periodic") c.init = ParticleInit::DoublyPeriodic;
  else if (init == "uniform") c.init = ParticleInit::Uniform;
  else kv.fail("init", "expected doubly_periodic or uniform");
  c.p = static_cast<int>(kv.integer("p", 0));
  c.m = static_cast<int>(kv.integer("m", 1));
  c.u0_angle = kv.num("u0_angle", -kPi / 2);
  c.alpha0 = kv.num("alpha0", 0.0);
  c.t_end = kv.num("t_end");
  c.frame_every = kv.num("frame_every", 0.0);
  c.record_every = kv.num("record_every", 0.0);
  c.plots = kv.boolean("plots", false);
  std::string integ = kv.str("integrator", "em");
  if (integ == "em") c.integrator = Integrator::EulerMaruyama;
  else if (integ == "pdmp") c.integrator = Integrator::Pdmp;
  else kv.fail("integrator", "expected em or pdmp");
  kv.reject_unknown();
  if (!(c.t_end >= 0.0)) kv.fail("t_end", "must be >= 0");
  if (!(c.frame_every >= 0.0)) kv.fail("frame_every", "must be >= 0");
  if (!(c.record_every >= 0.0)) kv.fail("record_every", "must be >= 0");
  try {
    s.validate();
  } catch (const InvalidParameter& e) {
    throw InvalidParameter(kv.source() + ": " + e.what());
  }
  if (c.integrator == Integrator::Pdmp && !(s.D_t > 0.0)) kv.fail("D_t", "pdmp needs D_t > 0");
  return c;
}

inline ParticleRunConfig parse_particle_config(const std::string& path) {
  return parse_particle_config(KeyValues::parse_file(path));
}

inline HydroRunConfig parse_hydro_config(KeyValues kv) {
  HydroRunConfig c;
  c.fv.nx = static_cast<int>(kv.integer("nx"));
  c.fv.ny = static_cast<int>(kv.integer("ny"));
  c.model.k = kv.num("k");
  c.model.kprime = kv.num("kprime");
  c.model.gamma = kv.num("gamma");
  if (kv.has("kind")) {
    try {
      c.model.kind = parse_collision_kind(kv.str("kind"));
    } catch (const ConfigError& e) {
      kv.fail("kind", e.what());
    }
  }
  c.fv.nsh = kv.boolean("nsh", false);
  c.p = static_cast<int>(kv.integer("p", 0));
  c.m = static_cast<int>(kv.integer("m", 1));
  c.u0_angle = kv.num("u0_angle", kPi / 2);
  c.alpha0 = kv.num("alpha0", 0.0);
  c.perturb = kv.boolean("perturb", false);
  c.fv.t_end = kv.num("t_end");
  c.frame_every = kv.num("frame_every", 0.0);
  const long long seed = kv.integer("seed", 1);
  if (seed < 0) kv.fail("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.plots = kv.boolean("plots", false);
  c.fv.cfl = kv.num("cfl", 0.1);
  c.fv.diffusion_number = kv.num("diffusion_number", 0.25);
  c.fv.perturb_rho = kv.num("perturb_rho", 0.25);
  c.fv.perturb_u = kv.num("perturb_u", 0.75);
  c.fv.perturb_alpha = kv.num("perturb_alpha", 0.75);
  if (kv.has("source_variant")) {
    try {
      c.fv.source = parse_source_variant(kv.str("source_variant"));
    } catch (const ConfigError& e) {
      kv.fail("source_variant", e.what());
    }
  }
  if (kv.has("splitting")) {
    try {
      c.fv.splitting = parse_splitting(kv.str("splitting"));
    } catch (const ConfigError& e) {
      kv.fail("splitting", e.what());
    }
  }
  kv.reject_unknown();
  if (!(c.frame_every >= 0.0)) kv.fail("frame_every", "must be >= 0");
  try {
    c.model.validate();
    c.fv.validate();
  } catch (const InvalidParameter& e) {
    throw InvalidParameter(kv.source() + ": " + e.what());
  }
  if (!(c.model.k > 0.0)) kv.fail("k", "must be > 0");
  c.fv.coeffs = assemble_coeffs(c.model);
  return c;
}

inline HydroRunConfig parse_hydro_config(const std::string& path) {
  return parse_hydro_config(KeyValues::parse_file(path));
}

/// key = value text that parses back to the same configuration.
inline std::string serialize(const ParticleRunConfig& c) {
  std::ostringstream o;
  const auto& s = c.sim;
  o << "N = " << s.N << "\nR = " << format_double(s.R) << "\nnu_t = " << format_double(s.nu_t)
    << "\nD_t = " << format_double(s.D_t) << "\nnup_t = " << format_double(s.nup_t)
    << "\nDp_t = " << format_double(s.Dp_t) << "\ngamma = " << format_double(s.gamma)
    << "\ndt = " << format_double(s.dt) << "\nseed = " << s.seed << "\nn = " << c.n
    << "\nkind = " << to_string(c.kind) << "\ninit = " << to_string(c.init) << "\np = " << c.p
    << "\nm = " << c.m << "\nu0_angle = " << format_double(c.u0_angle)
    << "\nalpha0 = " << format_double(c.alpha0) << "\nt_end = " << format_double(c.t_end)
    << "\nframe_every = " << format_double(c.frame_every)
    << "\nrecord_every = " << format_double(c.record_every)
    << "\nintegrator = " << to_string(c.integrator) << "\nplots = " << (c.plots ? "true" : "false")
    << "\n";
  return o.str();
}

inline std::string serialize(const HydroRunConfig& c) {
  std::ostringstream o;
  o << "nx = " << c.fv.nx << "\nny = " << c.fv.ny << "\nk = " << format_double(c.model.k)
    << "\nkprime = " << format_double(c.model.kprime) << "\ngamma = " << format_double(c.model.gamma)
    << "\nkind = " << to_string(c.model.kind) << "\nnsh = " << (c.fv.nsh ? "true" : "false")
    << "\np = " << c.p << "\nm = " << c.m << "\nu0_angle = " << format_double(c.u0_angle)
    << "\nalpha0 = " << format_double(c.alpha0) << "\nperturb = " << (c.perturb ? "true" : "false")
    << "\nt_end = " << format_double(c.fv.t_end) << "\nframe_every = " << format_double(c.frame_every)
    << "\nseed = " << c.seed << "\nplots = " << (c.plots ? "true" : "false")
    << "\ncfl = " << format_double(c.fv.cfl) << "\ndiffusion_number = " << format_double(c.fv.diffusion_number)
    << "\nperturb_rho = " << format_double(c.fv.perturb_rho)
    << "\nperturb_u = " << format_double(c.fv.perturb_u)
    << "\nperturb_alpha = " << format_double(c.fv.perturb_alpha)
    << "\nsource_variant = " << to_string(c.fv.source) << "\nsplitting = " << to_string(c.fv.splitting)
    << "\n";
  return o.str();
}

} // namespace swarm
