#include <swarmalator/analysis.hpp>
#include <swarmalator/coefficients.hpp>
#include <swarmalator/config.hpp>
#include <swarmalator/diagnostics.hpp>
#include <swarmalator/io.hpp>

#include <CLI11.hpp>
#include <json.hpp>
#include <png.h>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

using namespace swarm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

using Rgb = std::array<unsigned char, 3>;

void write_png(const fs::path& path, int w, int h, const std::vector<Rgb>& pixels) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw ConfigError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw ConfigError("libpng failed on '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  // image rows run top to bottom, grid rows bottom to top
  for (int r = 0; r < h; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels[static_cast<std::size_t>(h - 1 - r) * w].data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Rgb heat(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ch = [](double v) { return static_cast<unsigned char>(std::lround(255 * std::clamp(v, 0.0, 1.0))); };
  return {ch(1.5 * t), ch(1.5 * t - 0.5), ch(3.0 * t - 2.0)};
}

Rgb hue(double angle) {
  const double h = wrap_angle(angle) / kTwoPi * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = 1, g = x; break;
    case 1: r = x, g = 1; break;
    case 2: g = 1, b = x; break;
    case 3: g = x, b = 1; break;
    case 4: r = x, b = 1; break;
    default: r = 1, b = x; break;
  }
  return {static_cast<unsigned char>(255 * r), static_cast<unsigned char>(255 * g),
          static_cast<unsigned char>(255 * b)};
}

void heatmaps(const fs::path& dir, std::size_t frame, int w, int h, const std::vector<double>& density,
              const std::vector<double>& phase) {
  double hi = 0.0;
  for (double v : density) hi = std::max(hi, v);
  std::vector<Rgb> a(density.size()), b(phase.size());
  for (std::size_t i = 0; i < density.size(); ++i) a[i] = heat(hi > 0 ? density[i] / hi : 0.0);
  for (std::size_t i = 0; i < phase.size(); ++i) b[i] = hue(phase[i]);
  char name[48];
  std::snprintf(name, sizeof name, "density_%06zu.png", frame);
  write_png(dir / "frames" / name, w, h, a);
  std::snprintf(name, sizeof name, "phase_%06zu.png", frame);
  write_png(dir / "frames" / name, w, h, b);
}

void print_coeffs(const HydroCoeffs& c, bool json) {
  if (json) {
    std::cout << coeffs_json(c).dump(2) << "\n";
    return;
  }
  const std::pair<const char*, double> rows[] = {{"c1", c.c1},       {"c2", c.c2},      {"c1prime", c.c1p},
                                                 {"c2prime", c.c2p}, {"b", c.b},        {"bprime", c.bp},
                                                 {"Theta", c.theta}, {"Thetaprime", c.thetap},
                                                 {"kappa", c.kappa}};
  for (auto [k, v] : rows) std::cout << k << " = " << format_double(v) << "\n";
}

struct ModelOpts {
  double k = 5.0, kprime = 3.0, gamma = 0.2;
  std::string kind = "fp";
  int n = 2;

  void add(CLI::App* app) {
    app->add_option("--k", k, "velocity concentration k = nu/D");
    app->add_option("--kprime", kprime, "phase concentration k' = nu'/D'");
    app->add_option("--gamma", gamma, "phase-force coupling");
    app->add_option("--kind", kind, "collision operator: fp or bgk");
    app->add_option("--n", n, "dimension");
  }
  HydroCoeffs coeffs() const { return assemble_coeffs({k, kprime, gamma, n, parse_collision_kind(kind)}); }
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarmalator particle and hydrodynamic simulations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  ModelOpts cm;
  bool coeffs_json_flag = false;
  auto* coeffs = app.add_subcommand("coeffs", "print the hydrodynamic coefficients");
  cm.add(coeffs);
  coeffs->add_flag("--json", coeffs_json_flag, "JSON output");

  std::string pconfig, pout;
  bool pforce = false, pplots = false;
  auto* psim = app.add_subcommand("particle-sim", "run the particle system");
  psim->add_option("--config", pconfig, "key = value configuration")->required();
  psim->add_option("--out", pout, "output directory")->required();
  psim->add_flag("--force", pforce, "replace a non-empty output directory");
  psim->add_flag("--plots", pplots, "write PNG heatmaps with every frame");

  std::string hconfig, hout;
  bool hforce = false, hplots = false;
  auto* hsim = app.add_subcommand("hydro-sim", "run the finite-volume solver");
  hsim->add_option("--config", hconfig, "key = value configuration")->required();
  hsim->add_option("--out", hout, "output directory")->required();
  hsim->add_flag("--force", hforce, "replace a non-empty output directory");
  hsim->add_flag("--plots", hplots, "write PNG heatmaps with every frame");

  ModelOpts hm;
  double rho0 = 1.0;
  std::vector<double> z0mags{0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  int delta_grid = 32, dir_grid = 32;
  std::string map_out;
  auto* hyp = app.add_subcommand("hyperbolicity-map", "scan hyperbolicity over (delta, |z0|)");
  hm.add(hyp);
  hyp->add_option("--rho0", rho0, "equilibrium density");
  hyp->add_option("--z0mag", z0mags, "equilibrium phase-gradient magnitudes");
  hyp->add_option("--delta-grid", delta_grid, "number of delta samples in [-pi, pi)");
  hyp->add_option("--grid", dir_grid, "direction samples per angle");
  hyp->add_option("--out", map_out, "CSV file")->required();

  ModelOpts tm;
  int tp = 0, tmw = 1;
  double u_angle = -kPi / 2;
  bool stationary = false, use_b = false;
  auto* tw = app.add_subcommand("tw", "travelling-wave speed and stationary velocities");
  tm.add(tw);
  tw->add_option("--p", tp, "winding along x1");
  tw->add_option("--m", tmw, "winding along x2");
  tw->add_option("--u-angle", u_angle, "angle of the velocity U");
  tw->add_flag("--stationary", stationary, "list the unit vectors U with lambda = 0");
  tw->add_flag("--nsh", use_b, "use b (noiseless limit) instead of b'");

  std::string cconfig, cout_dir;
  std::vector<std::size_t> Ns{10000, 30000, 100000, 200000};
  int reps = 8;
  std::uint64_t base_seed = 1;
  bool cforce = false;
  auto* conv = app.add_subcommand("convergence", "speed statistics against N");
  conv->add_option("--config", cconfig, "particle configuration (N and seed are overridden)")->required();
  conv->add_option("--N", Ns, "particle counts");
  conv->add_option("--reps", reps, "repetitions per N (>= 3)");
  conv->add_option("--seed", base_seed, "base seed");
  conv->add_option("--out", cout_dir, "output directory")->required();
  conv->add_flag("--force", cforce, "replace a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*coeffs) {
      print_coeffs(cm.coeffs(), coeffs_json_flag);
    } else if (*psim) {
      ParticleRunConfig c = parse_particle_config(pconfig);
      c.plots = c.plots || pplots;
      prepare_output_dir(pout, pforce);
      ParticleRunHooks hooks;
      hooks.output = fs::path(pout);
      if (c.plots) {
        hooks.on_frame = [&](const ParticleState& s, std::size_t f) {
          FieldGrid g = rasterize(s);
          heatmaps(pout, f, g.nx, g.ny, g.density, g.mean_phase);
        };
      }
      auto r = run_particles(c, hooks);
      write_text(fs::path(pout) / "band_profile.csv", [&] {
        std::string s = "strip,count\n";
        auto b = band_profile(r.final_state);
        for (std::size_t i = 0; i < b.size(); ++i) s += std::to_string(i) + "," + std::to_string(b[i]) + "\n";
        return s;
      }());
      if (r.speed)
        std::cout << "speed = " << format_double(r.speed->slope) << " +- " << format_double(r.speed->std_error)
                  << "\n";
      else
        std::cout << "speed = undefined\n";
      std::cout << "steps = " << r.final_state.step << " frames = " << r.frames << "\n";
    } else if (*hsim) {
      HydroRunConfig c = parse_hydro_config(hconfig);
      c.plots = c.plots || hplots;
      prepare_output_dir(hout, hforce);
      HydroRunHooks hooks;
      hooks.output = fs::path(hout);
      if (c.plots) {
        hooks.on_frame = [&](const HydroState& s, std::size_t f) {
          std::vector<double> al(s.cells());
          for (std::size_t i = 0; i < s.cells(); ++i) al[i] = s.alpha(i);
          heatmaps(hout, f, s.nx, s.ny, s.q[0], al);
        };
      }
      auto r = run_hydro(c, hooks);
      std::cout << "steps = " << r.steps << "\nmass_drift = " << format_double((r.mass1 - r.mass0) / r.mass0)
                << "\nphase_speed = " << format_double(r.phase_speed)
                << "\nlambda_theory = " << format_double(r.lambda_theory)
                << "\ncomplex_interfaces = " << r.final_state.complex_flags << "\n";
    } else if (*hyp) {
      const HydroCoeffs c = hm.coeffs();
      if (delta_grid < 1) throw InvalidParameter("--delta-grid must be >= 1");
      std::string csv = "delta,z0mag,M,verdict,min_scaled_delta,witness_theta,witness_phi\n";
      for (int i = 0; i < delta_grid; ++i) {
        const double delta = -kPi + kTwoPi * i / delta_grid;
        for (double z : z0mags) {
          EquilibriumSpec eq{rho0, 0.0, z, delta, hm.n};
          auto v = is_hyperbolic(eq, c, dir_grid);
          csv += format_double(delta) + "," + format_double(z) + "," + format_double(c.b * rho0 * z) + "," +
                 to_string(v.verdict) + "," + format_double(v.min_delta) + "," + format_double(v.witness.theta) +
                 "," + format_double(v.witness.phi) + "\n";
        }
      }
      write_text(map_out, csv);
      std::cout << "wrote " << delta_grid * z0mags.size() << " rows to " << map_out << "\n";
    } else if (*tw) {
      const HydroCoeffs c = tm.coeffs();
      const double lam = tw_lambda(tp, tmw, std::cos(u_angle), std::sin(u_angle), c, !use_b);
      std::cout << "lambda = " << format_double(lam) << "\n";
      if (tp != 0 || tmw != 0)
        std::cout << "pattern_speed = " << format_double(lam / (kTwoPi * std::hypot(tp, tmw))) << "\n";
      if (stationary) {
        auto s = stationary_U(tp, tmw, c, !use_b);
        if (s.b_zero) std::cout << "stationary: b = 0, lambda vanishes only when p U1 + m U2 = 0\n";
        else if (s.U.empty()) std::cout << "stationary: none\n";
        for (auto U : s.U) std::cout << "stationary U = (" << format_double(U[0]) << ", " << format_double(U[1]) << ")\n";
      }
    } else if (*conv) {
      ParticleRunConfig c = parse_particle_config(cconfig);
      prepare_output_dir(cout_dir, cforce);
      write_text(fs::path(cout_dir) / "manifest.json", [&] {
        auto j = particle_manifest(c);
        j["mode"] = "convergence";
        j["N_list"] = Ns;
        j["repetitions"] = reps;
        j["base_seed"] = base_seed;
        return j.dump(2) + "\n";
      }());
      auto r = run_convergence_study([&](std::size_t N, std::uint64_t seed) { return particle_speed(c, N, seed); },
                                     Ns, reps, base_seed);
      write_text(fs::path(cout_dir) / "convergence.csv", convergence_csv(r));
      std::string runs = "N,seed,speed\n", failures;
      for (const auto& row : r.rows) {
        for (std::size_t i = 0; i < row.speeds.size(); ++i)
          runs += std::to_string(row.N) + "," + std::to_string(row.seeds[i]) + "," + format_double(row.speeds[i]) + "\n";
        for (const auto& f : row.failures) failures += f + "\n";
      }
      write_text(fs::path(cout_dir) / "runs.csv", runs);
      write_text(fs::path(cout_dir) / "failures.txt", failures);
      std::cout << convergence_csv(r);
      if (r.std_slope)
        std::cout << "std_slope = " << format_double(r.std_slope->slope) << " +- "
                  << format_double(r.std_slope->std_error) << "\n";
      if (!failures.empty()) std::cerr << "failed runs:\n" << failures;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
