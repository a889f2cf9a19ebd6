#include <swarmalator/config.hpp>
#include <swarmalator/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace swarm;

namespace {

KeyValues kv(const std::string& text) {
  std::istringstream in(text);
  return KeyValues::parse(in, "test.cfg");
}

const char* kMinimal =
    "# minimal particle run\n"
    "N = 500\nR = 0.1\nnu_t = 3\nD_t = 1\nnup_t = 5\nDp_t = 1\n"
    "gamma = 0.2\ndt = 1e-3\nt_end = 0.05\n";

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("swarm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

} // namespace

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> U(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    double v = U(gen) * std::pow(10.0, (i % 40) - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(ParticleConfig, MinimalRoundTrip) {
  ParticleRunConfig a = parse_particle_config(kv(kMinimal));
  EXPECT_EQ(a.sim.N, 500u);
  EXPECT_EQ(a.sim.gamma, 0.2);
  EXPECT_EQ(a.init, ParticleInit::DoublyPeriodic);
  EXPECT_EQ(a.integrator, Integrator::EulerMaruyama);
  const std::string text = serialize(a);
  ParticleRunConfig b = parse_particle_config(kv(text));
  EXPECT_EQ(serialize(b), text);
  EXPECT_EQ(b.sim.R, a.sim.R);
  EXPECT_EQ(b.u0_angle, a.u0_angle);
}

TEST(ParticleConfig, ReferenceParameterBlock) {
  auto c = parse_particle_config(kv("N = 1e6\nR = 0.01\nnu_t = 5\nD_t = 1\nnup_t = 3\nDp_t = 1\n"
                                    "gamma = 0.2\nt_end = 40\nu0_angle = pi\n"));
  EXPECT_EQ(c.sim.N, 1000000u);
  EXPECT_EQ(c.sim.R, 0.01);
  EXPECT_EQ(c.sim.k(), 5.0);
  EXPECT_EQ(c.sim.kprime(), 3.0);
  EXPECT_EQ(c.sim.gamma, 0.2);
  EXPECT_DOUBLE_EQ(c.sim.nu(), 500.0);
  EXPECT_DOUBLE_EQ(c.sim.D(), 100.0);
  EXPECT_EQ(c.u0_angle, kPi);
}

TEST(ParticleConfig, UnitSpeedTarget) {
  auto c = parse_particle_config(kv("N = 100\nR = 0.1\nnu_t = 3\nD_t = 1\nnup_t = 5\nDp_t = 1\n"
                                    "target_bprime = unit_speed\nt_end = 0.1\n"));
  HydroCoeffs h = assemble_coeffs({3, 5, c.sim.gamma, 2, CollisionKind::FokkerPlanck});
  EXPECT_NEAR(h.bp, (1 + h.c1) / kTwoPi, 1e-12);
  EXPECT_NEAR(c.sim.gamma, -0.360441, 1e-6);
  EXPECT_EQ(c.bprime_spec, "unit_speed");
  auto d = parse_particle_config(kv("N = 100\nR = 0.1\nnu_t = 5\nD_t = 1\nnup_t = 3\nDp_t = 1\n"
                                    "target_bprime = -0.136964707\nt_end = 0.1\n"));
  EXPECT_NEAR(d.sim.gamma, 0.2, 1e-8);
}

TEST(ParticleConfig, ErrorsNameKeyAndLine) {
  std::string e = error_of([] { parse_particle_config(kv(std::string(kMinimal) + "colour = red\n")); });
  EXPECT_NE(e.find("colour"), std::string::npos) << e;
  EXPECT_NE(e.find("test.cfg:11"), std::string::npos) << e;

  e = error_of([] { parse_particle_config(kv("N = 10\nR = 0.1x\nnu_t=1\nD_t=1\nnup_t=1\nDp_t=1\ngamma=0\nt_end=1\n")); });
  EXPECT_NE(e.find("'R'"), std::string::npos) << e;
  EXPECT_NE(e.find(":2"), std::string::npos) << e;

  e = error_of([] { parse_particle_config(kv("N = 10\nR = 0.1\nnu_t=1\nD_t=1\nnup_t=1\ngamma=0\nt_end=1\n")); });
  EXPECT_NE(e.find("Dp_t"), std::string::npos) << e;

  e = error_of([] { parse_particle_config(kv("N = 10.5\nR = 0.1\nnu_t=1\nD_t=1\nnup_t=1\nDp_t=1\ngamma=0\nt_end=1\n")); });
  EXPECT_NE(e.find("'N'"), std::string::npos) << e;

  EXPECT_THROW(kv("N = 1\nN = 2\n"), ConfigError);
  EXPECT_THROW(kv("just words\n"), ConfigError);
}

TEST(ParticleConfig, RejectsThreeDimensions) {
  EXPECT_THROW(parse_particle_config(kv(std::string(kMinimal) + "kind = fp\nn = 3\n")), UnsupportedConfiguration);
}

TEST(ParticleConfig, RejectsInvalidPhysics) {
  EXPECT_THROW(parse_particle_config(kv("N = 10\nR = 0.7\nnu_t=1\nD_t=1\nnup_t=1\nDp_t=1\ngamma=0\nt_end=1\n")),
               InvalidParameter);
  EXPECT_THROW(parse_particle_config(kv("N = 10\nR = 0.1\nnu_t=-1\nD_t=1\nnup_t=1\nDp_t=1\ngamma=0\nt_end=1\n")),
               InvalidParameter);
  EXPECT_THROW(parse_particle_config(kv(std::string(kMinimal) + "target_bprime = 0.1\n")), ConfigError);
  EXPECT_THROW(parse_particle_config(kv(std::string(kMinimal) + "integrator = rk4\n")), InvalidParameter);
}

TEST(HydroConfig, RoundTripAndValidation) {
  const char* text = "nx = 40\nny = 40\nk = 5\nkprime = 3\ngamma = 0.2\nt_end = 1\nu0_angle = -1.5707963267948966\n";
  HydroRunConfig a = parse_hydro_config(kv(text));
  EXPECT_NEAR(a.fv.coeffs.c1, c1_of(5, 2), 1e-15);
  EXPECT_EQ(a.fv.splitting, Splitting::Symmetric);
  EXPECT_EQ(a.fv.source, SourceVariant::Conservative);
  HydroRunConfig b = parse_hydro_config(kv(serialize(a)));
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_THROW(parse_hydro_config(kv("nx = 40\nny = 30\nk = 5\nkprime = 3\ngamma = 0.2\nt_end = 1\n")),
               InvalidParameter);
  std::string e = error_of([] {
    parse_hydro_config(kv("nx = 40\nny = 40\nk = 5\nkprime = 3\ngamma = 0.2\nt_end = 1\nsource_variant = half\n"));
  });
  EXPECT_NE(e.find("source_variant"), std::string::npos) << e;
}

TEST(ConvergenceStudy, ExactSlopeForSyntheticSeries) {
  // speed = 1 + N^(-1/2) * z(seed): the std scales exactly as N^(-1/2)
  auto runner = [](std::size_t N, std::uint64_t seed) {
    const double z = static_cast<double>(seed % 1000) / 1000.0 - 0.5;
    return 1.0 + z / std::sqrt(static_cast<double>(N));
  };
  auto r = run_convergence_study(runner, {100, 1000, 10000, 100000}, 5, 42);
  ASSERT_TRUE(r.std_slope.has_value());
  EXPECT_NEAR(r.std_slope->slope, -0.5, 1e-12);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.speeds.size(), 5u);
    EXPECT_NEAR(row.mean, 1.0, 0.5 / std::sqrt(static_cast<double>(row.N)));
  }
  EXPECT_EQ(r.rows[0].seeds, r.rows[3].seeds);
  EXPECT_EQ(r.rows[0].seeds[2], derive_seed(42, 2));
}

TEST(ConvergenceStudy, DeterministicSeriesHasZeroSpread) {
  auto r = run_convergence_study([](std::size_t, std::uint64_t) { return 0.75; }, {10, 20}, 3);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.mean, 0.75);
    EXPECT_EQ(row.std, 0.0);
  }
  EXPECT_FALSE(r.std_slope.has_value());
}

TEST(ConvergenceStudy, FailuresAreExcludedAndReported) {
  int calls = 0;
  auto runner = [&](std::size_t N, std::uint64_t seed) {
    if (++calls % 4 == 0) throw IntegrationDiverged("synthetic", 7);
    return 1.0 + static_cast<double>(seed % 97) / 97.0 / static_cast<double>(N);
  };
  auto r = run_convergence_study(runner, {10, 100}, 4);
  EXPECT_EQ(r.rows[0].speeds.size() + r.rows[1].speeds.size(), 6u);
  EXPECT_EQ(r.rows[0].failures.size() + r.rows[1].failures.size(), 2u);
  EXPECT_NE(r.rows[0].failures[0].find("synthetic"), std::string::npos);
  EXPECT_THROW(run_convergence_study(runner, {10}, 2), InvalidParameter);
}

TEST(OutputDir, RejectsNonEmptyUnlessForced) {
  fs::path d = scratch("out");
  prepare_output_dir(d, false);
  EXPECT_TRUE(fs::is_directory(d / "frames"));
  write_text(d / "x.txt", "x");
  EXPECT_THROW(prepare_output_dir(d, false), ConfigError);
  prepare_output_dir(d, true);
  EXPECT_FALSE(fs::exists(d / "x.txt"));
  for (auto& e : fs::directory_iterator(d.parent_path()))
    EXPECT_EQ(e.path().filename().string().find(d.filename().string() + ".partial"), std::string::npos);
  fs::remove_all(d);
}

TEST(ParticleRun, ManifestFramesAndReproducibleMetrics) {
  ParticleRunConfig c = parse_particle_config(kv(std::string(kMinimal) + "frame_every = 0.025\nalpha0 = pi\n"
                                                                          "u0_angle = -1.5707963267948966\n"));
  std::string csv[2];
  for (int rep = 0; rep < 2; ++rep) {
    fs::path d = scratch("prun" + std::to_string(rep));
    prepare_output_dir(d, false);
    ParticleRunHooks hooks;
    hooks.output = d;
    auto r = run_particles(c, hooks);
    EXPECT_EQ(r.frames, 3u);
    EXPECT_TRUE(r.speed.has_value());
    std::ifstream m(d / "manifest.json");
    auto j = nlohmann::json::parse(m);
    EXPECT_EQ(j["params"]["N"], 500);
    EXPECT_EQ(j["version"], version());
    EXPECT_TRUE(j["coefficients"].contains("bprime"));
    std::ifstream f(d / "frames" / "000001.bin", std::ios::binary);
    std::uint64_t n = 0;
    double t = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    f.read(reinterpret_cast<char*>(&t), 8);
    EXPECT_EQ(n, 500u);
    EXPECT_NEAR(t, 0.025, 1e-12);
    EXPECT_EQ(fs::file_size(d / "frames" / "000001.bin"), 16u + 4u * 500u * 8u);
    std::ifstream mc(d / "metrics.csv");
    std::stringstream ss;
    ss << mc.rdbuf();
    csv[rep] = ss.str();
    fs::remove_all(d);
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[0].substr(0, csv[0].find('\n')), "time,com_x2,wave_speed_running,j_norm,l_norm,mean_phase");
}

TEST(HydroRun, FramesAndMetrics) {
  HydroRunConfig c = parse_hydro_config(kv("nx = 12\nny = 12\nk = 5\nkprime = 3\ngamma = 0.2\nt_end = 0.1\n"
                                           "frame_every = 0.05\nperturb = true\n"));
  fs::path d = scratch("hrun");
  prepare_output_dir(d, false);
  HydroRunHooks hooks;
  hooks.output = d;
  auto r = run_hydro(c, hooks);
  EXPECT_EQ(r.frames, 3u);
  EXPECT_NEAR(r.final_state.time, 0.1, 1e-15);
  EXPECT_LE(std::abs(r.mass1 - r.mass0) / r.mass0, 1e-12);
  EXPECT_EQ(fs::file_size(d / "frames" / "000002.bin"), 24u + 5u * 144u * 8u);
  std::ifstream mc(d / "metrics.csv");
  std::string header;
  std::getline(mc, header);
  EXPECT_EQ(header, "time,dt,mass,max_speed,phase_speed_estimate");
  fs::remove_all(d);
}
