#pragma once

#include "quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace swarm {

/// Philox4x32-10 counter-based generator (Salmon et al.).
struct Philox4x32 {
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block generate(Block ctr, Key key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
      std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += W0;
      key[1] += W1;
    }
    return ctr;
  }
};

enum class StreamPurpose : std::uint32_t { Init = 1, Diffusion = 2, Jump = 3, Perturb = 4 };

/// Independent random stream identified by (seed, index, step, purpose).
class CounterStream {
public:
  CounterStream(std::uint64_t seed, std::uint64_t index, std::uint64_t step, StreamPurpose purpose)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        c0_(static_cast<std::uint32_t>(index)),
        c1_(static_cast<std::uint32_t>(step)),
        c2_(static_cast<std::uint32_t>((step >> 32) & 0xFFFFu) |
            (static_cast<std::uint32_t>(purpose) << 16) |
            (static_cast<std::uint32_t>(index >> 32) << 24)) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = Philox4x32::generate({c0_, c1_, c2_, block_++}, key_);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    std::uint64_t a = next_u32() >> 5, b = next_u32() >> 6;
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) * (1.0 / 9007199254740992.0);
  }

  /// Uniform in (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    double a = kTwoPi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double exponential(double rate) { return -std::log(uniform_open0()) / rate; }

private:
  Philox4x32::Key key_;
  std::uint32_t c0_, c1_, c2_;
  std::uint32_t block_ = 0;
  Philox4x32::Block buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Wrap an angle into [0, 2 pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wrap an angle into (-pi, pi].
inline double wrap_pi(double a) {
  double r = wrap_angle(a);
  return r > kPi ? r - kTwoPi : r;
}

/// Von Mises sample on the circle (Best-Fisher wrapped-Cauchy rejection), result in [0, 2 pi).
template <class Stream>
double sample_von_mises(Stream& rng, double mu, double kappa) {
  if (kappa < 1e-8) return kTwoPi * rng.uniform();
  if (kappa > 1e6) return wrap_angle(mu);
  double s;
  if (kappa < 1e-5) {
    s = 1.0 / kappa + kappa;
  } else {
    double r = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    double rho = (r - std::sqrt(2.0 * r)) / (2.0 * kappa);
    s = (1.0 + rho * rho) / (2.0 * rho);
  }
  double w;
  for (;;) {
    double u = rng.uniform();
    double z = std::cos(kPi * u);
    w = (1.0 + s * z) / (s + z);
    double y = kappa * (s - w);
    double v = rng.uniform_open0();
    if (y * (2.0 - y) - v >= 0.0 || std::log(y / v) + 1.0 - y >= 0.0) break;
  }
  w = std::clamp(w, -1.0, 1.0);
  double angle = std::acos(w);
  if (rng.uniform() < 0.5) angle = -angle;
  return wrap_angle(angle + mu);
}

/// 64-bit mix used to derive child seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ (index + 0x632BE59BD9B4E019ull));
}

} // namespace swarm
