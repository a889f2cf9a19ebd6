#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace swarm {

struct EquilibriumSpec {
  double rho0 = 1.0;
  double u0_angle = 0.0;  // 2-D only; in general n the frame puts u0 on the first axis
  double z0mag = 0.0;
  double delta = 0.0;  // angle from u0 to z0
  int n = 2;

  void validate() const {
    if (!(rho0 > 0.0) || !std::isfinite(rho0)) throw InvalidParameter("rho0 must be > 0");
    if (!(z0mag >= 0.0) || !std::isfinite(z0mag)) throw InvalidParameter("|z0| must be >= 0");
    if (n < 2) throw InvalidParameter("dimension n must be >= 2");
  }
};

struct WaveDirection {
  double theta = kPi / 2;  // fixed to pi/2 in two dimensions
  double phi = 0.0;
};

namespace detail {

/// sin(a), exactly zero on multiples of pi up to rounding of the argument.
inline double snapped_sin(double a) {
  const double r = wrap_pi(a);
  if (std::abs(r) <= 4e-16 * (1.0 + std::abs(a)) || std::abs(std::abs(r) - kPi) <= 4e-16 * (1.0 + std::abs(a)))
    return 0.0;
  return std::sin(a);
}

} // namespace detail

/// Fourier symbol of the linearised system, of size n + 1, ordered (rho, u2..un, z~).
inline Eigen::MatrixXd symbol_matrix(const EquilibriumSpec& eq, WaveDirection dir, const HydroCoeffs& c) {
  eq.validate();
  const int n = eq.n;
  if (n == 2) dir.theta = kPi / 2;
  const double st = std::sin(dir.theta), ct = n == 2 ? 0.0 : std::cos(dir.theta);
  const double sp = std::sin(dir.phi), cp = std::cos(dir.phi);
  const double M = c.b * eq.rho0 * eq.z0mag;
  const double X1 = st * (c.c1 * cp + 2.0 * M * std::cos(dir.phi - eq.delta));
  const double X2 = st * (c.c2 * cp + M * std::cos(dir.phi - eq.delta));
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
  A(0, 0) = X1;
  A(0, 1) = c.c1 * eq.rho0 * st * sp;
  A(0, n) = c.b * eq.rho0 * eq.rho0;
  A(1, 0) = c.theta / eq.rho0 * st * sp;
  for (int i = 1; i < n; ++i) A(i, i) = X2;
  if (n >= 3) {
    A(0, 2) = c.c1 * eq.rho0 * ct;
    A(2, 0) = c.theta / eq.rho0 * ct;
  }
  A(n, 0) = c.b * eq.z0mag * eq.z0mag;
  A(n, 1) = eq.z0mag * detail::snapped_sin(eq.delta);
  A(n, n) = X1;
  return A;
}

struct CubicData {
  double L = 0, M = 0, R = 0, Y = 0;
  double X1 = 0, X2 = 0;
  double A = -1, B = 0, C = 0, D = 0;  // P(lambda) = A l^3 + B l^2 + C l + D
};

inline CubicData cubic_data(const EquilibriumSpec& eq, WaveDirection dir, const HydroCoeffs& c) {
  eq.validate();
  if (eq.n == 2) dir.theta = kPi / 2;
  const double st = std::sin(dir.theta), ct = eq.n == 2 ? 0.0 : std::cos(dir.theta);
  const double sp = std::sin(dir.phi), cp = std::cos(dir.phi);
  CubicData d;
  d.M = c.b * eq.rho0 * eq.z0mag;
  d.L = c.c1 * c.theta * (ct * ct + st * st * sp * sp);
  d.R = c.theta * st * sp * detail::snapped_sin(eq.delta);
  d.X1 = st * (c.c1 * cp + 2.0 * d.M * std::cos(dir.phi - eq.delta));
  d.X2 = st * (c.c2 * cp + d.M * std::cos(dir.phi - eq.delta));
  d.Y = d.X1 - d.X2;
  d.A = -1.0;
  d.B = 2.0 * d.X1 + d.X2;
  d.C = -2.0 * d.X1 * d.X2 - d.X1 * d.X1 + d.L + d.M * d.M;
  d.D = d.X1 * d.X1 * d.X2 - d.L * d.X1 + d.M * d.R - d.M * d.M * d.X2;
  return d;
}

inline double discriminant(double L, double M, double R, double Y) {
  const double M2 = M * M, Y2 = Y * Y, lm = L + M2;
  return 4.0 * Y2 * Y2 * M2 + 4.0 * Y2 * Y * M * R + Y2 * (L * L + 20.0 * L * M2 - 8.0 * M2 * M2) +
         18.0 * Y * M * R * (L - 2.0 * M2) + 4.0 * lm * lm * lm - 27.0 * M2 * R * R;
}

inline double discriminant(const CubicData& d) { return discriminant(d.L, d.M, d.R, d.Y); }

/// Roots of a x^3 + b x^2 + c x + d (a != 0) as eigenvalues of the companion matrix.
inline std::vector<std::complex<double>> cubic_roots(double a, double b, double c, double d) {
  if (a == 0.0) throw InvalidParameter("leading cubic coefficient is zero");
  Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
  comp(0, 0) = -b / a;
  comp(0, 1) = -c / a;
  comp(0, 2) = -d / a;
  comp(1, 0) = 1.0;
  comp(2, 1) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(comp, false);
  std::vector<std::complex<double>> r(3);
  for (int i = 0; i < 3; ++i) r[i] = es.eigenvalues()(i);
  using C = std::complex<double>;
  auto P = [&](C x) { return ((a * x + b) * x + c) * x + d; };
  auto dP = [&](C x) { return (3.0 * a * x + 2.0 * b) * x + c; };
  auto size = [&](C x) {
    const double m = std::abs(x);
    return ((std::abs(a) * m + std::abs(b)) * m + std::abs(c)) * m + std::abs(d);
  };
  const double eps = std::numeric_limits<double>::epsilon();
  for (auto& x : r)
    for (int it = 0; it < 8; ++it) {
      const C f = P(x), g = dP(x);
      if (std::abs(f) <= eps * size(x) || g == 0.0) break;
      const C nx = x - f / g;
      if (std::abs(P(nx)) >= std::abs(f)) break;
      x = nx;
    }
  // a double root is a simple root of P'; refine it there
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double scale = 1.0 + std::abs(r[i]) + std::abs(r[j]);
      if (std::abs(r[i] - r[j]) > 1e-6 * scale) continue;
      double x = 0.5 * (r[i] + r[j]).real();
      for (int it = 0; it < 8; ++it) {
        const double g2 = 6.0 * a * x + 2.0 * b;
        if (g2 == 0.0) break;
        x -= ((3.0 * a * x + 2.0 * b) * x + c) / g2;
      }
      if (std::abs(P(x)) <= 8.0 * eps * size(x)) r[i] = r[j] = x;
    }
  std::sort(r.begin(), r.end(), [](auto x, auto y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  });
  return r;
}

inline std::vector<std::complex<double>> symbol_eigenvalues(const EquilibriumSpec& eq, WaveDirection dir,
                                                            const HydroCoeffs& c) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(symbol_matrix(eq, dir, c), false);
  std::vector<std::complex<double>> r(es.eigenvalues().size());
  for (int i = 0; i < es.eigenvalues().size(); ++i) r[i] = es.eigenvalues()(i);
  std::sort(r.begin(), r.end(), [](auto x, auto y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  });
  return r;
}

/// Closed-form eigenvalues for z0 = 0 in two dimensions: c1 cos phi and lambda_+-.
inline std::array<double, 3> zero_gradient_eigenvalues(double phi, const HydroCoeffs& c) {
  const double cp = std::cos(phi), sp = std::sin(phi);
  const double s = std::sqrt((c.c1 - c.c2) * (c.c1 - c.c2) * cp * cp + 4.0 * c.c1 * c.theta * sp * sp);
  std::array<double, 3> r{c.c1 * cp, 0.5 * ((c.c1 + c.c2) * cp + s), 0.5 * ((c.c1 + c.c2) * cp - s)};
  std::sort(r.begin(), r.end());
  return r;
}

enum class Hyperbolicity { Hyperbolic, NotHyperbolic, Inconclusive };

inline std::string to_string(Hyperbolicity h) {
  switch (h) {
    case Hyperbolicity::Hyperbolic: return "hyperbolic";
    case Hyperbolicity::NotHyperbolic: return "not_hyperbolic";
    default: return "inconclusive";
  }
}

struct HyperbolicityVerdict {
  Hyperbolicity verdict = Hyperbolicity::Hyperbolic;
  WaveDirection witness;        // direction with the most negative discriminant (or first inconclusive one)
  double min_delta = INFINITY;  // smallest scaled discriminant seen
  double witness_delta = 0.0;   // raw discriminant at the witness
  int degenerate = 0;           // directions resolved by the diagonalisability check
};

inline double hyperbolicity_tolerance(const CubicData& d) {
  const double s = 1.0 + std::abs(d.L) + d.M * d.M;
  return 1e-10 * s * s * s;
}

namespace detail {

/// Real spectrum and eigenvector matrix condition number below 1e8.
inline bool numerically_diagonalizable(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, true);
  if (es.info() != Eigen::Success) return false;
  const double scale = 1.0 + A.cwiseAbs().maxCoeff();
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i).imag()) > 1e-8 * scale) return false;
  Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 0.0)) return false;
  return sv(0) / sv(sv.size() - 1) < 1e8;
}

} // namespace detail

/// Scan of the Fourier directions. grid is the number of samples per angle (>= 16);
/// the directions phi in {delta, delta + pi, delta +- pi/2} and theta = pi/2 are always included.
inline HyperbolicityVerdict is_hyperbolic(const EquilibriumSpec& eq, const HydroCoeffs& c, int grid = 32) {
  eq.validate();
  if (grid < 16) throw InvalidParameter("hyperbolicity grid needs at least 16 points per angle");
  std::vector<WaveDirection> dirs;
  std::vector<double> thetas;
  if (eq.n == 2) thetas = {kPi / 2};
  else {
    for (int i = 0; i < grid; ++i) thetas.push_back(kPi * i / (grid - 1));
    if (grid % 2 == 0) thetas.push_back(kPi / 2);  // L can only vanish on this circle
  }
  std::vector<double> phis;
  for (int i = 0; i < grid; ++i) phis.push_back(-kPi + kTwoPi * i / grid);
  for (double extra : {eq.delta, eq.delta + kPi, eq.delta + kPi / 2, eq.delta - kPi / 2})
    phis.push_back(wrap_pi(extra));
  for (double t : thetas)
    for (double p : phis) dirs.push_back({t, p});

  std::vector<double> scaled(dirs.size()), raw(dirs.size());
  std::vector<int> state(dirs.size(), 0);  // 0 fine, 1 negative, 2 degenerate ok, 3 inconclusive
  parallel_for(dirs.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      CubicData d = cubic_data(eq, dirs[i], c);
      const double tol = hyperbolicity_tolerance(d);
      const double delta = discriminant(d);
      raw[i] = delta;
      scaled[i] = delta / tol;
      bool degenerate = std::abs(delta) <= tol;
      if (eq.n >= 3) {
        // X2 coinciding with a root of P: P(X2) = L Y
        const double s = 1.0 + std::abs(d.L) + d.M * d.M + d.Y * d.Y;
        if (std::abs(d.L * d.Y) <= 1e-10 * s * s) degenerate = true;
      }
      if (delta < -tol) state[i] = 1;
      else if (degenerate)
        state[i] = detail::numerically_diagonalizable(symbol_matrix(eq, dirs[i], c)) ? 2 : 3;
    }
  });
  HyperbolicityVerdict v;
  std::optional<std::size_t> worst, first_inconclusive;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    v.min_delta = std::min(v.min_delta, scaled[i]);
    if (state[i] == 1 && (!worst || scaled[i] < scaled[*worst])) worst = i;
    if (state[i] == 2) ++v.degenerate;
    if (state[i] == 3 && !first_inconclusive) first_inconclusive = i;
  }
  if (worst) {
    v.verdict = Hyperbolicity::NotHyperbolic;
    v.witness = dirs[*worst];
    v.witness_delta = raw[*worst];
  } else if (first_inconclusive) {
    v.verdict = Hyperbolicity::Inconclusive;
    v.witness = dirs[*first_inconclusive];
    v.witness_delta = raw[*first_inconclusive];
  }
  return v;
}

/// Coefficients a0..a4 of Delta(M) along theta = pi/2, phi = delta (Z = 1); degree 4 in M.
inline std::array<double, 5> large_m_discriminant_poly(double delta, const HydroCoeffs& c) {
  const double s2 = std::sin(delta) * std::sin(delta);
  const double T = (c.c1 - c.c2) * std::cos(delta), L = c.c1 * c.theta * s2, R = c.theta * s2;
  // Y = T + M; expand each term of the discriminant as a polynomial in M
  using P = std::array<double, 7>;
  auto mul = [](const P& a, const P& b) {
    P r{};
    for (int i = 0; i < 7; ++i)
      for (int j = 0; i + j < 7; ++j) r[i + j] += a[i] * b[j];
    return r;
  };
  auto add = [](P a, const P& b, double s = 1.0) {
    for (int i = 0; i < 7; ++i) a[i] += s * b[i];
    return a;
  };
  const P m{0, 1}, y{T, 1};
  const P m2 = mul(m, m), y2 = mul(y, y), y3 = mul(y2, y), y4 = mul(y2, y2);
  const P lm = add(P{L}, m2);
  P total{};
  total = add(total, mul(y4, m2), 4.0);
  total = add(total, mul(y3, m), 4.0 * R);
  total = add(total, mul(y2, add(add(P{L * L}, m2, 20.0 * L), mul(m2, m2), -8.0)));
  total = add(total, mul(mul(y, m), add(P{L}, m2, -2.0)), 18.0 * R);
  total = add(total, mul(mul(lm, lm), lm), 4.0);
  total = add(total, m2, -27.0 * R * R);
  return {total[0], total[1], total[2], total[3], total[4]};
}

/// Bound beyond which Delta(M) < 0 along phi = delta, or nullopt when cot^2 delta >= E/2
/// (E = 2 Theta (1 - c1) / (c1 - c2)^2) so that the leading coefficient need not be negative.
inline std::optional<double> large_m_bound(double delta, const HydroCoeffs& c) {
  const double E = 2.0 * c.theta * (1.0 - c.c1) / ((c.c1 - c.c2) * (c.c1 - c.c2));
  const double sd = std::sin(delta);
  if (sd == 0.0) return std::nullopt;
  const double cot2 = std::cos(delta) * std::cos(delta) / (sd * sd);
  if (!(cot2 < E / 2.0)) return std::nullopt;
  auto a = large_m_discriminant_poly(delta, c);
  if (!(a[4] < 0.0)) return std::nullopt;
  double mx = 0.0;
  for (int i = 0; i < 4; ++i) mx = std::max(mx, std::abs(a[i] / a[4]));
  return 1.0 + mx;  // Cauchy bound on the real roots
}

/// Travelling-wave speed lambda = 2 pi c1 (p U1 + m U2) + 4 pi^2 beta (p^2 + m^2), beta = b or b'.
inline double tw_lambda(int p, int m, double U1, double U2, const HydroCoeffs& c, bool use_bprime) {
  if (std::abs(std::hypot(U1, U2) - 1.0) > 1e-12) throw InvalidParameter("U must be a unit vector");
  const double beta = use_bprime ? c.bp : c.b;
  return kTwoPi * c.c1 * (p * U1 + m * U2) + 4.0 * kPi * kPi * beta * (double(p) * p + double(m) * m);
}

struct StationaryResult {
  std::vector<std::array<double, 2>> U;
  bool b_zero = false;  // the constraint never binds; flagged instead of solved
};

/// Unit vectors U with tw_lambda(p, m, U) = 0.
inline StationaryResult stationary_U(int p, int m, const HydroCoeffs& c, bool use_bprime = false) {
  if (p == 0 && m == 0) throw InvalidParameter("stationary_U needs (p, m) != (0, 0)");
  const double beta = use_bprime ? c.bp : c.b;
  StationaryResult r;
  if (beta == 0.0) {
    r.b_zero = true;
    return r;
  }
  if (!(c.c1 > 0.0)) return r;
  const double X2 = double(p) * p + double(m) * m, X = std::sqrt(X2);
  const double a = kTwoPi * beta / c.c1;  // U.X = -a |X|^2
  const double limit = c.c1 / (kTwoPi * std::abs(beta));
  const double rel = (X - limit) / limit;
  if (rel > 1e-12) return r;
  if (std::abs(rel) <= 1e-12) {
    const double s = beta > 0 ? 1.0 : -1.0;
    r.U.push_back({-s * p / X, -s * m / X});
    return r;
  }
  const double w = std::sqrt(std::max(0.0, 1.0 / X2 - a * a));
  for (double sigma : {1.0, -1.0}) r.U.push_back({-a * p + sigma * w * (-m), -a * m + sigma * w * p});
  return r;
}

} // namespace swarm
