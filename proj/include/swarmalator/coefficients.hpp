#pragma once

#include "errors.hpp"
#include "quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

namespace swarm {

enum class CollisionKind { FokkerPlanck, BGK };

inline std::string to_string(CollisionKind kind) {
  return kind == CollisionKind::BGK ? "bgk" : "fp";
}

inline CollisionKind parse_collision_kind(const std::string& s) {
  if (s == "fp" || s == "FokkerPlanck" || s == "fokker-planck") return CollisionKind::FokkerPlanck;
  if (s == "bgk" || s == "BGK") return CollisionKind::BGK;
  throw InvalidParameter("unknown collision kind '" + s + "' (expected fp or bgk)");
}

struct ModelParams {
  double k = 1.0;
  double kprime = 1.0;
  double gamma = 0.0;
  int n = 2;
  CollisionKind kind = CollisionKind::FokkerPlanck;

  void validate() const {
    if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidParameter("k must be finite and >= 0");
    if (!(kprime >= 0.0) || !std::isfinite(kprime))
      throw InvalidParameter("kprime must be finite and >= 0");
    if (!std::isfinite(gamma)) throw InvalidParameter("gamma must be finite");
    if (n < 2) throw InvalidParameter("dimension n must be >= 2");
  }
};

struct HydroCoeffs {
  double c1 = 0.0, c2 = 0.0;
  double c1p = 0.0, c2p = 0.0;
  double b = 0.0, bp = 0.0;
  double theta = 0.0, thetap = 0.0;
  double kappa = 0.0;
};

/// Generalized collision invariant g on [0, pi] (h(cos) = g / sin).
/// Fokker-Planck, n = 2:  g(t) = t/c - (pi/c) F(t)/F(pi),  F(t) = int_0^t e^{-c(1 + cos s)} ds.
/// Evaluated through G(t) = F(t) - t, which keeps full relative accuracy as c -> 0:
///   g(t) = (t G(pi) - pi G(t)) / (c (pi + G(pi))).
class GciFunction {
public:
  GciFunction(double concentration, CollisionKind kind)
      : concentration_(concentration), kind_(kind) {
    if (kind_ == CollisionKind::FokkerPlanck && concentration_ > 0.0) build_table();
  }

  double concentration() const { return concentration_; }
  CollisionKind kind() const { return kind_; }

  double operator()(double t) const { return evaluate(t); }

  double evaluate(double t) const {
    if (kind_ == CollisionKind::BGK || concentration_ == 0.0) return std::sin(t);
    t = std::clamp(t, 0.0, kPi);
    return (t * g_total_ - kPi * cumulative(t)) / (concentration_ * (kPi + g_total_));
  }

  double derivative(double t) const {
    if (kind_ == CollisionKind::BGK || concentration_ == 0.0) return std::cos(t);
    return (g_total_ - kPi * integrand(t)) / (concentration_ * (kPi + g_total_));
  }

  /// Panel edges of the Gauss-Legendre table (empty for closed forms).
  const std::vector<double>& panel_edges() const { return edges_; }
  std::size_t nodes_per_panel() const { return kNodes; }

private:
  static constexpr unsigned kNodes = 20;
  using GL = boost::math::quadrature::gauss<double, kNodes>;

  double integrand(double s) const { return std::expm1(-concentration_ * (1.0 + std::cos(s))); }

  void build_table() {
    const double c = concentration_;
    std::size_t panels =
        std::max<std::size_t>(64, static_cast<std::size_t>(std::ceil(2.0 * kPi * std::sqrt(c))));
    panels = std::min<std::size_t>(panels, 1u << 20);
    edges_.resize(panels + 1);
    cum_.assign(panels + 1, 0.0);
    const double h = kPi / static_cast<double>(panels);
    for (std::size_t i = 0; i <= panels; ++i) edges_[i] = h * static_cast<double>(i);
    edges_.back() = kPi;
    auto w = [this](double s) { return integrand(s); };
    for (std::size_t i = 0; i < panels; ++i) {
      cum_[i + 1] = cum_[i] + GL::integrate(w, edges_[i], edges_[i + 1]);
    }
    g_total_ = cum_.back();
    panel_width_ = h;
  }

  double cumulative(double t) const {
    if (t >= kPi) return g_total_;
    std::size_t j = static_cast<std::size_t>(t / panel_width_);
    j = std::min(j, edges_.size() - 2);
    if (t <= edges_[j]) return cum_[j];
    auto w = [this](double s) { return integrand(s); };
    return cum_[j] + GL::integrate(w, edges_[j], t);
  }

  double concentration_;
  CollisionKind kind_;
  std::vector<double> edges_;
  std::vector<double> cum_;
  double g_total_ = 0.0;
  double panel_width_ = 1.0;
};

inline GciFunction solve_gci(double concentration, int n, CollisionKind kind) {
  if (!(concentration >= 0.0) || !std::isfinite(concentration))
    throw InvalidParameter("GCI concentration must be finite and >= 0");
  if (n < 2) throw InvalidParameter("dimension n must be >= 2");
  if (kind == CollisionKind::FokkerPlanck && n != 2)
    throw UnsupportedConfiguration("Fokker-Planck GCI is only available for n = 2");
  return GciFunction(concentration, kind);
}

inline double c1_of(double k, int n) {
  if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidParameter("k must be finite and >= 0");
  if (n < 2) throw InvalidParameter("dimension n must be >= 2");
  if (k == 0.0) return 0.0;
  const double p = static_cast<double>(n - 2);
  auto weight = [k, p](double t) {
    double s = std::sin(t);
    return std::exp(k * (std::cos(t) - 1.0)) * (p == 0.0 ? 1.0 : std::pow(s, p));
  };
  auto pts = peaked_breakpoints(k);
  auto num = integrate_split([&](double t) { return std::cos(t) * weight(t); }, pts, 1e-10, "c1");
  auto den = integrate_split(weight, pts, 1e-10, "c1 normalisation");
  return num.value / den.value;
}

inline double c1prime_of(double kprime) {
  if (!(kprime >= 0.0) || !std::isfinite(kprime))
    throw InvalidParameter("kprime must be finite and >= 0");
  return c1_of(kprime, 2);
}

/// c2 for an arbitrary invariant g (h sin^n = g sin^{n-1}).
inline double c2_with_gci(double k, int n, const GciFunction& g) {
  if (k == 0.0) return 0.0;
  const double p = static_cast<double>(n - 1);
  auto weight = [&](double t) {
    double s = std::sin(t);
    return g.evaluate(t) * std::exp(k * (std::cos(t) - 1.0)) * (p == 1.0 ? s : std::pow(s, p));
  };
  auto pts = peaked_breakpoints(k);
  auto num = integrate_split([&](double t) { return std::cos(t) * weight(t); }, pts, 1e-10, "c2");
  auto den = integrate_split(weight, pts, 1e-10, "c2 normalisation");
  return num.value / den.value;
}

inline double c2_of(double k, int n, CollisionKind kind) {
  if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidParameter("k must be finite and >= 0");
  GciFunction g = solve_gci(k, n, kind);
  return c2_with_gci(k, n, g);
}

inline double c2prime_of(double kprime, CollisionKind kind) { return c2_of(kprime, 2, kind); }

namespace detail {

struct CoreCoeffs {
  double c1, c2, c1p, c2p;
};

class CoeffCache {
public:
  using Key = std::tuple<double, double, int, int>;

  CoreCoeffs get(const ModelParams& p) {
    Key key{p.k, p.kprime, p.n, static_cast<int>(p.kind)};
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = table_.find(key);
      if (it != table_.end()) return it->second;
    }
    CoreCoeffs c{c1_of(p.k, p.n), c2_of(p.k, p.n, p.kind), c1prime_of(p.kprime),
                 c2prime_of(p.kprime, p.kind)};
    std::lock_guard<std::mutex> lock(mutex_);
    table_.emplace(key, c);
    return c;
  }

  std::size_t size() {
    std::lock_guard<std::mutex> lock(mutex_);
    return table_.size();
  }

private:
  std::mutex mutex_;
  std::map<Key, CoreCoeffs> table_;
};

inline CoeffCache& coeff_cache() {
  static CoeffCache cache;
  return cache;
}

} // namespace detail

inline HydroCoeffs assemble_coeffs(const ModelParams& params) {
  params.validate();
  if (params.k == 0.0) throw InvalidParameter("k = 0 makes the pressure coefficient 1/k undefined");
  if (params.kind == CollisionKind::FokkerPlanck && params.n != 2)
    throw UnsupportedConfiguration("Fokker-Planck coefficients are only available for n = 2");
  auto core = detail::coeff_cache().get(params);
  HydroCoeffs h;
  h.c1 = core.c1;
  h.c2 = core.c2;
  h.c1p = core.c1p;
  h.c2p = core.c2p;
  const double g = params.gamma;
  h.b = -g * h.c1p * h.c1p;
  if (params.kprime == 0.0) {
    // c1'/k' -> 1/2 and c1' c2' -> 0 as k' -> 0
    h.thetap = -g * 0.5;
    h.bp = -g * 0.5;
  } else {
    h.thetap = -g * h.c1p / params.kprime;
    h.bp = -g * h.c1p * (1.0 / params.kprime + h.c2p);
  }
  h.theta = 1.0 / params.k;
  h.kappa = static_cast<double>(params.n - 1) / params.k + h.c2;
  return h;
}

/// gamma giving a prescribed b' for fixed (k', kind).
inline double gamma_for_bprime(double bprime_target, double kprime, CollisionKind kind) {
  if (!(kprime > 0.0)) throw InvalidParameter("kprime must be > 0 to target b'");
  double c1p = c1prime_of(kprime);
  double c2p = c2prime_of(kprime, kind);
  return -bprime_target / (c1p * (1.0 / kprime + c2p));
}

} // namespace swarm
