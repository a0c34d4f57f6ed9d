#pragma once

// Constant-kernel gap equation
//
//   1 = U * integral_eps^{hbar_omega_D} tanh(sqrt(xi^2 + D^2) / 2T) / sqrt(xi^2 + D^2) dxi
//
// its solution D(T), the transition temperature tau where D vanishes, and
// sampled monotone curves with an inverse.
//
// Both residuals used here are strictly monotone (in D at fixed T, and in T
// at fixed D), so every scalar root is found by bisection on a guaranteed
// bracket.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bcsgap/errors.hpp"
#include "bcsgap/interpolation.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/roots.hpp"
#include "json.hpp"

namespace bcsgap {

/// Residual tolerance on every defining equation solved in this module.
inline constexpr double kRootTolerance = 1e-12;

/// Zero-temperature gap in closed form:
/// sqrt((w - eps e^{1/U})(w - eps e^{-1/U})) / sinh(1/U), w = hbar_omega_D.
inline double delta_at_zero_closed_form(double U, const ModelParams& p) {
  if (!(U > 0.0)) throw DomainError("coupling must be positive");
  const double a = p.hbar_omega_D - p.epsilon * std::exp(1.0 / U);
  if (!(a > 0.0)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "infeasible parameters: hbar_omega_D <= epsilon*exp(1/U) for U = " << U;
    throw InfeasibleParameters(msg.str());
  }
  const double b = p.hbar_omega_D - p.epsilon * std::exp(-1.0 / U);
  return std::sqrt(a * b) / std::sinh(1.0 / U);
}

/// Monotone sampled gap curve T -> D(T) on [0, tau], extended by D = 0
/// above tau.
class GapCurve {
 public:
  GapCurve(double coupling, double tau, std::vector<double> T, std::vector<double> delta)
      : coupling_(coupling), tau_(tau), T_(std::move(T)), delta_(std::move(delta)) {
    if (T_.size() != delta_.size() || T_.size() < 2) {
      throw DomainError("gap curve: need matching sample vectors of length >= 2");
    }
    if (T_.front() != 0.0 || T_.back() != tau_) {
      throw DomainError("gap curve: samples must span [0, tau]");
    }
    if (delta_.back() != 0.0) throw DomainError("gap curve: delta(tau) must be 0");
    for (std::size_t i = 1; i < T_.size(); ++i) {
      if (!(T_[i] > T_[i - 1])) throw DomainError("gap curve: T samples must increase strictly");
      if (!(delta_[i] < delta_[i - 1])) throw DomainError("gap curve: delta samples must decrease strictly");
    }
  }

  double coupling() const { return coupling_; }
  double tau() const { return tau_; }
  std::span<const double> T_samples() const { return T_; }
  std::span<const double> delta_samples() const { return delta_; }
  std::size_t size() const { return T_.size(); }
  double delta_at_zero() const { return delta_.front(); }

  double delta(double T) const {
    if (T < 0.0) throw DomainError("gap curve: T must be >= 0");
    if (T >= tau_) return 0.0;
    return interpolate_linear(T_, delta_, T);
  }

  /// T with delta(T) = y. Bisection over the samples locates the segment;
  /// the linear piece is then inverted exactly.
  double inverse(double y) const {
    if (!(y >= 0.0 && y <= delta_.front())) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "gap curve inverse: " << y << " outside [0, " << delta_.front() << "]";
      throw DomainError(msg.str());
    }
    if (y == delta_.front()) return 0.0;
    std::size_t lo = 0, hi = delta_.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (delta_[mid] >= y) lo = mid;
      else hi = mid;
    }
    const double w = (delta_[lo] - y) / (delta_[lo] - delta_[hi]);
    return T_[lo] + w * (T_[hi] - T_[lo]);
  }

 private:
  double coupling_;
  double tau_;
  std::vector<double> T_;
  std::vector<double> delta_;
};

inline double delta_inverse(const GapCurve& curve, double y) { return curve.inverse(y); }

/// Solver for one coupling constant on a fixed quadrature.
class SimplifiedGap {
 public:
  SimplifiedGap(double coupling, const ModelParams& params, const QuadratureRule& rule = {})
      : U_(coupling),
        params_(params),
        nodes_(params.epsilon, params.hbar_omega_D, rule),
        closed_form_(bcsgap::delta_at_zero_closed_form(coupling, params)) {
    tau_ = solve_tau();
  }

  double coupling() const { return U_; }
  const ModelParams& params() const { return params_; }
  const QuadratureNodes& nodes() const { return nodes_; }
  double tau() const { return tau_; }
  double delta_at_zero_closed_form() const { return closed_form_; }

  /// U * integral of tanh(E / 2T) / E, E = sqrt(xi^2 + D^2).
  double gap_integral(double delta, double T) const {
    return U_ * nodes_.integrate([&](double xi) {
      return tanh_factor(xi, delta, T) / std::hypot(xi, delta);
    });
  }

  /// 1 - gap_integral: increasing in delta and in T.
  double residual(double delta, double T) const { return 1.0 - gap_integral(delta, T); }

  /// D(T) >= 0; zero for T >= tau.
  double delta(double T) const {
    if (!(T >= 0.0)) throw DomainError("solve_delta: T must be >= 0");
    if (T >= tau_) return 0.0;
    if (residual(0.0, T) >= 0.0) return 0.0;
    double hi = closed_form_ * (1.0 + 1e-6);
    for (int k = 0; k < 60 && residual(hi, T) <= 0.0; ++k) hi *= 1.01;
    return bisect([&](double d) { return residual(d, T); }, 0.0, hi).root;
  }

  /// Temperature at which the gap equals delta: the inverse of delta(T)
  /// computed from the gap equation itself rather than from samples.
  double temperature_for(double delta) const {
    if (!(delta >= 0.0)) throw DomainError("temperature_for: delta must be >= 0");
    if (delta == 0.0) return tau_;
    if (residual(delta, 0.0) >= 0.0) return 0.0;
    if (residual(delta, tau_) <= 0.0) return tau_;
    return bisect([&](double T) { return residual(delta, T); }, 0.0, tau_).root;
  }

  /// Samples uniform in T on [0, 0.9 tau], then uniform in D down to 0 so
  /// that the steep approach D' -> -inf at tau is resolved. Samples in the
  /// exponentially flat region near T = 0 whose D is indistinguishable in
  /// double from the previous one are merged, keeping D strictly decreasing.
  GapCurve curve(int n_samples = 256) const {
    if (n_samples < 8) throw DomainError("gap curve: n_samples must be >= 8");
    const int n_t = n_samples / 2;
    const int n_d = n_samples - n_t;
    const double t_knee = 0.9 * tau_;
    std::vector<double> Ts, Ds;
    Ts.reserve(n_samples);
    Ds.reserve(n_samples);
    auto push = [&](double T, double D) {
      if (!Ds.empty() && !(D < Ds.back() && T > Ts.back())) return;
      Ts.push_back(T);
      Ds.push_back(D);
    };
    for (int i = 0; i < n_t; ++i) {
      const double T = (i + 1 == n_t) ? t_knee : t_knee * static_cast<double>(i) / (n_t - 1);
      push(T, delta(T));
    }
    const double d_knee = Ds.back();
    for (int i = 1; i <= n_d; ++i) {
      if (i == n_d) {
        Ts.push_back(tau_);
        Ds.push_back(0.0);
        break;
      }
      const double D = d_knee * (1.0 - static_cast<double>(i) / n_d);
      push(temperature_for(D), D);
    }
    return GapCurve(U_, tau_, std::move(Ts), std::move(Ds));
  }

 private:
  double solve_tau() const {
    const double lo = 1e-8 * params_.hbar_omega_D;
    const double hi = 10.0 * params_.hbar_omega_D;
    const double r_lo = residual(0.0, lo);
    if (!(r_lo < 0.0)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "infeasible parameters: coupling U = " << U_
          << " too weak for a transition temperature (U * integral tanh(xi/2T)/xi = " << 1.0 - r_lo
          << " < 1 at T = " << lo << ")";
      throw InfeasibleParameters(msg.str());
    }
    if (!(residual(0.0, hi) > 0.0)) {
      throw InfeasibleParameters("transition temperature above search bracket (10 * hbar_omega_D)");
    }
    return bisect([&](double T) { return residual(0.0, T); }, lo, hi).root;
  }

  double U_;
  ModelParams params_;
  QuadratureNodes nodes_;
  double closed_form_;
  double tau_ = 0.0;
};

inline double transition_temperature(double U, const ModelParams& p, const QuadratureRule& rule = {}) {
  return SimplifiedGap(U, p, rule).tau();
}

inline double solve_delta(double U, double T, const ModelParams& p, const QuadratureRule& rule = {}) {
  return SimplifiedGap(U, p, rule).delta(T);
}

inline GapCurve build_gap_curve(double U, const ModelParams& p, const QuadratureRule& rule = {},
                                int n_samples = 256) {
  return SimplifiedGap(U, p, rule).curve(n_samples);
}

/// The three constant-coupling problems U0 < U1 < U2 of one instance.
struct GapFamily {
  SimplifiedGap lower;   // U0
  SimplifiedGap middle;  // U1
  SimplifiedGap upper;   // U2

  GapFamily(const ModelParams& p, const QuadratureRule& rule = {})
      : lower(p.U0, p, rule), middle(p.U1, p, rule), upper(p.U2, p, rule) {}

  const SimplifiedGap& operator[](int k) const {
    switch (k) {
      case 0: return lower;
      case 1: return middle;
      case 2: return upper;
      default: throw DomainError("gap family index must be 0, 1 or 2");
    }
  }
};

// ---------------------------------------------------------------------------
// Curve files: CSV `T,delta` plus a JSON sidecar.

inline void write_curve_csv(std::ostream& out, const GapCurve& c, const std::string& config_hash = {}) {
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "T,delta\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << format_double(c.T_samples()[i]) << ',' << format_double(c.delta_samples()[i]) << '\n';
  }
}

inline nlohmann::ordered_json params_to_json(const ModelParams& p) {
  return {{"epsilon", p.epsilon}, {"hbar_omega_D", p.hbar_omega_D}, {"U0", p.U0}, {"U1", p.U1}, {"U2", p.U2}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  p.epsilon = j.at("epsilon").get<double>();
  p.hbar_omega_D = j.at("hbar_omega_D").get<double>();
  p.U0 = j.at("U0").get<double>();
  p.U1 = j.at("U1").get<double>();
  p.U2 = j.at("U2").get<double>();
  return p;
}

inline nlohmann::ordered_json curve_metadata(const GapCurve& c, const ModelParams& p, const QuadratureRule& rule,
                                             const std::string& config_hash = {}) {
  nlohmann::ordered_json j;
  j["U"] = c.coupling();
  j["tau"] = c.tau();
  j["delta_at_zero"] = c.delta_at_zero();
  j["samples"] = c.size();
  j["params"] = params_to_json(p);
  j["rule"] = {{"panels", rule.panels}, {"nodes_per_panel", rule.nodes_per_panel}};
  j["tolerances"] = {{"root_residual", kRootTolerance}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j;
}

/// Reads a curve back from its CSV and sidecar metadata.
inline GapCurve read_curve(std::istream& csv, const nlohmann::json& metadata) {
  std::string line;
  bool have_header = false;
  std::vector<double> Ts, Ds;
  int line_no = 0;
  while (std::getline(csv, line)) {
    ++line_no;
    line = detail::strip(line);
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      if (line != "T,delta") throw ParseError("curve csv: expected header 'T,delta'");
      have_header = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    const std::string where = "curve csv line " + std::to_string(line_no);
    if (f.size() != 2) throw ParseError(where + ": expected 2 fields");
    Ts.push_back(detail::parse_finite(detail::strip(f[0]), where));
    Ds.push_back(detail::parse_finite(detail::strip(f[1]), where));
  }
  if (!have_header) throw ParseError("curve csv: missing header");
  return GapCurve(metadata.at("U").get<double>(), metadata.at("tau").get<double>(), std::move(Ts), std::move(Ds));
}

}  // namespace bcsgap
