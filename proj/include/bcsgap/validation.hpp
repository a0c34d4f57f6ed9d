#pragma once

// Executable checks for every provable property of the solution, collected
// into a machine-readable report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bcsgap/errors.hpp"
#include "bcsgap/fixed_point.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/simplified_gap.hpp"
#include "json.hpp"

namespace bcsgap {

enum class CheckStatus { pass, fail, skipped };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::skipped: return "skipped";
  }
  return "?";
}

inline CheckStatus check_status_from_string(const std::string& s) {
  if (s == "pass") return CheckStatus::pass;
  if (s == "fail") return CheckStatus::fail;
  if (s == "skipped") return CheckStatus::skipped;
  throw ParseError("unknown check status '" + s + "'");
}

/// One verified property. margin is signed: positive means the property
/// holds with that much room (in the check's own units).
struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::skipped;
  double margin = 0.0;
  double tolerance = 0.0;
  std::string anchor;
  std::string detail;

  bool passed() const { return status != CheckStatus::fail; }
  friend bool operator==(const CheckResult&, const CheckResult&) = default;
};

inline CheckResult make_check(std::string name, bool ok, double margin, double tolerance, std::string anchor,
                              std::string detail = {}) {
  return {std::move(name), ok ? CheckStatus::pass : CheckStatus::fail, margin, tolerance, std::move(anchor),
          std::move(detail)};
}

/// Numerical slack for the bracketing-type inequalities:
/// 10 * (quadrature error estimate + root tolerance), in energy units of
/// hbar_omega_D. The quadrature error is estimated by halving the panel
/// width on the zero-temperature gap integral of each coupling.
inline double inequality_slack(const ModelParams& p, const QuadratureRule& rule) {
  double quad = 0.0;
  const QuadratureNodes base(p.epsilon, p.hbar_omega_D, rule);
  const QuadratureNodes fine(p.epsilon, p.hbar_omega_D, rule.refined());
  for (double U : {p.U0, p.U1, p.U2}) {
    const double d = delta_at_zero_closed_form(U, p);
    auto f = [d](double xi) { return 1.0 / std::hypot(xi, d); };
    quad = std::max(quad, std::abs(U * base.integrate(f) - U * fine.integrate(f)));
  }
  return 10.0 * (std::max(quad, 1e-15) + kRootTolerance) * p.hbar_omega_D;
}

// ---------------------------------------------------------------------------

/// D1(T) - qtol <= u(T, x) <= D2(T) + qtol at every node; the margin is the
/// smaller of min(u - D1) and min(D2 - u).
inline CheckResult check_bracketing(const GapSurface& s, const Envelopes& env, double qtol) {
  double lower = std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.grid.nT(); ++i) {
    for (std::size_t j = 0; j < s.grid.nx(); ++j) {
      const double u = s.at(i, j);
      lower = std::min(lower, u - env.lower[i]);
      upper = std::min(upper, env.upper[i] - u);
    }
  }
  const double margin = std::min(lower, upper);
  std::ostringstream d;
  d.precision(6);
  d << "min(u - D1) = " << lower << ", min(D2 - u) = " << upper;
  return make_check("bracketing", lower >= -qtol && upper >= -qtol, margin, qtol, "D1(T) <= u0(T,x) <= D2(T)",
                    d.str());
}

/// Largest |difference| between grid-adjacent values (T or x neighbours).
inline double discrete_modulus(const GapSurface& s) {
  double w = 0.0;
  for (std::size_t i = 0; i < s.grid.nT(); ++i) {
    for (std::size_t j = 0; j < s.grid.nx(); ++j) {
      if (j + 1 < s.grid.nx()) w = std::max(w, std::abs(s.at(i, j + 1) - s.at(i, j)));
      if (i + 1 < s.grid.nT()) w = std::max(w, std::abs(s.at(i + 1, j) - s.at(i, j)));
    }
  }
  return w;
}

inline constexpr double kContinuityShrink = 0.75;

struct ContinuityOptions {
  double qtol = 0.0;
  /// Bound on |u_fine - u_coarse| at shared nodes.
  double cross_bound = 1e-6;
};

/// Continuity proxy over a ladder of grids, each a 2x refinement of the
/// previous: the discrete modulus must shrink, w(h/2) <= 0.75 w(h) + qtol,
/// and solutions on consecutive grids must agree at shared nodes.
inline CheckResult check_continuity(const std::function<GapSurface(const Grid2D&)>& solve,
                                    const std::vector<Grid2D>& ladder, const ContinuityOptions& opt) {
  const char* anchor = "u0 continuous on [0,T1] x [eps,hbar_omega_D]";
  if (ladder.size() < 2) {
    return {"continuity", CheckStatus::skipped, 0.0, opt.qtol, anchor, "insufficient grid: ladder needs 2 grids"};
  }
  for (const auto& g : ladder) {
    if (g.nT() < 2 || g.nx() < 2) {
      return {"continuity", CheckStatus::skipped, 0.0, opt.qtol, anchor,
              "insufficient grid: every grid needs >= 2 nodes per axis"};
    }
  }
  std::vector<GapSurface> sols;
  std::vector<double> moduli;
  for (const auto& g : ladder) {
    sols.push_back(solve(g));
    moduli.push_back(discrete_modulus(sols.back()));
  }
  double margin = std::numeric_limits<double>::infinity();
  double cross = 0.0;
  bool ok = true;
  std::ostringstream d;
  d.precision(6);
  d << "moduli:";
  for (double m : moduli) d << ' ' << m;
  for (std::size_t l = 0; l + 1 < sols.size(); ++l) {
    const auto& c = sols[l];
    const auto& f = sols[l + 1];
    if (f.grid.nT() != 2 * c.grid.nT() - 1 || f.grid.nx() != 2 * c.grid.nx() - 1) {
      throw DomainError("continuity ladder: grids must be successive 2x refinements");
    }
    const double room = kContinuityShrink * moduli[l] + opt.qtol - moduli[l + 1];
    margin = std::min(margin, room);
    ok = ok && room >= 0.0;
    for (std::size_t i = 0; i < c.grid.nT(); ++i) {
      for (std::size_t j = 0; j < c.grid.nx(); ++j) cross = std::max(cross, std::abs(c.at(i, j) - f.at(2 * i, 2 * j)));
    }
  }
  ok = ok && cross < opt.cross_bound;
  margin = std::min(margin, opt.cross_bound - cross);
  d << "; max cross-grid difference " << cross << " (bound " << opt.cross_bound << "); shrink factor "
    << kContinuityShrink << " is a heuristic threshold";
  return make_check("continuity", ok, margin, opt.qtol, anchor, d.str());
}

/// Ladder ending at `finest` with `levels` grids, each coarser one halving
/// both axes. Falls back to refining upward from `finest` when its node
/// counts are not compatible with coarsening.
inline std::vector<Grid2D> continuity_ladder(const Grid2D& finest, const ModelParams& p, int levels) {
  std::vector<Grid2D> out;
  if (levels < 2) return {finest};
  const std::size_t div = std::size_t{1} << (levels - 1);
  const std::size_t nT = finest.nT(), nx = finest.nx();
  if (nT >= 2 && (nT - 1) % div == 0 && (nx - 1) % div == 0 && (nT - 1) / div >= 1) {
    Grid2D g = Grid2D::uniform(finest.T_max(), (nT - 1) / div + 1, (nx - 1) / div + 1, p);
    for (int l = 0; l < levels; ++l) {
      out.push_back(g);
      g = g.refined();
    }
    // Coarse uniform grids refine to the exact nodes of `finest` only up to
    // rounding; use the refinements consistently.
    return out;
  }
  Grid2D g = finest;
  for (int l = 0; l < levels; ++l) {
    out.push_back(g);
    g = g.refined();
  }
  return out;
}

/// Y with Y tanh Y = target (target > 0).
inline double solve_y_tanh_y(double target) {
  return bisect([&](double y) { return y * std::tanh(y) - target; }, 0.0, target + 2.0).root;
}

struct GMonotonicityOptions {
  int probes = 100;
  std::uint64_t seed = 7;
  int grid_points = 64;
  /// Largest Y = E/2T on the test grid; exp(-2Y) stays a normal double.
  double max_y = 340.0;
  /// Relative agreement of dg_dT with a central difference (step 1e-6 T)
  /// at T2/2 and T2/4.
  double fd_rel_tol = 1e-6;
};

/// Central difference of g at T with step h, formed from the
/// cancellation-free increment g(T + h) - g(T - h).
inline double g_central_difference(double T, double h, double xi, double X) {
  return g_increment(T - h, T + h, xi, X) / (2.0 * h);
}

/// For random (xi, X), xi in [eps, hbar_omega_D], X in (D0(0)/2, 2 D2(0)):
/// takes the largest T2 with Y tanh Y > (1 + xi^2/X^2)/2 at Y = E/2T2, then
/// requires g(.; xi, X) to increase strictly across a T-grid on [0, T2]
/// (compared via cancellation-free increments), dg/dT > 0 inside, and
/// dg/dT agrees with a central difference at T2/2 and T2/4.
inline CheckResult check_g_monotonicity(const ModelParams& p, const GMonotonicityOptions& opt = {}) {
  if (opt.probes < 1) throw DomainError("g monotonicity: probes must be >= 1");
  std::mt19937_64 rng(opt.seed);
  const double x_lo = 0.5 * delta_at_zero_closed_form(p.U0, p);
  const double x_hi = 2.0 * delta_at_zero_closed_form(p.U2, p);
  double margin = std::numeric_limits<double>::infinity();
  int failures = 0, unresolved = 0;
  double worst_fd = 0.0;
  std::ostringstream d;
  d.precision(6);
  for (int k = 0; k < opt.probes; ++k) {
    const double xi = p.epsilon + (p.hbar_omega_D - p.epsilon) * uniform01(rng);
    double r = uniform01(rng);
    if (r == 0.0) r = 0.5;
    const double X = x_lo + (x_hi - x_lo) * r;
    const double e = std::hypot(xi, X);
    const double y_star = solve_y_tanh_y(0.5 * (1.0 + xi * xi / (X * X)));
    // Smallest Y strictly inside the condition.
    double y2 = y_star;
    while (!(y2 * std::tanh(y2) > 0.5 * (1.0 + xi * xi / (X * X)))) y2 = std::nextafter(y2, 1e300);
    if (y2 >= opt.max_y) {
      ++unresolved;
      continue;
    }
    const double T2 = e / (2.0 * y2);
    std::vector<double> Ts{0.0};
    const int n = std::max(opt.grid_points, 3);
    const double ratio = std::log(opt.max_y / y2);
    for (int i = 0; i < n; ++i) {
      const double y = (i + 1 == n) ? y2 : opt.max_y * std::exp(-ratio * static_cast<double>(i) / (n - 1));
      Ts.push_back(i + 1 == n ? T2 : e / (2.0 * y));
    }
    bool ok = true;
    for (std::size_t i = 0; i + 1 < Ts.size(); ++i) {
      const double inc = g_increment(Ts[i], Ts[i + 1], xi, X);
      const double rel = inc / g_func(0.0, xi, X);
      margin = std::min(margin, rel);
      if (!(inc > 0.0)) ok = false;
      if (i > 0 && !(dg_dT(Ts[i], xi, X) > 0.0)) ok = false;
    }
    if (!(g_increment(0.0, T2, xi, X) > 0.0)) ok = false;
    for (double T : {0.5 * T2, 0.25 * T2}) {
      const double exact = dg_dT(T, xi, X);
      const double fd = g_central_difference(T, 1e-6 * T, xi, X);
      const double rel = std::abs(fd - exact) / std::abs(exact);
      worst_fd = std::max(worst_fd, rel);
      if (!(exact > 0.0) || !(rel <= opt.fd_rel_tol)) ok = false;
    }
    if (!ok) {
      if (failures == 0) d << "first failure at xi = " << xi << ", X = " << X << "; ";
      ++failures;
    }
  }
  d << failures << " failing, " << unresolved << " unresolvable in double of " << opt.probes
    << " probes; worst dg/dT finite-difference deviation " << worst_fd;
  return make_check("g_monotonicity", failures == 0, margin, 0.0, "g(.; xi, X) strictly increasing on [0, T2]",
                    d.str());
}

struct OrderingOptions {
  int points = 512;
  double span = 1.1;  // grid covers [0, span * tau2]
};

/// tau0 < tau1 < tau2 and the five regional orderings of D0, D1, D2 on a
/// uniform T-grid over [0, 1.1 tau2].
inline CheckResult check_ordering(const GapFamily& gaps, const OrderingOptions& opt = {}) {
  const double t0 = gaps.lower.tau(), t1 = gaps.middle.tau(), t2 = gaps.upper.tau();
  double margin = std::min(t1 - t0, t2 - t1);
  bool ok = t0 < t1 && t1 < t2;
  int bad = 0;
  const int n = std::max(opt.points, 2);
  std::vector<double> d0(n), d1(n), d2(n), Ts(n);
  for (int i = 0; i < n; ++i) Ts[i] = opt.span * t2 * static_cast<double>(i) / (n - 1);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    d0[i] = gaps.lower.delta(Ts[i]);
    d1[i] = gaps.middle.delta(Ts[i]);
    d2[i] = gaps.upper.delta(Ts[i]);
  });
  for (int i = 0; i < n; ++i) {
    const double T = Ts[i];
    bool clause;
    double m;
    if (T < t0) {
      clause = 0.0 < d0[i] && d0[i] < d1[i] && d1[i] < d2[i];
      m = std::min({d0[i], d1[i] - d0[i], d2[i] - d1[i]});
    } else if (T < t1) {
      clause = d0[i] == 0.0 && 0.0 < d1[i] && d1[i] < d2[i];
      m = std::min(d1[i], d2[i] - d1[i]);
    } else if (T < t2) {
      clause = d0[i] == 0.0 && d1[i] == 0.0 && 0.0 < d2[i];
      m = d2[i];
    } else {
      clause = d0[i] == 0.0 && d1[i] == 0.0 && d2[i] == 0.0;
      m = 0.0;
    }
    if (!clause) {
      ++bad;
      margin = std::min(margin, -std::abs(m) - std::numeric_limits<double>::min());
    } else if (T < t2) {
      margin = std::min(margin, m);
    }
  }
  ok = ok && bad == 0;
  std::ostringstream d;
  d.precision(10);
  d << "tau = (" << t0 << ", " << t1 << ", " << t2 << "); " << bad << " of " << n << " grid points violate a clause";
  return make_check("ordering", ok, margin, 0.0, "tau0 < tau1 < tau2 and D0 < D1 < D2 by region", d.str());
}

/// solve_delta(U, 0) against the closed form for U0, U1, U2.
inline CheckResult check_closed_form(const GapFamily& gaps, double rel_tol = 1e-8) {
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double cf = gaps[k].delta_at_zero_closed_form();
    worst = std::max(worst, std::abs(gaps[k].delta(0.0) - cf) / cf);
  }
  std::ostringstream d;
  d.precision(3);
  d << "max relative deviation " << worst;
  return make_check("closed_form_consistency", worst < rel_tol, rel_tol - worst, rel_tol,
                    "D_k(0) equals the closed-form zero-temperature gap", d.str());
}

// ---------------------------------------------------------------------------
// Report

struct VerificationReport {
  nlohmann::ordered_json params;
  std::string kernel_id;
  std::size_t nT = 0, nx = 0;
  double T_max = 0.0;
  int iterations = 0;
  std::vector<double> residuals;
  double k_estimate = std::numeric_limits<double>::quiet_NaN();
  double k_empirical_max = std::numeric_limits<double>::quiet_NaN();
  double T1 = 0.0;
  double T1_star = 0.0;
  double T1_star_floor = 0.0;
  bool window_proven = false;
  SmallnessCheck smallness;
  SmallnessCheck smallness_T1;
  std::vector<std::string> flags;
  std::vector<CheckResult> checks;
  std::string config_hash;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

inline constexpr const char* kOutsideWindowFlag = "outside proven contraction window";

namespace detail {
inline nlohmann::ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}
inline double number_from(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}
}  // namespace detail

/// Deterministic serialization: no wall-clock fields, so identical inputs
/// give byte-identical reports ("timestamp" is always null).
inline nlohmann::ordered_json to_json(const VerificationReport& r) {
  nlohmann::ordered_json j;
  j["params"] = r.params;
  j["kernel_id"] = r.kernel_id;
  j["grid"] = {{"nT", r.nT}, {"nx", r.nx}, {"T_max", r.T_max}};
  j["iterations"] = r.iterations;
  j["residuals"] = r.residuals;
  j["k_estimate"] = detail::number_or_null(r.k_estimate);
  j["k_empirical_max"] = detail::number_or_null(r.k_empirical_max);
  j["T1"] = r.T1;
  j["T1_star"] = r.T1_star;
  j["T1_star_floor"] = r.T1_star_floor;
  j["window_proven"] = r.window_proven;
  j["smallness"] = {{"lhs", detail::number_or_null(r.smallness.lhs)},
                    {"rhs", r.smallness.rhs},
                    {"holds", r.smallness.holds}};
  j["smallness_T1"] = {{"lhs", detail::number_or_null(r.smallness_T1.lhs)},
                       {"rhs", r.smallness_T1.rhs},
                       {"holds", r.smallness_T1.holds}};
  j["flags"] = r.flags;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"status", to_string(c.status)},
                      {"passed", c.passed()},
                      {"margin", detail::number_or_null(c.margin)},
                      {"tolerance", c.tolerance},
                      {"anchor", c.anchor},
                      {"detail", c.detail}});
  }
  j["checks"] = checks;
  j["all_passed"] = r.all_passed();
  j["config_hash"] = r.config_hash;
  j["timestamp"] = nullptr;
  return j;
}

inline VerificationReport report_from_json(const nlohmann::json& j) {
  VerificationReport r;
  r.params = params_to_json(params_from_json(j.at("params")));
  r.kernel_id = j.at("kernel_id").get<std::string>();
  r.nT = j.at("grid").at("nT").get<std::size_t>();
  r.nx = j.at("grid").at("nx").get<std::size_t>();
  r.T_max = j.at("grid").at("T_max").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.residuals = j.at("residuals").get<std::vector<double>>();
  r.k_estimate = j.at("k_estimate").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("k_estimate").get<double>();
  r.k_empirical_max =
      j.at("k_empirical_max").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("k_empirical_max").get<double>();
  r.T1 = j.at("T1").get<double>();
  r.T1_star = j.at("T1_star").get<double>();
  r.T1_star_floor = j.at("T1_star_floor").get<double>();
  r.window_proven = j.at("window_proven").get<bool>();
  auto parse_smallness = [](const nlohmann::json& c) {
    return SmallnessCheck{c.at("holds").get<bool>(), detail::number_from(c.at("lhs")), c.at("rhs").get<double>()};
  };
  r.smallness = parse_smallness(j.at("smallness"));
  r.smallness_T1 = parse_smallness(j.at("smallness_T1"));
  r.flags = j.at("flags").get<std::vector<std::string>>();
  for (const auto& c : j.at("checks")) {
    CheckResult cr;
    cr.name = c.at("name").get<std::string>();
    cr.status = check_status_from_string(c.at("status").get<std::string>());
    cr.margin = detail::number_from(c.at("margin"));
    cr.tolerance = c.at("tolerance").get<double>();
    cr.anchor = c.at("anchor").get<std::string>();
    cr.detail = c.at("detail").get<std::string>();
    r.checks.push_back(std::move(cr));
  }
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Full suite

enum class TRangePolicy { automatic, explicit_max };

struct SuiteConfig {
  QuadratureRule rule{};
  std::size_t nT = 33;
  std::size_t nx = 65;
  TRangePolicy t_range = TRangePolicy::automatic;
  double T_max = 0.0;  // used with explicit_max
  double tol = 1e-10;
  int max_iter = 200;
  std::uint64_t seed = 42;
  int pairs = 50;
  int probes = 100;
  int ordering_points = 512;
  int ladder_levels = 3;
  int kernel_probes = 101;
  int v_samples = 10;
  double empirical_slack = 0.02;
  double ratio_slack = 0.05;
  std::string config_hash;
};

/// Window and grid for a run: the auto policy takes T_max = T1 from the
/// contraction window; any range not inside a proven window is flagged.
struct RunWindow {
  ContractionWindow window;
  double T_max = 0.0;
  bool outside = false;
};

inline RunWindow resolve_window(const ModelParams& p, const GapFamily& gaps, TRangePolicy policy, double T_max) {
  RunWindow w;
  w.window = contraction_window(p, gaps);
  if (policy == TRangePolicy::automatic) {
    w.T_max = w.window.T1;
  } else {
    if (!(T_max > 0.0)) throw DomainError("explicit T range requires T_max > 0");
    w.T_max = T_max;
  }
  w.outside = !w.window.proven || w.T_max > w.window.T1;
  return w;
}

/// Runs every check. Invalid parameters throw InfeasibleParameters; solver
/// non-convergence becomes a failed check.
inline VerificationReport run_full_suite(const Kernel& kernel, const ModelParams& p, const SuiteConfig& cfg) {
  p.validate();
  VerificationReport rep;
  rep.params = params_to_json(p);
  rep.kernel_id = kernel.id();
  rep.config_hash = cfg.config_hash;
  rep.nT = cfg.nT;
  rep.nx = cfg.nx;

  const auto kb = check_kernel_bounds(kernel, p, cfg.kernel_probes);
  rep.checks.push_back(make_check("kernel_bounds", kb.passed, kb.margin(), kKernelBoundSlack * p.U2,
                                  "U1 <= U(x,xi) <= U2 (probe grid only; continuity not certified)", describe(kb)));

  const GapFamily gaps(p, cfg.rule);
  rep.checks.push_back(check_closed_form(gaps));
  rep.checks.push_back(check_ordering(gaps, {cfg.ordering_points}));
  rep.checks.push_back(check_g_monotonicity(p, {cfg.probes, cfg.seed}));

  const RunWindow win = resolve_window(p, gaps, cfg.t_range, cfg.T_max);
  rep.T_max = win.T_max;
  rep.T1 = win.window.T1;
  rep.T1_star = win.window.T1_star;
  rep.T1_star_floor = win.window.T1_star_floor;
  rep.window_proven = win.window.proven;
  rep.smallness = win.window.at_T1_star;
  rep.smallness_T1 = win.window.at_T1;
  if (win.outside) rep.flags.emplace_back(kOutsideWindowFlag);

  const double qtol = inequality_slack(p, cfg.rule);
  const Grid2D grid = Grid2D::uniform(win.T_max, cfg.nT, cfg.nx, p);
  if (!kb.passed) {
    rep.checks.push_back({"fixed_point_residual", CheckStatus::fail, 0.0, cfg.tol, "||A u0 - u0|| < tol",
                          "not run: kernel violates its bounds"});
    return rep;
  }

  const GapOperator op(kernel, grid, p, cfg.rule);
  const Envelopes env = row_envelopes(grid, gaps);
  const SolveOptions sopt{cfg.tol, cfg.max_iter, InitialIterate::upper};
  std::optional<SolveResult> sol;
  try {
    sol = solve_gap(op, env, sopt);
  } catch (const NonConvergence& e) {
    rep.residuals = e.residuals();
    rep.iterations = static_cast<int>(e.residuals().size());
    rep.checks.push_back({"fixed_point_residual", CheckStatus::fail, 0.0, cfg.tol, "||A u0 - u0|| < tol", e.what()});
    return rep;
  }
  rep.iterations = sol->iterations;
  rep.residuals = sol->residuals;

  // Fixed-point certificate, re-evaluated on a 2x finer quadrature.
  {
    const double own = fixed_point_residual(sol->surface, kernel, p, cfg.rule);
    const double fine = fixed_point_residual(sol->surface, kernel, p, cfg.rule.refined());
    std::ostringstream d;
    d.precision(3);
    d << "converged in " << sol->iterations << " iterations; residual " << own << ", with 2x panels " << fine;
    const bool ok = own < cfg.tol && fine < 10.0 * cfg.tol;
    rep.checks.push_back(make_check("fixed_point_residual", ok, std::min(cfg.tol - own, 10.0 * cfg.tol - fine),
                                    cfg.tol, "A u0 = u0 (residual below tol; 10 tol with 2x panels)", d.str()));
  }

  rep.checks.push_back(check_bracketing(sol->surface, env, qtol));

  // A maps V into V.
  {
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    double margin = std::numeric_limits<double>::infinity();
    for (int s = 0; s < cfg.v_samples; ++s) {
      const auto au = op.apply(random_member_of_V(grid, env, rng));
      margin = std::min(margin, check_bracketing(au, env, qtol).margin);
    }
    std::ostringstream d;
    d << cfg.v_samples << " random members of V";
    rep.checks.push_back(make_check("v_preservation", margin >= -qtol, margin, qtol, "u in V implies Au in V", d.str()));
  }

  const ContractionConstant k = contraction_constant(gaps, win.T_max);
  rep.k_estimate = k.k;
  {
    std::ostringstream d;
    d.precision(12);
    d << "k = " << k.k << " (sup at T = " << k.T_at_sup << ", " << k.grid_points << " grid points)";
    if (k.violates_theory()) d << "; k >= 1 contradicts the contraction bound";
    rep.checks.push_back(make_check("contraction_constant", !k.violates_theory(), 1.0 - k.k, 0.0, "0 < k < 1", d.str()));
  }

  const auto emp = empirical_contraction(op, env, cfg.pairs, cfg.seed);
  rep.k_empirical_max = emp.max_ratio;
  {
    std::ostringstream d;
    d.precision(6);
    d << "max ratio " << emp.max_ratio << " over " << emp.pairs_used << " pairs (" << emp.pairs_skipped << " skipped)";
    const double room = k.k + cfg.empirical_slack - emp.max_ratio;
    rep.checks.push_back(make_check("empirical_contraction", room >= 0.0, room, cfg.empirical_slack,
                                    "||Au - Av|| <= k ||u - v|| on V", d.str()));
  }

  {
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < sol->residuals.size(); ++i) {
      if (sol->residuals[i] > 0.0) worst = std::max(worst, sol->residuals[i + 1] / sol->residuals[i]);
    }
    std::ostringstream d;
    d.precision(6);
    d << "max residual ratio after the first iteration " << worst;
    const double room = k.k + cfg.ratio_slack - worst;
    rep.checks.push_back(
        make_check("residual_decay", room >= 0.0, room, cfg.ratio_slack, "geometric decay at rate k", d.str()));
  }

  // Uniqueness in V: starting from D1 reaches the same surface.
  {
    SolveOptions lower = sopt;
    lower.start = InitialIterate::lower;
    double diff = std::numeric_limits<double>::infinity();
    double bound = 0.0;
    std::string detail;
    try {
      const auto other = solve_gap(op, env, lower);
      diff = sup_distance(other.surface, sol->surface);
      const double kk = std::min(k.k, 1.0 - 1e-6);
      bound = 2.0 * cfg.tol / (1.0 - kk) + qtol;
      std::ostringstream d;
      d.precision(3);
      d << "|u(D1 start) - u(D2 start)| = " << diff << " (bound " << bound << ")";
      detail = d.str();
    } catch (const NonConvergence& e) {
      detail = e.what();
    }
    rep.checks.push_back(make_check("uniqueness", diff <= bound, bound - diff, bound,
                                    "unique fixed point in V (D1 and D2 starts agree)", detail));
  }

  {
    const auto ladder = continuity_ladder(grid, p, cfg.ladder_levels);
    auto solver = [&](const Grid2D& g) {
      const GapOperator gop(kernel, g, p, cfg.rule);
      return solve_gap(gop, row_envelopes(g, gaps), sopt).surface;
    };
    try {
      rep.checks.push_back(check_continuity(solver, ladder, {qtol, 1e-6}));
    } catch (const NonConvergence& e) {
      rep.checks.push_back({"continuity", CheckStatus::fail, 0.0, qtol, "u0 continuous", e.what()});
    }
  }
  return rep;
}

}  // namespace bcsgap
