#pragma once

// The gap operator
//
//   (A u)(T, x) = integral_eps^{hbar_omega_D} U(x, xi) u(T, xi) / E * tanh(E / 2T) dxi,
//   E = sqrt(xi^2 + u(T, xi)^2),
//
// its Picard iteration on a (T, x) grid, and the quantities that control
// contraction: the admissible temperature window and the constant k.
//
// A integrates over xi at fixed T, so each T-row is an independent 1-D
// fixed-point problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "bcsgap/errors.hpp"
#include "bcsgap/interpolation.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/parallel.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/roots.hpp"
#include "bcsgap/simplified_gap.hpp"
#include "json.hpp"

namespace bcsgap {

/// u(T_i, x_j) stored row-major (T outer).
struct GapSurface {
  Grid2D grid;
  std::vector<double> values;
  std::string kernel_id;
  int iterations = 0;
  double residual = std::numeric_limits<double>::quiet_NaN();

  GapSurface() = default;
  GapSurface(Grid2D g, std::vector<double> v, std::string id = {})
      : grid(std::move(g)), values(std::move(v)), kernel_id(std::move(id)) {
    if (values.size() != grid.nT() * grid.nx()) throw DomainError("surface: value count does not match grid");
  }

  double at(std::size_t i, std::size_t j) const { return values[i * grid.nx() + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * grid.nx(), grid.nx());
  }
  std::span<double> row(std::size_t i) { return std::span<double>(values).subspan(i * grid.nx(), grid.nx()); }
};

inline double sup_distance(const GapSurface& a, const GapSurface& b) {
  if (a.values.size() != b.values.size()) throw DomainError("surface: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

/// Row-wise lower and upper members of V: D1(T_i) and D2(T_i).
struct Envelopes {
  std::vector<double> lower;
  std::vector<double> upper;
};

inline Envelopes row_envelopes(const Grid2D& grid, const GapFamily& gaps) {
  Envelopes e;
  e.lower.resize(grid.nT());
  e.upper.resize(grid.nT());
  parallel_for(grid.nT(), [&](std::size_t i) {
    e.lower[i] = gaps.middle.delta(grid.T_nodes[i]);
    e.upper[i] = gaps.upper.delta(grid.T_nodes[i]);
  });
  return e;
}

inline GapSurface envelope_surface(const Grid2D& grid, std::span<const double> row_values) {
  std::vector<double> v(grid.nT() * grid.nx());
  for (std::size_t i = 0; i < grid.nT(); ++i) {
    std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(i * grid.nx()), grid.nx(), row_values[i]);
  }
  return GapSurface(grid, std::move(v));
}

/// Discretized A on a fixed grid and quadrature. The weighted kernel
/// matrix w_q U(x_j, xi_q) and the x-interpolation stencils at the
/// quadrature nodes are precomputed; u(T, .) between grid nodes is
/// piecewise linear in x, which keeps interpolated values inside V.
class GapOperator {
 public:
  GapOperator(const Kernel& kernel, const Grid2D& grid, const ModelParams& params, const QuadratureRule& rule = {})
      : grid_(grid), kernel_id_(kernel.id()), nodes_(params.epsilon, params.hbar_omega_D, rule) {
    grid.validate(params);
    const std::size_t nq = nodes_.size();
    weighted_kernel_.resize(grid.nx() * nq);
    for (std::size_t j = 0; j < grid.nx(); ++j) {
      for (std::size_t q = 0; q < nq; ++q) {
        const double U = kernel(grid.x_nodes[j], nodes_.nodes()[q]);
        if (!std::isfinite(U)) throw EvaluationError("kernel is not finite", nodes_.nodes()[q]);
        weighted_kernel_[j * nq + q] = nodes_.weights()[q] * U;
      }
    }
    stencils_.reserve(nq);
    for (std::size_t q = 0; q < nq; ++q) stencils_.push_back(linear_stencil(grid.x_nodes, nodes_.nodes()[q]));
  }

  const Grid2D& grid() const { return grid_; }
  const QuadratureNodes& nodes() const { return nodes_; }
  const std::string& kernel_id() const { return kernel_id_; }

  /// out_j = (A u)(T, x_j) for one row.
  void apply_row(double T, std::span<const double> u_row, std::span<double> out) const {
    const std::size_t nq = nodes_.size();
    std::vector<double> f(nq);
    for (std::size_t q = 0; q < nq; ++q) {
      const double xi = nodes_.nodes()[q];
      const double u = stencils_[q].apply(u_row);
      f[q] = u / std::hypot(xi, u) * tanh_factor(xi, u, T);
      if (!std::isfinite(f[q])) throw EvaluationError("gap integrand is not finite", xi);
    }
    for (std::size_t j = 0; j < grid_.nx(); ++j) {
      const double* w = &weighted_kernel_[j * nq];
      double s = 0.0;
      for (std::size_t q = 0; q < nq; ++q) s += w[q] * f[q];
      out[j] = s;
    }
  }

  GapSurface apply(const GapSurface& u) const {
    if (u.values.size() != grid_.nT() * grid_.nx()) throw DomainError("gap operator: surface/grid mismatch");
    GapSurface out(grid_, std::vector<double>(u.values.size()), kernel_id_);
    parallel_for(grid_.nT(), [&](std::size_t i) { apply_row(grid_.T_nodes[i], u.row(i), out.row(i)); });
    return out;
  }

 private:
  Grid2D grid_;
  std::string kernel_id_;
  QuadratureNodes nodes_;
  std::vector<double> weighted_kernel_;
  std::vector<LinearStencil> stencils_;
};

inline GapSurface apply_A(const GapSurface& u, const Kernel& kernel, const ModelParams& params,
                          const QuadratureRule& rule = {}) {
  return GapOperator(kernel, u.grid, params, rule).apply(u);
}

// ---------------------------------------------------------------------------
// Picard iteration

enum class InitialIterate { upper, lower };

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 200;
  InitialIterate start = InitialIterate::upper;
};

struct SolveResult {
  GapSurface surface;
  int iterations = 0;
  /// residuals[n] = ||A u_n - u_n||_inf for the n-th iterate.
  std::vector<double> residuals;
  Envelopes envelopes;
};

class SolveFailure : public NonConvergence {
 public:
  SolveFailure(const std::string& what, std::vector<double> residuals, GapSurface last)
      : NonConvergence(what, std::move(residuals)), last_(std::move(last)) {}
  const GapSurface& last_iterate() const noexcept { return last_; }

 private:
  GapSurface last_;
};

/// Picard iteration u <- A u from D2(T) (or D1(T)), stopping at the first
/// iterate whose sup-norm residual is below tol. The returned surface is
/// the last computed A u, whose own residual is at most k * tol.
inline SolveResult solve_gap(const GapOperator& op, const Envelopes& env, const SolveOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw DomainError("solve_gap: tol must be positive");
  if (opt.max_iter < 1) throw DomainError("solve_gap: max_iter must be >= 1");
  SolveResult r;
  r.envelopes = env;
  GapSurface u = envelope_surface(op.grid(), opt.start == InitialIterate::upper ? env.upper : env.lower);
  u.kernel_id = op.kernel_id();
  for (int n = 0; n < opt.max_iter; ++n) {
    GapSurface next = op.apply(u);
    const double res = sup_distance(next, u);
    r.residuals.push_back(res);
    u = std::move(next);
    if (res < opt.tol) {
      r.iterations = n + 1;
      u.iterations = r.iterations;
      u.residual = res;
      r.surface = std::move(u);
      return r;
    }
  }
  u.iterations = opt.max_iter;
  u.residual = r.residuals.back();
  std::ostringstream msg;
  msg.precision(6);
  msg << "Picard iteration did not converge in " << opt.max_iter << " iterations (residual "
      << r.residuals.back() << ", tol " << opt.tol << ")";
  throw SolveFailure(msg.str(), r.residuals, std::move(u));
}

inline SolveResult solve_gap(const Kernel& kernel, const Grid2D& grid, const ModelParams& params,
                             const QuadratureRule& rule = {}, const SolveOptions& opt = {}) {
  const GapFamily gaps(params, rule);
  const GapOperator op(kernel, grid, params, rule);
  return solve_gap(op, row_envelopes(grid, gaps), opt);
}

/// ||A u - u||_inf re-evaluated with a different quadrature rule.
inline double fixed_point_residual(const GapSurface& u, const Kernel& kernel, const ModelParams& params,
                                   const QuadratureRule& rule) {
  return sup_distance(apply_A(u, kernel, params, rule), u);
}

// ---------------------------------------------------------------------------
// Contraction window

struct SmallnessCheck {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// (D0(0)/4T) tanh(D0(0)/4T) > (1 + 4 hbar_omega_D^2 / D0(0)^2) / 2, with
/// D0(0) the closed-form zero-temperature gap for U0.
inline SmallnessCheck check_smallness(const ModelParams& p, double T1_star) {
  if (!(T1_star >= 0.0)) throw DomainError("smallness condition: temperature must be >= 0");
  const double d0 = delta_at_zero_closed_form(p.U0, p);
  SmallnessCheck c;
  c.rhs = 0.5 * (1.0 + 4.0 * p.hbar_omega_D * p.hbar_omega_D / (d0 * d0));
  if (T1_star == 0.0) {
    c.lhs = std::numeric_limits<double>::infinity();
  } else {
    const double y = d0 / (4.0 * T1_star);
    c.lhs = y * (y > kSaturationY ? 1.0 : std::tanh(y));
  }
  c.holds = c.lhs > c.rhs;
  return c;
}

/// Largest T with check_smallness(p, T).holds: the smallness condition
/// applied to T itself rather than to T* = D2^{-1}(D0(T)).
inline double necessary_T1(const ModelParams& p) {
  const auto c = check_smallness(p, 1.0);
  const double d0 = delta_at_zero_closed_form(p.U0, p);
  const double y = bisect([&](double y) { return y * std::tanh(y) - c.rhs; }, 0.0, c.rhs + 2.0).root;
  double T = d0 / (4.0 * y);
  while (!check_smallness(p, T).holds) T = std::nextafter(T, 0.0);
  return T;
}

/// T*(T) = D2^{-1}(D0(T)), computed from the gap equations directly.
inline double mapped_temperature(const GapFamily& gaps, double T) {
  return gaps.upper.temperature_for(gaps.lower.delta(T));
}

struct ContractionWindow {
  /// True when some T1 > 0 satisfies the smallness condition on T1*.
  bool proven = false;
  double T1 = 0.0;
  double T1_star = 0.0;
  SmallnessCheck at_T1_star;
  SmallnessCheck at_T1;
  /// T*(0) = D2^{-1}(D0(0)): T1* can never be smaller.
  double T1_star_floor = 0.0;
  SmallnessCheck at_floor;
};

/// Largest T1 < tau0 whose T1* = sup_{T <= T1} T*(T) satisfies the
/// smallness condition. T*(T) is non-decreasing, so the sup is T*(T1) and
/// the condition is monotone in T1. If even T1 -> 0 fails (T1* is bounded
/// below by T*(0) > 0), the window is not proven and T1 falls back to
/// necessary_T1.
inline ContractionWindow contraction_window(const ModelParams& p, const GapFamily& gaps) {
  ContractionWindow w;
  w.T1_star_floor = mapped_temperature(gaps, 0.0);
  w.at_floor = check_smallness(p, w.T1_star_floor);
  if (!w.at_floor.holds) {
    w.proven = false;
    w.T1 = std::min(necessary_T1(p), gaps.lower.tau());
    w.T1_star = mapped_temperature(gaps, w.T1);
    w.at_T1_star = check_smallness(p, w.T1_star);
    w.at_T1 = check_smallness(p, w.T1);
    return w;
  }
  auto ok = [&](double T) { return check_smallness(p, mapped_temperature(gaps, T)).holds; };
  double lo = 0.0;
  double hi = gaps.lower.tau() * (1.0 - 1e-12);
  if (ok(hi)) {
    lo = hi;
  } else {
    for (int it = 0; it < 200; ++it) {
      const double mid = lo + 0.5 * (hi - lo);
      if (mid <= lo || mid >= hi) break;
      (ok(mid) ? lo : hi) = mid;
    }
  }
  w.proven = lo > 0.0;
  w.T1 = lo;
  w.T1_star = mapped_temperature(gaps, lo);
  w.at_T1_star = check_smallness(p, w.T1_star);
  w.at_T1 = check_smallness(p, w.T1);
  return w;
}

/// Strict form: throws InfeasibleParameters when no proven window exists.
inline ContractionWindow max_admissible_T1(const ModelParams& p, const GapFamily& gaps) {
  auto w = contraction_window(p, gaps);
  if (!w.proven) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "infeasible parameters: the smallness condition on T1* fails for every T1 > 0; T1* >= D2^{-1}(D0(0)) = "
        << w.T1_star_floor << " gives lhs " << w.at_floor.lhs << " <= rhs " << w.at_floor.rhs;
    throw InfeasibleParameters(msg.str());
  }
  return w;
}

// ---------------------------------------------------------------------------
// Contraction constant

struct ContractionConstant {
  double k = 0.0;
  double T_at_sup = 0.0;
  std::size_t grid_points = 0;
  /// k >= 1 contradicts the bound k < 1 and signals a parameter or
  /// tolerance fault.
  bool violates_theory() const { return !(k < 1.0); }
};

/// Integrand of k at one temperature:
/// U2 * integral tanh(sqrt(xi^2 + D1(T)^2) / 2T*) / sqrt(xi^2 + D1(T)^2).
inline double contraction_integral(const GapFamily& gaps, double T) {
  const double d1 = gaps.middle.delta(T);
  const double t_star = mapped_temperature(gaps, T);
  return gaps.upper.gap_integral(d1, t_star);
}

/// k = sup over T in [0, T1] of contraction_integral, taken on a uniform
/// grid of at least 257 points that is doubled until the sup moves by less
/// than 1e-10.
inline ContractionConstant contraction_constant(const GapFamily& gaps, double T1, std::size_t min_points = 257,
                                                std::size_t max_points = 16385) {
  if (!(T1 >= 0.0)) throw DomainError("contraction_constant: T1 must be >= 0");
  if (min_points < 2) min_points = 2;
  std::size_t n = min_points;
  std::vector<double> values(n);
  parallel_for(n, [&](std::size_t i) {
    values[i] = contraction_integral(gaps, T1 * static_cast<double>(i) / (n - 1));
  });
  auto sup_of = [&](const std::vector<double>& v, std::size_t points) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[arg]) arg = i;
    }
    return ContractionConstant{v[arg], T1 * static_cast<double>(arg) / (points - 1), points};
  };
  ContractionConstant best = sup_of(values, n);
  while (2 * n - 1 <= max_points) {
    const std::size_t m = 2 * n - 1;
    std::vector<double> finer(m);
    for (std::size_t i = 0; i < n; ++i) finer[2 * i] = values[i];
    parallel_for(n - 1, [&](std::size_t i) {
      finer[2 * i + 1] = contraction_integral(gaps, T1 * static_cast<double>(2 * i + 1) / (m - 1));
    });
    const ContractionConstant next = sup_of(finer, m);
    const bool settled = std::abs(next.k - best.k) < 1e-10;
    best = next;
    values = std::move(finer);
    n = m;
    if (settled) break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random members of V and the empirical Lipschitz ratio

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw;
/// bit-reproducible across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// lambda(T, x) D1(T) + (1 - lambda(T, x)) D2(T) with lambda a random
/// quadratic in the normalized coordinates, clipped to [0, 1].
inline GapSurface random_member_of_V(const Grid2D& grid, const Envelopes& env, std::mt19937_64& rng) {
  double c[6];
  c[0] = uniform01(rng);
  for (int i = 1; i < 6; ++i) c[i] = 2.0 * uniform01(rng) - 1.0;
  const double x0 = grid.x_nodes.front(), xspan = grid.x_nodes.back() - grid.x_nodes.front();
  const double tmax = grid.T_max();
  std::vector<double> v(grid.nT() * grid.nx());
  for (std::size_t i = 0; i < grid.nT(); ++i) {
    const double t = tmax > 0.0 ? grid.T_nodes[i] / tmax : 0.0;
    for (std::size_t j = 0; j < grid.nx(); ++j) {
      const double s = (grid.x_nodes[j] - x0) / xspan;
      const double lam = std::clamp(c[0] + c[1] * s + c[2] * t + c[3] * s * t + c[4] * s * s + c[5] * t * t, 0.0, 1.0);
      v[i * grid.nx() + j] = env.upper[i] + lam * (env.lower[i] - env.upper[i]);
    }
  }
  return GapSurface(grid, std::move(v));
}

struct EmpiricalContraction {
  double max_ratio = 0.0;
  int pairs_used = 0;
  int pairs_skipped = 0;
};

/// max over random pairs u, v in V of ||Au - Av|| / ||u - v||.
inline EmpiricalContraction empirical_contraction(const GapOperator& op, const Envelopes& env, int n_pairs,
                                                  std::uint64_t seed) {
  if (n_pairs < 1) throw DomainError("empirical_contraction: n_pairs must be >= 1");
  std::mt19937_64 rng(seed);
  EmpiricalContraction r;
  for (int p = 0; p < n_pairs; ++p) {
    const GapSurface u = random_member_of_V(op.grid(), env, rng);
    const GapSurface v = random_member_of_V(op.grid(), env, rng);
    const double den = sup_distance(u, v);
    if (den == 0.0) {
      ++r.pairs_skipped;
      continue;
    }
    const double num = sup_distance(op.apply(u), op.apply(v));
    r.max_ratio = std::max(r.max_ratio, num / den);
    ++r.pairs_used;
  }
  return r;
}

inline EmpiricalContraction empirical_contraction(const Kernel& kernel, const Grid2D& grid, const ModelParams& params,
                                                  const QuadratureRule& rule, int n_pairs, std::uint64_t seed) {
  const GapFamily gaps(params, rule);
  const GapOperator op(kernel, grid, params, rule);
  return empirical_contraction(op, row_envelopes(grid, gaps), n_pairs, seed);
}

// ---------------------------------------------------------------------------
// Output

inline void write_surface_csv(std::ostream& out, const GapSurface& s, const std::string& config_hash = {}) {
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "T,x,u\n";
  for (std::size_t i = 0; i < s.grid.nT(); ++i) {
    for (std::size_t j = 0; j < s.grid.nx(); ++j) {
      out << format_double(s.grid.T_nodes[i]) << ',' << format_double(s.grid.x_nodes[j]) << ','
          << format_double(s.at(i, j)) << '\n';
    }
  }
}

inline nlohmann::ordered_json smallness_to_json(const SmallnessCheck& c) {
  return {{"lhs", c.lhs}, {"rhs", c.rhs}, {"holds", c.holds}};
}

}  // namespace bcsgap
