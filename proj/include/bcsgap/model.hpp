#pragma once

// Problem instance: physical parameters, the interaction kernel U(x, xi),
// the (T, x) grid, and the integrand building blocks shared by every solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bcsgap/errors.hpp"
#include "bcsgap/interpolation.hpp"

namespace bcsgap {

/// Energies are in units where k_B = 1, so temperatures share the unit.
struct ModelParams {
  double epsilon = 0.01;
  double hbar_omega_D = 1.0;
  double U0 = 0.4;
  double U1 = 0.5;
  double U2 = 0.6;

  void validate() const {
    for (double v : {epsilon, hbar_omega_D, U0, U1, U2}) {
      if (!std::isfinite(v)) throw InfeasibleParameters("model parameters must be finite");
    }
    if (!(epsilon > 0.0 && epsilon < hbar_omega_D)) {
      throw InfeasibleParameters("model parameters: require 0 < epsilon < hbar_omega_D");
    }
    if (!(U0 > 0.0 && U0 < U1 && U1 < U2)) {
      throw InfeasibleParameters("model parameters: require 0 < U0 < U1 < U2");
    }
    // The weakest coupling limits the closed-form zero-temperature gap.
    if (!(hbar_omega_D > epsilon * std::exp(1.0 / U0))) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "infeasible parameters: hbar_omega_D (" << hbar_omega_D
          << ") must exceed epsilon*exp(1/U0) (" << epsilon * std::exp(1.0 / U0)
          << "); coupling U0 too weak for a positive zero-temperature gap";
      throw InfeasibleParameters(msg.str());
    }
  }

  double coupling(int k) const {
    switch (k) {
      case 0: return U0;
      case 1: return U1;
      case 2: return U2;
      default: throw DomainError("coupling index must be 0, 1 or 2");
    }
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// ---------------------------------------------------------------------------
// Integrand pieces

/// Above this Y = E/(2T) tanh(Y) is 1 and Y/cosh^2(Y) is 0 in double.
inline constexpr double kSaturationY = 350.0;

/// tanh(sqrt(xi^2 + u^2) / 2T), with the T = 0 value defined as 1.
inline double tanh_factor(double xi, double u, double T) {
  if (T == 0.0) return 1.0;
  const double y = std::hypot(xi, u) / (2.0 * T);
  if (y > kSaturationY) return 1.0;
  return std::tanh(y);
}

namespace detail {

/// sech(y) for y >= 0 without overflow.
inline double sech(double y) {
  const double e = std::exp(-y);
  return 2.0 * e / (1.0 + e * e);
}

/// 1 - tanh(y) for y >= 0, accurate for large y.
inline double tanh_complement(double y) {
  const double e2 = std::exp(-2.0 * y);
  return 2.0 * e2 / (1.0 + e2);
}

}  // namespace detail

/// g(T; xi, X) = (xi^2 tanh Y + X^2 Y / cosh^2 Y) / (xi^2 + X^2)^{3/2},
/// Y = sqrt(xi^2 + X^2) / 2T. g(0; xi, X) = xi^2 / (xi^2 + X^2)^{3/2}.
///
/// g(T; xi, c) is d/du of u tanh(E/2T)/E at u = c, so it controls the
/// Lipschitz constant of the gap operator.
inline double g_func(double T, double xi, double X) {
  const double e2 = xi * xi + X * X;
  const double e3 = e2 * std::sqrt(e2);
  if (T == 0.0) return xi * xi / e3;
  const double y = std::sqrt(e2) / (2.0 * T);
  if (y > kSaturationY) return xi * xi / e3;
  const double s = detail::sech(y);
  return (xi * xi * std::tanh(y) + X * X * y * s * s) / e3;
}

/// dg/dT = 2Y^2 / ((xi^2+X^2)^2 cosh^2 Y) * (2 X^2 Y tanh Y - (xi^2 + X^2)).
inline double dg_dT(double T, double xi, double X) {
  if (!(T > 0.0)) throw DomainError("dg_dT requires T > 0");
  const double e2 = xi * xi + X * X;
  const double y = std::sqrt(e2) / (2.0 * T);
  const double s = detail::sech(y);
  return 2.0 * y * y * s * s / (e2 * e2) * (2.0 * X * X * y * std::tanh(y) - e2);
}

/// g(Tb) - g(Ta) evaluated without cancellation against g(0). For small T
/// the increments are O(exp(-2Y)), far below the rounding of g itself, so
/// differencing g_func would return zero or noise.
inline double g_increment(double Ta, double Tb, double xi, double X) {
  if (Ta == Tb) return 0.0;
  if (Ta < 0.0 || Tb < 0.0) throw DomainError("g_increment requires T >= 0");
  if (Tb < Ta) return -g_increment(Tb, Ta, xi, X);
  const double e2 = xi * xi + X * X;
  const double e = std::sqrt(e2);
  const double e3 = e2 * e;
  const double yb = e / (2.0 * Tb);
  const double sb = detail::sech(yb);
  if (Ta == 0.0) {
    // g(Tb) - g(0) = (-xi^2 (1 - tanh Yb) + X^2 Yb sech^2 Yb) / E^3
    return (-xi * xi * detail::tanh_complement(yb) + X * X * yb * sb * sb) / e3;
  }
  const double ya = e / (2.0 * Ta);
  const double sa = detail::sech(ya);
  // d = Yb - Ya < 0, formed from the temperatures to avoid differencing Y.
  const double d = e * (Ta - Tb) / (2.0 * Ta * Tb);
  // dq = tanh Yb - tanh Ya
  double dq;
  if (std::abs(d) < 1.0) {
    dq = std::sinh(d) * sa * sb;
  } else {
    dq = detail::tanh_complement(ya) - detail::tanh_complement(yb);
  }
  // Yb sech^2 Yb - Ya sech^2 Ya = d sech^2 Yb + Ya (tanh^2 Ya - tanh^2 Yb)
  const double ds = d * sb * sb - ya * dq * (std::tanh(ya) + std::tanh(yb));
  return (xi * xi * dq + X * X * ds) / e3;
}

// ---------------------------------------------------------------------------
// Kernel

enum class KernelKind { constant, closed_form, grid };

/// The interaction U(x, xi) on [epsilon, hbar_omega_D]^2.
class Kernel {
 public:
  using Evaluator = std::function<double(double, double)>;

  static Kernel constant(double value) {
    Kernel k;
    k.kind_ = KernelKind::constant;
    std::ostringstream id;
    id.precision(17);
    id << "constant:" << value;
    k.id_ = id.str();
    k.eval_ = [value](double, double) { return value; };
    return k;
  }

  /// `evaluator` must be continuous on the square; only its bounds are
  /// checked (on a probe grid).
  static Kernel closed_form(std::string id, Evaluator evaluator) {
    Kernel k;
    k.kind_ = KernelKind::closed_form;
    k.id_ = std::move(id);
    k.eval_ = std::move(evaluator);
    return k;
  }

  /// U1 + (U2 - U1)(x - eps)(xi - eps)/(hbar_omega_D - eps)^2: equals U1 on
  /// the x = eps and xi = eps edges and U2 at the far corner.
  static Kernel interpolating(const ModelParams& p) {
    const double eps = p.epsilon, span = p.hbar_omega_D - p.epsilon;
    const double lo = p.U1, hi = p.U2;
    return closed_form("interpolating", [=](double x, double xi) {
      return lo + (hi - lo) * ((x - eps) / span) * ((xi - eps) / span);
    });
  }

  /// Bilinear interpolation of samples values[i * xi_nodes.size() + j] at
  /// (x_nodes[i], xi_nodes[j]).
  static Kernel grid(std::vector<double> x_nodes, std::vector<double> xi_nodes,
                     std::vector<double> values, std::string id = "grid") {
    if (x_nodes.size() < 2 || xi_nodes.size() < 2) {
      throw ParseError("grid kernel: need at least 2 nodes per axis");
    }
    if (values.size() != x_nodes.size() * xi_nodes.size()) {
      throw ParseError("grid kernel: value count does not match lattice");
    }
    auto strictly_increasing = [](const std::vector<double>& v) {
      return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
    };
    if (!strictly_increasing(x_nodes) || !strictly_increasing(xi_nodes)) {
      throw ParseError("grid kernel: lattice nodes must be strictly increasing");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw ParseError("grid kernel: non-finite sample");
    }
    auto data = std::make_shared<GridData>(GridData{std::move(x_nodes), std::move(xi_nodes), std::move(values)});
    Kernel k;
    k.kind_ = KernelKind::grid;
    k.id_ = std::move(id);
    k.grid_ = data;
    k.eval_ = [data](double x, double xi) { return data->bilinear(x, xi); };
    return k;
  }

  double operator()(double x, double xi) const { return eval_(x, xi); }
  KernelKind kind() const { return kind_; }
  const std::string& id() const { return id_; }

  /// Sample values of a grid kernel; empty otherwise.
  std::span<const double> samples() const {
    return grid_ ? std::span<const double>(grid_->values) : std::span<const double>();
  }
  std::span<const double> sample_x() const {
    return grid_ ? std::span<const double>(grid_->x) : std::span<const double>();
  }
  std::span<const double> sample_xi() const {
    return grid_ ? std::span<const double>(grid_->xi) : std::span<const double>();
  }

 private:
  struct GridData {
    std::vector<double> x, xi, values;

    double bilinear(double x_, double xi_) const {
      const auto sx = linear_stencil(x, x_);
      const auto sy = linear_stencil(xi, xi_);
      const std::size_t n = xi.size();
      const double v00 = values[sx.left * n + sy.left];
      const double v01 = values[sx.left * n + sy.left + 1];
      const double v10 = values[(sx.left + 1) * n + sy.left];
      const double v11 = values[(sx.left + 1) * n + sy.left + 1];
      return (1.0 - sx.weight) * ((1.0 - sy.weight) * v00 + sy.weight * v01) +
             sx.weight * ((1.0 - sy.weight) * v10 + sy.weight * v11);
    }
  };

  Kernel() = default;

  KernelKind kind_ = KernelKind::constant;
  std::string id_;
  Evaluator eval_;
  std::shared_ptr<const GridData> grid_;
};

struct KernelBoundsReport {
  bool passed = false;
  double min_value = 0.0;
  double max_value = 0.0;
  double min_x = 0.0, min_xi = 0.0;
  double max_x = 0.0, max_xi = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  int probes = 0;
  /// Signed distance to the nearest bound; negative when violated.
  double margin() const { return std::min(min_value - lower_bound, upper_bound - max_value); }
};

/// Relative slack on the kernel bounds, a few ulp so that closed forms that
/// hit U1 or U2 exactly after rounding are accepted.
inline constexpr double kKernelBoundSlack = 1e-14;

/// Probes U on a uniform probes x probes grid over [eps, hbar_omega_D]^2
/// (plus every sample of a grid kernel lying in the square) and compares
/// against [U1, U2]. Continuity cannot be certified this way.
inline KernelBoundsReport check_kernel_bounds(const Kernel& kernel, const ModelParams& p,
                                              int probes = 101) {
  if (probes < 2) throw DomainError("kernel bounds: need at least 2 probes per axis");
  KernelBoundsReport r;
  r.lower_bound = p.U1;
  r.upper_bound = p.U2;
  r.probes = probes;
  r.min_value = std::numeric_limits<double>::infinity();
  r.max_value = -std::numeric_limits<double>::infinity();
  auto visit = [&](double x, double xi) {
    const double v = kernel(x, xi);
    if (!std::isfinite(v)) {
      r.min_value = r.max_value = v;
      return;
    }
    if (v < r.min_value) {
      r.min_value = v;
      r.min_x = x;
      r.min_xi = xi;
    }
    if (v > r.max_value) {
      r.max_value = v;
      r.max_x = x;
      r.max_xi = xi;
    }
  };
  const double h = (p.hbar_omega_D - p.epsilon) / (probes - 1);
  for (int i = 0; i < probes; ++i) {
    const double x = (i + 1 == probes) ? p.hbar_omega_D : p.epsilon + i * h;
    for (int j = 0; j < probes; ++j) {
      const double xi = (j + 1 == probes) ? p.hbar_omega_D : p.epsilon + j * h;
      visit(x, xi);
    }
  }
  if (kernel.kind() == KernelKind::grid) {
    const auto xs = kernel.sample_x();
    const auto ys = kernel.sample_xi();
    for (double x : xs) {
      if (x < p.epsilon || x > p.hbar_omega_D) continue;
      for (double xi : ys) {
        if (xi < p.epsilon || xi > p.hbar_omega_D) continue;
        visit(x, xi);
      }
    }
  }
  const double slack = kKernelBoundSlack * p.U2;
  r.passed = std::isfinite(r.min_value) && std::isfinite(r.max_value) &&
             r.min_value >= p.U1 - slack && r.max_value <= p.U2 + slack;
  return r;
}

inline std::string describe(const KernelBoundsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "kernel bound check U1 <= U(x,xi) <= U2 on " << r.probes << "x" << r.probes
      << " probe grid: min " << r.min_value << " at (" << r.min_x << ", " << r.min_xi << "), max "
      << r.max_value << " at (" << r.max_x << ", " << r.max_xi << "), bounds [" << r.lower_bound
      << ", " << r.upper_bound << "] -> " << (r.passed ? "pass" : "FAIL");
  return out.str();
}

/// Throws KernelBoundsError when the bound check fails.
inline void validate_kernel(const Kernel& kernel, const ModelParams& p, int probes = 101) {
  const auto r = check_kernel_bounds(kernel, p, probes);
  if (!r.passed) throw KernelBoundsError(describe(r));
}

namespace detail {

inline double parse_finite(const std::string& field, const std::string& where) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || !end || *end != '\0' || field.empty()) {
    throw ParseError(where + ": not a number: '" + field + "'");
  }
  if (!std::isfinite(v)) throw ParseError(where + ": non-finite value '" + field + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

}  // namespace detail

/// Reads a grid kernel from CSV with header `x,xi,U`, rows ordered x-major
/// over a full tensor lattice. Lines starting with '#' are ignored.
inline Kernel read_kernel_csv(std::istream& in, const std::string& id = "csv") {
  std::string line;
  bool have_header = false;
  std::vector<double> xs, xis, us;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip(line);
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      if (line != "x,xi,U") throw ParseError("kernel csv: expected header 'x,xi,U', got '" + line + "'");
      have_header = true;
      continue;
    }
    const auto fields = detail::split_csv(line);
    const std::string where = "kernel csv line " + std::to_string(line_no);
    if (fields.size() != 3) throw ParseError(where + ": expected 3 fields");
    xs.push_back(detail::parse_finite(detail::strip(fields[0]), where));
    xis.push_back(detail::parse_finite(detail::strip(fields[1]), where));
    us.push_back(detail::parse_finite(detail::strip(fields[2]), where));
  }
  if (!have_header) throw ParseError("kernel csv: missing header");
  if (xs.empty()) throw ParseError("kernel csv: no data rows");
  std::size_t n_xi = 0;
  while (n_xi < xs.size() && xs[n_xi] == xs[0]) ++n_xi;
  if (xs.size() % n_xi != 0) throw ParseError("kernel csv: rows do not form a lattice");
  const std::size_t n_x = xs.size() / n_xi;
  std::vector<double> x_nodes(n_x), xi_nodes(xis.begin(), xis.begin() + static_cast<std::ptrdiff_t>(n_xi));
  for (std::size_t i = 0; i < n_x; ++i) {
    x_nodes[i] = xs[i * n_xi];
    for (std::size_t j = 0; j < n_xi; ++j) {
      const std::size_t r = i * n_xi + j;
      if (xs[r] != x_nodes[i] || xis[r] != xi_nodes[j]) {
        std::ostringstream msg;
        msg << "kernel csv: row " << r + 1 << " is not on the lattice (expected x-major order)";
        throw ParseError(msg.str());
      }
    }
  }
  return Kernel::grid(std::move(x_nodes), std::move(xi_nodes), std::move(us), id);
}

inline Kernel load_kernel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open kernel csv '" + path + "'");
  return read_kernel_csv(in, "csv:" + path);
}

/// A grid kernel must cover the whole square; bilinear evaluation outside
/// the lattice would silently clamp.
inline void require_kernel_covers(const Kernel& kernel, const ModelParams& p) {
  if (kernel.kind() != KernelKind::grid) return;
  const auto xs = kernel.sample_x();
  const auto ys = kernel.sample_xi();
  if (xs.front() > p.epsilon || xs.back() < p.hbar_omega_D || ys.front() > p.epsilon ||
      ys.back() < p.hbar_omega_D) {
    throw ParseError("grid kernel lattice does not cover [epsilon, hbar_omega_D]^2");
  }
}

// ---------------------------------------------------------------------------
// Grid

/// Tensor grid over [0, T_max] x [epsilon, hbar_omega_D].
struct Grid2D {
  std::vector<double> T_nodes;
  std::vector<double> x_nodes;

  std::size_t nT() const { return T_nodes.size(); }
  std::size_t nx() const { return x_nodes.size(); }
  double T_max() const { return T_nodes.back(); }

  static Grid2D uniform(double T_max, std::size_t nT, std::size_t nx, const ModelParams& p) {
    if (nT < 1) throw DomainError("grid: nT must be >= 1");
    if (nx < 2) throw DomainError("grid: nx must be >= 2");
    if (!(T_max >= 0.0) || (nT > 1 && !(T_max > 0.0))) throw DomainError("grid: T_max must be positive");
    Grid2D g;
    g.T_nodes.resize(nT);
    for (std::size_t i = 0; i < nT; ++i) {
      g.T_nodes[i] = (nT == 1) ? 0.0 : (i + 1 == nT ? T_max : T_max * static_cast<double>(i) / (nT - 1));
    }
    g.x_nodes.resize(nx);
    const double h = (p.hbar_omega_D - p.epsilon) / static_cast<double>(nx - 1);
    for (std::size_t j = 0; j < nx; ++j) {
      g.x_nodes[j] = (j + 1 == nx) ? p.hbar_omega_D : p.epsilon + h * static_cast<double>(j);
    }
    return g;
  }

  /// 2x refinement in both axes; every node of *this is kept.
  Grid2D refined() const {
    Grid2D g;
    auto halve = [](const std::vector<double>& v) {
      std::vector<double> out;
      out.reserve(2 * v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(v[i]);
        if (i + 1 < v.size()) out.push_back(0.5 * (v[i] + v[i + 1]));
      }
      return out;
    };
    g.T_nodes = halve(T_nodes);
    g.x_nodes = halve(x_nodes);
    return g;
  }

  void validate(const ModelParams& p) const {
    if (T_nodes.empty() || x_nodes.size() < 2) throw DomainError("grid: empty axis");
    if (T_nodes.front() < 0.0) throw DomainError("grid: temperatures must be >= 0");
    auto strictly_increasing = [](const std::vector<double>& v) {
      return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
    };
    if (!strictly_increasing(T_nodes) || !strictly_increasing(x_nodes)) {
      throw DomainError("grid: nodes must be strictly increasing");
    }
    if (x_nodes.front() != p.epsilon || x_nodes.back() != p.hbar_omega_D) {
      throw DomainError("grid: x nodes must start at epsilon and end at hbar_omega_D");
    }
  }
};

}  // namespace bcsgap
