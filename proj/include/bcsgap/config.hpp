#pragma once

// Run configuration: a flat `key = value` text format, parsed strictly.
//
//   # comment
//   epsilon = 0.01
//   kernel = interpolating
//
// Unknown or repeated keys, non-finite numbers and out-of-range values are
// rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "bcsgap/errors.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/validation.hpp"

namespace bcsgap {

enum class KernelChoice { constant, interpolating, csv };

struct RunConfig {
  ModelParams params{};
  KernelChoice kernel = KernelChoice::interpolating;
  double kernel_value = std::nan("");  // constant kernel; defaults to U1
  std::string kernel_csv;
  std::size_t nT = 33;
  std::size_t nx = 65;
  TRangePolicy t_range = TRangePolicy::automatic;
  double T_max = 0.0;
  QuadratureRule rule{};
  double tol = 1e-10;
  int max_iter = 200;
  int samples = 256;
  std::uint64_t seed = 42;
  int pairs = 50;
  int probes = 100;
  int ordering_points = 512;
  int ladder_levels = 3;
  int kernel_probes = 101;
  std::string out_dir = ".";

  double constant_value() const { return std::isnan(kernel_value) ? params.U1 : kernel_value; }

  /// Every effective setting, one `key=value` per line in fixed order.
  /// out_dir is excluded: it does not affect results.
  std::string canonical() const {
    std::ostringstream o;
    o << "epsilon=" << format_double(params.epsilon) << "\n"
      << "hbar_omega_D=" << format_double(params.hbar_omega_D) << "\n"
      << "U0=" << format_double(params.U0) << "\nU1=" << format_double(params.U1)
      << "\nU2=" << format_double(params.U2) << "\n";
    switch (kernel) {
      case KernelChoice::constant: o << "kernel=constant\nkernel_value=" << format_double(constant_value()) << "\n"; break;
      case KernelChoice::interpolating: o << "kernel=interpolating\n"; break;
      case KernelChoice::csv: o << "kernel=csv\nkernel_csv=" << kernel_csv << "\n"; break;
    }
    o << "nT=" << nT << "\nnx=" << nx << "\n";
    if (t_range == TRangePolicy::automatic) o << "T_range=auto\n";
    else o << "T_range=explicit\nT_max=" << format_double(T_max) << "\n";
    o << "panels=" << rule.panels << "\norder=" << rule.nodes_per_panel << "\ntol=" << format_double(tol)
      << "\nmax_iter=" << max_iter << "\nsamples=" << samples << "\nseed=" << seed << "\npairs=" << pairs
      << "\nprobes=" << probes << "\nordering_points=" << ordering_points << "\nladder_levels=" << ladder_levels
      << "\nkernel_probes=" << kernel_probes << "\n";
    return o.str();
  }

  std::string hash() const { return hex64(fnv1a64(canonical())); }

  SuiteConfig suite() const {
    SuiteConfig s;
    s.rule = rule;
    s.nT = nT;
    s.nx = nx;
    s.t_range = t_range;
    s.T_max = T_max;
    s.tol = tol;
    s.max_iter = max_iter;
    s.seed = seed;
    s.pairs = pairs;
    s.probes = probes;
    s.ordering_points = ordering_points;
    s.ladder_levels = ladder_levels;
    s.kernel_probes = kernel_probes;
    s.config_hash = hash();
    return s;
  }

  /// Range checks that do not need the model (model invariants are checked
  /// separately by ModelParams::validate).
  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw ParseError(std::string("config: ") + what);
    };
    need(nT >= 1 && nT <= 100000, "nT must be in [1, 100000]");
    need(nx >= 2 && nx <= 100000, "nx must be in [2, 100000]");
    need(rule.panels >= 1 && rule.panels <= 100000, "panels must be in [1, 100000]");
    need(rule.nodes_per_panel >= 2 && rule.nodes_per_panel <= 64, "order must be in [2, 64]");
    need(tol > 0.0 && std::isfinite(tol), "tol must be positive");
    need(max_iter >= 1, "max_iter must be >= 1");
    need(samples >= 8, "samples must be >= 8");
    need(pairs >= 1, "pairs must be >= 1");
    need(probes >= 1, "probes must be >= 1");
    need(ordering_points >= 2, "ordering_points must be >= 2");
    need(ladder_levels >= 1 && ladder_levels <= 6, "ladder_levels must be in [1, 6]");
    need(kernel_probes >= 2, "kernel_probes must be >= 2");
    need(t_range == TRangePolicy::automatic || (T_max > 0.0 && std::isfinite(T_max)),
         "T_range = explicit requires T_max > 0");
    need(kernel != KernelChoice::csv || !kernel_csv.empty(), "kernel = csv requires kernel_csv");
    need(std::isnan(kernel_value) || std::isfinite(kernel_value), "kernel_value must be finite");
  }
};

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
  const double d = parse_finite(v, "config key '" + key + "'");
  return d;
}

inline long long config_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': not an integer: '" + v + "'");
  }
  if (pos != v.size()) throw ParseError("config key '" + key + "': not an integer: '" + v + "'");
  return out;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::set<std::string> seen;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto dbl = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::config_double(k, v); };
  };
  auto count = [](auto& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      const long long n = detail::config_int(k, v);
      if (n < 0) throw ParseError("config key '" + k + "': must be non-negative");
      field = static_cast<std::remove_reference_t<decltype(field)>>(n);
    };
  };
  const std::map<std::string, Setter> setters = {
      {"epsilon", dbl(c.params.epsilon)},
      {"hbar_omega_D", dbl(c.params.hbar_omega_D)},
      {"U0", dbl(c.params.U0)},
      {"U1", dbl(c.params.U1)},
      {"U2", dbl(c.params.U2)},
      {"kernel",
       [&](const std::string& k, const std::string& v) {
         if (v == "constant") c.kernel = KernelChoice::constant;
         else if (v == "interpolating") c.kernel = KernelChoice::interpolating;
         else if (v == "csv") c.kernel = KernelChoice::csv;
         else throw ParseError("config key '" + k + "': expected constant | interpolating | csv");
       }},
      {"kernel_value", dbl(c.kernel_value)},
      {"kernel_csv", [&](const std::string&, const std::string& v) { c.kernel_csv = v; }},
      {"nT", count(c.nT)},
      {"nx", count(c.nx)},
      {"T_range",
       [&](const std::string& k, const std::string& v) {
         if (v == "auto") c.t_range = TRangePolicy::automatic;
         else if (v == "explicit") c.t_range = TRangePolicy::explicit_max;
         else throw ParseError("config key '" + k + "': expected auto | explicit");
       }},
      {"T_max", dbl(c.T_max)},
      {"panels", count(c.rule.panels)},
      {"order", count(c.rule.nodes_per_panel)},
      {"tol", dbl(c.tol)},
      {"max_iter", count(c.max_iter)},
      {"samples", count(c.samples)},
      {"seed", count(c.seed)},
      {"pairs", count(c.pairs)},
      {"probes", count(c.probes)},
      {"ordering_points", count(c.ordering_points)},
      {"ladder_levels", count(c.ladder_levels)},
      {"kernel_probes", count(c.kernel_probes)},
      {"out_dir", [&](const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::strip(line.substr(0, eq));
    const std::string value = detail::strip(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    if (value.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty value for '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_config(in);
}

inline Kernel make_kernel(const RunConfig& c) {
  switch (c.kernel) {
    case KernelChoice::constant: return Kernel::constant(c.constant_value());
    case KernelChoice::interpolating: return Kernel::interpolating(c.params);
    case KernelChoice::csv: {
      Kernel k = load_kernel_csv(c.kernel_csv);
      require_kernel_covers(k, c.params);
      return k;
    }
  }
  throw DomainError("unknown kernel kind");
}

}  // namespace bcsgap
