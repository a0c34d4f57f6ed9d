// bcsgap: command-line front end for the gap-equation solver.
//
//   bcsgap simplified --config run.cfg --out DIR [--samples N]
//   bcsgap solve      --config run.cfg --out DIR
//   bcsgap verify     --config run.cfg --out DIR [--json-only]
//   bcsgap kernel-check --config run.cfg
//
// Exit status: 0 success, 1 failed check, 2 invalid input, 3 non-convergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bcsgap/bcsgap.hpp"

namespace fs = std::filesystem;
using namespace bcsgap;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNonConvergence = 3;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  bool json_only = false;
};

RunConfig load(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.samples) c.samples = *o.samples;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  c.validate();
  c.params.validate();
  return c;
}

std::ofstream open_output(const RunConfig& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  const fs::path p = fs::path(c.out_dir) / name;
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const RunConfig& c, const std::string& name, const nlohmann::ordered_json& j) {
  auto out = open_output(c, name);
  out << j.dump(2) << '\n';
}

int cmd_simplified(const Options& o) {
  const RunConfig c = load(o);
  const std::string hash = c.hash();
  std::cout << "config_hash " << hash << "\n";
  std::cout << std::left << std::setw(4) << "k" << std::setw(24) << "U" << std::setw(24) << "tau" << std::setw(24)
            << "delta(0) closed form" << "delta(0) solved\n";
  for (int k = 0; k < 3; ++k) {
    const SimplifiedGap gap(c.params.coupling(k), c.params, c.rule);
    const GapCurve curve = gap.curve(c.samples);
    const std::string stem = "curve_U" + std::to_string(k);
    {
      auto out = open_output(c, stem + ".csv");
      write_curve_csv(out, curve, hash);
    }
    write_json(c, stem + ".json", curve_metadata(curve, c.params, c.rule, hash));
    std::cout << std::setw(4) << k << std::setw(24) << format_double(gap.coupling()) << std::setw(24)
              << format_double(gap.tau()) << std::setw(24) << format_double(gap.delta_at_zero_closed_form())
              << format_double(gap.delta(0.0)) << "\n";
  }
  return 0;
}

nlohmann::ordered_json solve_report(const RunConfig& c, const Kernel& kernel, const RunWindow& win,
                                    const Grid2D& grid) {
  nlohmann::ordered_json j;
  j["params"] = params_to_json(c.params);
  j["kernel_id"] = kernel.id();
  j["grid"] = {{"nT", grid.nT()}, {"nx", grid.nx()}, {"T_max", grid.T_max()}};
  j["T1"] = win.window.T1;
  j["T1_star"] = win.window.T1_star;
  j["T1_star_floor"] = win.window.T1_star_floor;
  j["window_proven"] = win.window.proven;
  j["smallness"] = smallness_to_json(win.window.at_T1_star);
  j["smallness_T1"] = smallness_to_json(win.window.at_T1);
  j["flags"] = nlohmann::ordered_json::array();
  if (win.outside) j["flags"].push_back(kOutsideWindowFlag);
  j["config_hash"] = c.hash();
  return j;
}

int cmd_solve(const Options& o) {
  const RunConfig c = load(o);
  const Kernel kernel = make_kernel(c);
  validate_kernel(kernel, c.params, c.kernel_probes);
  const GapFamily gaps(c.params, c.rule);
  const RunWindow win = resolve_window(c.params, gaps, c.t_range, c.T_max);
  if (win.outside) {
    std::cerr << "warning: T range [0, " << format_double(win.T_max) << "] is " << kOutsideWindowFlag
              << (win.window.proven ? "" : " (no proven window exists for these parameters)")
              << "; convergence is not guaranteed\n";
  }
  const Grid2D grid = Grid2D::uniform(win.T_max, c.nT, c.nx, c.params);
  auto report = solve_report(c, kernel, win, grid);
  const GapOperator op(kernel, grid, c.params, c.rule);
  const Envelopes env = row_envelopes(grid, gaps);
  const ContractionConstant k = contraction_constant(gaps, win.T_max);
  report["k_estimate"] = k.k;
  try {
    const SolveResult r = solve_gap(op, env, {c.tol, c.max_iter, InitialIterate::upper});
    report["converged"] = true;
    report["iterations"] = r.iterations;
    report["residuals"] = r.residuals;
    {
      auto out = open_output(c, "surface.csv");
      write_surface_csv(out, r.surface, c.hash());
    }
    write_json(c, "report.json", report);
    std::cout << "converged in " << r.iterations << " iterations, residual " << r.residuals.back()
              << ", k = " << k.k << ", T_max = " << win.T_max << "\n";
    return 0;
  } catch (const SolveFailure& e) {
    report["converged"] = false;
    report["iterations"] = e.residuals().size();
    report["residuals"] = e.residuals();
    report["error"] = e.what();
    {
      auto out = open_output(c, "surface.csv");
      write_surface_csv(out, e.last_iterate(), c.hash());
    }
    write_json(c, "report.json", report);
    std::cerr << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  }
}

int cmd_verify(const Options& o) {
  const RunConfig c = load(o);
  const Kernel kernel = make_kernel(c);
  const VerificationReport rep = run_full_suite(kernel, c.params, c.suite());
  const auto j = to_json(rep);
  write_json(c, "report.json", j);
  if (o.json_only) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "config_hash " << rep.config_hash << "\n";
    for (const auto& f : rep.flags) std::cout << "flag: " << f << "\n";
    for (const auto& ch : rep.checks) {
      std::cout << std::left << std::setw(9) << (std::string("[") + to_string(ch.status) + "]") << std::setw(26)
                << ch.name << ch.detail << "\n";
    }
    std::cout << (rep.all_passed() ? "all checks passed" : "verification FAILED") << "\n";
  }
  return rep.all_passed() ? 0 : kExitFailedCheck;
}

int cmd_kernel_check(const Options& o) {
  const RunConfig c = load(o);
  const Kernel kernel = make_kernel(c);
  const auto r = check_kernel_bounds(kernel, c.params, c.kernel_probes);
  std::cout << describe(r) << "\n";
  return r.passed ? 0 : kExitFailedCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solver and verifier for the BCS gap equation as a nonlinear integral equation"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run configuration (key = value)");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--seed", opt.seed, "Override the RNG seed");
  };
  auto* simplified = app.add_subcommand("simplified", "Gap curves and transition temperatures for U0, U1, U2");
  add_common(simplified);
  simplified->add_option("--samples", opt.samples, "Samples per curve (>= 8)");
  auto* solve = app.add_subcommand("solve", "Solve the gap equation on the (T, x) grid by Picard iteration");
  add_common(solve);
  auto* verify = app.add_subcommand("verify", "Run the full verification suite");
  add_common(verify);
  verify->add_flag("--json-only", opt.json_only, "Print only the JSON report");
  auto* kernel_check = app.add_subcommand("kernel-check", "Check the kernel bounds U1 <= U <= U2");
  add_common(kernel_check);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simplified->parsed()) return cmd_simplified(opt);
    if (solve->parsed()) return cmd_solve(opt);
    if (verify->parsed()) return cmd_verify(opt);
    if (kernel_check->parsed()) return cmd_kernel_check(opt);
  } catch (const KernelBoundsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailedCheck;
  } catch (const InfeasibleParameters& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
