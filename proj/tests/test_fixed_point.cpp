#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include "bcsgap/fixed_point.hpp"
#include "bcsgap/validation.hpp"
#include "oracles.hpp"

using namespace bcsgap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const ModelParams kP{};
// Strong coupling: Delta0(0) is large against hbar_omega_D, so the
// smallness condition can be met and a proven window exists.
const ModelParams kStrong{0.01, 1.0, 2.0, 2.005, 2.01};

// 30-digit reference values for kP.
constexpr double kRhs = 83.9344945371597716215;
constexpr double kT1Necessary = 4.61149463245872614446e-4;
constexpr double kT1StarFloor = 0.197994009478348578814;
constexpr double kK = 0.943525187713719350831;

const GapFamily& family() {
  static const GapFamily f(kP);
  return f;
}

const GapFamily& strong_family() {
  static const GapFamily f(kStrong);
  return f;
}

double qtol() { return inequality_slack(kP, {}); }

/// T*(T) from the oracle gap solvers (adaptive Simpson + bisection).
double oracle_mapped(const ModelParams& p, double T) {
  const double d0 = oracle::delta(p.U0, T, p.epsilon, p.hbar_omega_D,
                                  1.01 * delta_at_zero_closed_form(p.U0, p));
  const double tau2 = oracle::tau(p.U2, p.epsilon, p.hbar_omega_D);
  return oracle::temperature_for(p.U2, d0, p.epsilon, p.hbar_omega_D, tau2);
}

}  // namespace

TEST_CASE("apply_A reproduces the constant-coupling gaps", "[fixed_point]") {
  const auto& f = family();
  const Grid2D grid = Grid2D::uniform(0.9 * f.middle.tau(), 9, 17, kP);
  const Envelopes env = row_envelopes(grid, f);
  SECTION("U1 kernel fixes D1") {
    const GapSurface u = envelope_surface(grid, env.lower);
    CHECK(sup_distance(apply_A(u, Kernel::constant(kP.U1), kP), u) < qtol());
  }
  SECTION("U2 kernel fixes D2") {
    const GapSurface u = envelope_surface(grid, env.upper);
    CHECK(sup_distance(apply_A(u, Kernel::constant(kP.U2), kP), u) < qtol());
  }
}

TEST_CASE("A maps V into V", "[fixed_point][property]") {
  const auto& f = family();
  const Grid2D grid = Grid2D::uniform(0.9 * f.lower.tau(), 9, 17, kP);
  const Envelopes env = row_envelopes(grid, f);
  const GapOperator op(Kernel::interpolating(kP), grid, kP);
  std::mt19937_64 rng(3);
  for (int s = 0; s < 10; ++s) {
    const GapSurface u = random_member_of_V(grid, env, rng);
    CHECK(check_bracketing(u, env, 0.0).passed());
    const GapSurface au = op.apply(u);
    CHECK(check_bracketing(au, env, qtol()).passed());
  }
}

TEST_CASE("operator rows are independent and schedule-free", "[fixed_point][property]") {
  const auto& f = family();
  const Grid2D grid = Grid2D::uniform(0.05, 7, 9, kP);
  const GapOperator op(Kernel::interpolating(kP), grid, kP);
  const Envelopes env = row_envelopes(grid, f);
  std::mt19937_64 rng(5);
  const GapSurface u = random_member_of_V(grid, env, rng);
  const GapSurface all = op.apply(u);
  for (std::size_t i = grid.nT(); i-- > 0;) {
    std::vector<double> out(grid.nx());
    op.apply_row(grid.T_nodes[i], u.row(i), out);
    for (std::size_t j = 0; j < grid.nx(); ++j) CHECK(out[j] == all.at(i, j));
  }
  CHECK_THROWS_AS(op.apply(GapSurface(Grid2D::uniform(0.05, 3, 9, kP), std::vector<double>(27, 0.1))), DomainError);
}

TEST_CASE("constant kernel solves to D1 for every x", "[fixed_point]") {
  const auto& f = family();
  for (double T_max : {contraction_window(kP, f).T1, f.lower.tau()}) {
    const Grid2D grid = Grid2D::uniform(T_max, 17, 33, kP);
    const auto r = solve_gap(Kernel::constant(kP.U1), grid, kP, {}, {1e-12, 500});
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.nT(); ++i) {
      const double d1 = f.middle.delta(grid.T_nodes[i]);
      for (std::size_t j = 0; j < grid.nx(); ++j) worst = std::max(worst, std::abs(r.surface.at(i, j) - d1));
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("interpolating kernel solve", "[fixed_point]") {
  const auto& f = family();
  const ContractionWindow w = contraction_window(kP, f);
  const Grid2D grid = Grid2D::uniform(w.T1, 33, 65, kP);
  const Kernel kernel = Kernel::interpolating(kP);
  const GapOperator op(kernel, grid, kP);
  const Envelopes env = row_envelopes(grid, f);
  const auto r = solve_gap(op, env, {1e-10, 200});
  REQUIRE(r.iterations <= 200);
  CHECK(r.residuals.back() < 1e-10);
  CHECK(r.surface.iterations == r.iterations);
  CHECK(r.surface.kernel_id == "interpolating");
  CHECK(fixed_point_residual(r.surface, kernel, kP, {}) < 1e-10);
  CHECK(fixed_point_residual(r.surface, kernel, kP, {128, 8}) < 1e-9);
  CHECK(check_bracketing(r.surface, env, qtol()).margin > 0.0);

  SECTION("tighter tolerance agrees") {
    const auto tight = solve_gap(op, env, {1e-11, 400});
    CHECK(sup_distance(tight.surface, r.surface) < 1e-10 / (1.0 - kK) + 1e-11);
  }
  SECTION("starting from D1 reaches the same surface") {
    const auto low = solve_gap(op, env, {1e-10, 200, InitialIterate::lower});
    CHECK(sup_distance(low.surface, r.surface) < 2e-10 / (1.0 - kK));
  }
  SECTION("residuals decay at the contraction rate") {
    const double k = contraction_constant(f, w.T1).k;
    for (std::size_t i = 1; i + 1 < r.residuals.size(); ++i) {
      CHECK(r.residuals[i + 1] / r.residuals[i] <= k + 0.05);
    }
  }
  SECTION("iteration from D2 decreases monotonically") {
    // A is order preserving on V, so the iterates from the upper envelope
    // decrease pointwise; the converged surface sits below D2.
    for (std::size_t i = 0; i < grid.nT(); ++i) {
      for (std::size_t j = 0; j < grid.nx(); ++j) CHECK(r.surface.at(i, j) <= env.upper[i] + qtol());
    }
  }
}

TEST_CASE("solutions do not depend on the thread count", "[fixed_point][property]") {
  const auto& f = family();
  const Grid2D grid = Grid2D::uniform(0.05, 9, 17, kP);
  const Kernel kernel = Kernel::interpolating(kP);
  auto run = [&](const char* threads) {
    ::setenv("BCSGAP_THREADS", threads, 1);
    const GapOperator op(kernel, grid, kP);
    auto s = solve_gap(op, row_envelopes(grid, f), {1e-10, 200}).surface;
    ::unsetenv("BCSGAP_THREADS");
    return s;
  };
  const auto one = run("1");
  const auto four = run("4");
  CHECK(one.values == four.values);
  ::setenv("BCSGAP_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  ::setenv("BCSGAP_THREADS", "abc", 1);
  CHECK(thread_count() >= 1);
  ::unsetenv("BCSGAP_THREADS");
}

TEST_CASE("non-convergence carries the residual history", "[fixed_point]") {
  const Grid2D grid = Grid2D::uniform(0.05, 5, 9, kP);
  try {
    solve_gap(Kernel::interpolating(kP), grid, kP, {}, {1e-14, 3});
    FAIL("expected SolveFailure");
  } catch (const SolveFailure& e) {
    CHECK(e.residuals().size() == 3);
    CHECK(e.last_iterate().values.size() == 45);
    CHECK(std::string(e.what()).find("did not converge") != std::string::npos);
  }
  CHECK_THROWS_AS(solve_gap(Kernel::interpolating(kP), grid, kP, {}, {0.0, 3}), DomainError);
  CHECK_THROWS_AS(solve_gap(Kernel::interpolating(kP), grid, kP, {}, {1e-10, 0}), DomainError);
}

TEST_CASE("smallness condition", "[fixed_point]") {
  const double d0 = delta_at_zero_closed_form(kP.U0, kP);
  const auto c = check_smallness(kP, 1.0);
  CHECK_THAT(c.rhs, WithinRel(kRhs, 1e-14));
  CHECK_THAT(c.rhs, WithinAbs(83.93, 0.01));
  CHECK(check_smallness(kP, 0.0).holds);
  CHECK(std::isinf(check_smallness(kP, 0.0).lhs));
  CHECK(check_smallness(kP, 1e-300).holds);
  const auto at_y1 = check_smallness(kP, d0 / 4.0);
  CHECK_FALSE(at_y1.holds);
  CHECK_THAT(at_y1.lhs, WithinRel(std::tanh(1.0), 1e-15));
  CHECK_THROWS_AS(check_smallness(kP, -1.0), DomainError);
}

TEST_CASE("largest T satisfying the condition itself", "[fixed_point]") {
  const double T = necessary_T1(kP);
  CHECK_THAT(T, WithinRel(kT1Necessary, 1e-13));
  CHECK(check_smallness(kP, T).holds);
  CHECK_FALSE(check_smallness(kP, T * (1.0 + 1e-12)).holds);
}

TEST_CASE("no proven window on the weak-coupling instance", "[fixed_point]") {
  const auto& f = family();
  const auto w = contraction_window(kP, f);
  CHECK_FALSE(w.proven);
  CHECK_THAT(w.T1_star_floor, WithinRel(kT1StarFloor, 1e-11));
  CHECK_FALSE(w.at_floor.holds);
  CHECK(w.at_floor.lhs < 0.04);
  CHECK_THAT(w.T1, WithinRel(kT1Necessary, 1e-13));
  CHECK(w.at_T1.holds);
  CHECK_FALSE(w.at_T1_star.holds);
  CHECK_THAT(mapped_temperature(f, 0.0), WithinRel(oracle_mapped(kP, 0.0), 1e-10));
  try {
    max_admissible_T1(kP, f);
    FAIL("expected InfeasibleParameters");
  } catch (const InfeasibleParameters& e) {
    CHECK(std::string(e.what()).find("infeasible parameters") != std::string::npos);
  }
}

TEST_CASE("proven window on the strong-coupling instance", "[fixed_point]") {
  const auto& f = strong_family();
  const auto w = max_admissible_T1(kStrong, f);
  REQUIRE(w.proven);
  CHECK(w.T1 > 0.0);
  CHECK(w.T1 < f.lower.tau());
  CHECK(w.at_T1_star.holds);
  CHECK(w.at_T1.holds);
  CHECK(w.T1 < w.T1_star);
  CHECK(w.T1_star_floor <= w.T1_star);
  // Oracle: the mapped temperature from independent gap solves, and
  // maximality of T1.
  CHECK_THAT(w.T1_star, WithinRel(oracle_mapped(kStrong, w.T1), 1e-9));
  CHECK(check_smallness(kStrong, oracle_mapped(kStrong, w.T1)).holds);
  CHECK_FALSE(check_smallness(kStrong, oracle_mapped(kStrong, w.T1 * (1.0 + 1e-6))).holds);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const double T = w.T1 * (1.0 - uniform01(rng)) + 1e-300;
    CHECK(T < mapped_temperature(f, T));
  }
  const auto k = contraction_constant(f, w.T1);
  CHECK(k.k > 0.0);
  CHECK(k.k < 1.0);
  CHECK_FALSE(k.violates_theory());
}

TEST_CASE("contraction constant", "[fixed_point]") {
  const auto& f = family();
  const double T1 = contraction_window(kP, f).T1;
  const auto k = contraction_constant(f, T1);
  CHECK(std::abs(k.k - kK) < 1e-9);
  CHECK(k.k < 1.0);
  CHECK(k.grid_points >= 257);
  CHECK(k.T_at_sup >= 0.0);
  CHECK(k.T_at_sup <= T1);
  SECTION("bounded by the same integral with D0 in place of D1") {
    for (int i = 0; i <= 10; ++i) {
      const double T = T1 * i / 10.0;
      const double with_d0 = f.upper.gap_integral(f.lower.delta(T), mapped_temperature(f, T));
      CHECK(contraction_integral(f, T) <= with_d0);
    }
  }
  SECTION("each integrand value is below one") {
    for (int i = 0; i <= 10; ++i) CHECK(contraction_integral(f, f.lower.tau() * i / 10.5) < 1.0);
  }
  CHECK_THROWS_AS(contraction_constant(f, -1.0), DomainError);
}

TEST_CASE("empirical contraction", "[fixed_point]") {
  const auto& f = family();
  const double T1 = contraction_window(kP, f).T1;
  const Grid2D grid = Grid2D::uniform(T1, 9, 17, kP);
  const Kernel kernel = Kernel::interpolating(kP);
  const auto a = empirical_contraction(kernel, grid, kP, {}, 50, 42);
  const auto b = empirical_contraction(kernel, grid, kP, {}, 50, 42);
  CHECK(a.max_ratio == b.max_ratio);
  CHECK(a.pairs_used + a.pairs_skipped == 50);
  CHECK(a.max_ratio > 0.0);
  CHECK(a.max_ratio <= kK + 0.02);
  SECTION("identical pairs are skipped") {
    const GapOperator op(kernel, grid, kP);
    Envelopes degenerate;
    degenerate.lower.assign(grid.nT(), 0.1);
    degenerate.upper.assign(grid.nT(), 0.1);
    const auto r = empirical_contraction(op, degenerate, 5, 1);
    CHECK(r.pairs_skipped == 5);
    CHECK(r.pairs_used == 0);
    CHECK(r.max_ratio == 0.0);
  }
  CHECK_THROWS_AS(empirical_contraction(kernel, grid, kP, {}, 0, 1), DomainError);
}

TEST_CASE("uniform01 is reproducible", "[fixed_point]") {
  std::mt19937_64 a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    const double x = uniform01(a);
    CHECK(x == uniform01(b));
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  std::mt19937_64 c(0);
  CHECK(uniform01(c) == static_cast<double>(std::mt19937_64(0)() >> 11) * 0x1.0p-53);
}

TEST_CASE("surface CSV", "[fixed_point]") {
  const Grid2D grid = Grid2D::uniform(0.1, 2, 2, kP);
  const GapSurface s(grid, {0.3, 0.3, 0.2, 0.25});
  std::ostringstream out;
  write_surface_csv(out, s, "abc");
  CHECK(out.str() == "# config_hash=abc\nT,x,u\n0,0.01,0.29999999999999999\n0,1,0.29999999999999999\n"
                     "0.10000000000000001,0.01,0.20000000000000001\n0.10000000000000001,1,0.25\n");
  CHECK_THROWS_AS(GapSurface(grid, {0.1}), DomainError);
}
