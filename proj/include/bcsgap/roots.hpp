#pragma once

#include <cmath>
#include <functional>

#include "bcsgap/errors.hpp"

namespace bcsgap {

struct BisectionResult {
  double root;
  double residual;
  int iterations;
};

/// Bisection for a function with a sign change on [lo, hi]. Iterates until
/// the bracket cannot be split any further in double precision (or the
/// residual is exactly zero), so the returned root is accurate to a few ulp
/// of the bracket. Either monotone direction is accepted.
template <class F>
BisectionResult bisect(F&& f, double lo, double hi, int max_iter = 2000) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return {lo, 0.0, 0};
  if (fhi == 0.0) return {hi, 0.0, 0};
  if (std::signbit(flo) == std::signbit(fhi)) {
    throw DomainError("bisect: no sign change on bracket");
  }
  int it = 0;
  for (; it < max_iter; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return {mid, 0.0, it + 1};
    if (std::signbit(fm) == std::signbit(flo)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  if (std::abs(flo) <= std::abs(fhi)) return {lo, flo, it};
  return {hi, fhi, it};
}

}  // namespace bcsgap
