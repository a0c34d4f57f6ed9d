#pragma once

// Piecewise-linear interpolation on a strictly increasing abscissa. Linear
// pieces never leave [min, max] of the adjacent samples, so monotone data
// gives a monotone interpolant.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "bcsgap/errors.hpp"

namespace bcsgap {

/// Index i of the segment [xs[i], xs[i+1]] containing x, clamped to the
/// first/last segment outside the range.
inline std::size_t locate_segment(std::span<const double> xs, double x) {
  if (xs.size() < 2) throw DomainError("interpolation: need at least two nodes");
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  if (hi == 0) hi = 1;
  if (hi >= xs.size()) hi = xs.size() - 1;
  return hi - 1;
}

/// Segment index and linear weight of the right node, with x clamped to
/// [xs.front(), xs.back()].
struct LinearStencil {
  std::size_t left;
  double weight;

  double apply(std::span<const double> ys) const {
    return (1.0 - weight) * ys[left] + weight * ys[left + 1];
  }
};

inline LinearStencil linear_stencil(std::span<const double> xs, double x) {
  x = std::clamp(x, xs.front(), xs.back());
  const std::size_t i = locate_segment(xs, x);
  const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return {i, std::clamp(w, 0.0, 1.0)};
}

inline double interpolate_linear(std::span<const double> xs, std::span<const double> ys, double x) {
  return linear_stencil(xs, x).apply(ys);
}

}  // namespace bcsgap
