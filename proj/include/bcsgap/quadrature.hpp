#pragma once

// Composite Gauss-Legendre quadrature on bounded intervals.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bcsgap/errors.hpp"

namespace bcsgap {

struct QuadratureRule {
  int panels = 64;
  int nodes_per_panel = 8;

  void validate() const {
    if (panels < 1) throw DomainError("quadrature: panels must be >= 1");
    if (nodes_per_panel < 2) throw DomainError("quadrature: nodes_per_panel must be >= 2");
  }
  std::size_t total_nodes() const {
    return static_cast<std::size_t>(panels) * static_cast<std::size_t>(nodes_per_panel);
  }
  QuadratureRule refined() const { return {2 * panels, nodes_per_panel}; }

  friend bool operator==(const QuadratureRule&, const QuadratureRule&) = default;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct LegendreTable {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline LegendreTable compute_legendre_table(int n) {
  LegendreTable t;
  t.nodes.resize(n);
  t.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double step = p1 / dp;
      z -= step;
      if (std::abs(step) <= 1e-15) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    t.nodes[i] = -z;
    t.nodes[n - 1 - i] = z;
    t.weights[i] = w;
    t.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) t.nodes[n / 2] = 0.0;
  return t;
}

}  // namespace detail

/// Cached per-order table; safe to call concurrently.
inline const LegendreTable& legendre_table(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<LegendreTable>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<LegendreTable>(detail::compute_legendre_table(n));
  return *slot;
}

/// Absolute nodes and weights of a composite rule mapped onto [a, b].
class QuadratureNodes {
 public:
  QuadratureNodes(double a, double b, const QuadratureRule& rule) : a_(a), b_(b), rule_(rule) {
    rule.validate();
    if (!(a < b)) throw DomainError("quadrature: requires a < b");
    const auto& base = legendre_table(rule.nodes_per_panel);
    nodes_.reserve(rule.total_nodes());
    weights_.reserve(rule.total_nodes());
    const double width = (b - a) / rule.panels;
    for (int p = 0; p < rule.panels; ++p) {
      const double lo = a + p * width;
      const double hi = (p + 1 == rule.panels) ? b : a + (p + 1) * width;
      const double half = 0.5 * (hi - lo);
      const double mid = 0.5 * (hi + lo);
      for (int i = 0; i < rule.nodes_per_panel; ++i) {
        nodes_.push_back(mid + half * base.nodes[i]);
        weights_.push_back(half * base.weights[i]);
      }
    }
  }

  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return nodes_.size(); }
  double lower() const { return a_; }
  double upper() const { return b_; }
  const QuadratureRule& rule() const { return rule_; }

  /// Weighted sum of f over the nodes. Throws EvaluationError on a
  /// non-finite sample.
  template <class F>
  double integrate(F&& f) const {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const double v = f(nodes_[i]);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "integrand is not finite at node " << nodes_[i] << " (value " << v << ")";
        throw EvaluationError(msg.str(), nodes_[i]);
      }
      total += weights_[i] * v;
    }
    return total;
  }

 private:
  double a_, b_;
  QuadratureRule rule_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

template <class F>
double integrate(F&& f, double a, double b, const QuadratureRule& rule = {}) {
  return QuadratureNodes(a, b, rule).integrate(std::forward<F>(f));
}

}  // namespace bcsgap
