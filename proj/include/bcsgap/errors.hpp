#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bcsgap {

/// Parameters for which the requested quantity does not exist (e.g. a
/// coupling too weak to produce a transition temperature).
class InfeasibleParameters : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A non-finite value produced while evaluating an integrand.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, double node)
      : std::runtime_error(what), node_(node) {}
  double node() const noexcept { return node_; }

 private:
  double node_;
};

/// Kernel violating U1 <= U(x, xi) <= U2 somewhere on the probe grid.
class KernelBoundsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or configuration.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iteration budget exhausted before the residual dropped below tolerance.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

}  // namespace bcsgap
