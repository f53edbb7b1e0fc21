#pragma once

#include <stdexcept>
#include <string>

namespace mlr {

/// Invalid arguments: dimension mismatches, out-of-range parameters,
/// malformed configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Any failure of a numerical routine: singular systems, divergence,
/// non-convergence, quadrature failure. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The constrained program has no feasible point for the requested radius.
class InfeasibleError : public NumericalError {
  public:
    InfeasibleError(const std::string &what, double ls_residual, double radius)
        : NumericalError(what), ls_residual_(ls_residual), radius_(radius) {}
    double ls_residual() const { return ls_residual_; }
    double radius() const { return radius_; }

  private:
    double ls_residual_;
    double radius_;
};

/// An iterative method ran out of iterations; carries the final residual.
class ConvergenceError : public NumericalError {
  public:
    ConvergenceError(const std::string &what, double residual)
        : NumericalError(what), residual_(residual) {}
    double residual() const { return residual_; }

  private:
    double residual_;
};

namespace detail {
inline void require(bool cond, const std::string &msg) {
    if (!cond)
        throw ConfigError(msg);
}
} // namespace detail

} // namespace mlr
