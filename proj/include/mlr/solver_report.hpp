#pragma once

#include <mlr/core.hpp>

#include <chrono>
#include <string>
#include <vector>

namespace mlr {

enum class StopReason { converged, max_iter, infeasible_detected };

inline const char *to_string(StopReason r) {
    switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_iter: return "max_iter";
    case StopReason::infeasible_detected: return "infeasible_detected";
    }
    return "unknown";
}

/// Iteration summary shared by the convex solvers. All traces have one entry
/// per iteration.
struct SolverReport {
    std::string program;
    int iterations = 0;
    std::vector<double> objective_trace;
    std::vector<double> primal_residual_trace;
    std::vector<double> dual_residual_trace;
    StopReason stop_reason = StopReason::max_iter;
    double wall_time = 0.0;
    /// The constraint radius or regularisation weight actually used.
    double parameter = 0.0;
};

struct SolveResult {
    LiftedEstimate estimate;
    SolverReport report;
};

namespace detail {
class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};
} // namespace detail

} // namespace mlr
