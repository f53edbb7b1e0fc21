#pragma once

#include <mlr/core.hpp>
#include <mlr/lifted_operator.hpp>
#include <mlr/prox.hpp>
#include <mlr/solver_report.hpp>

#include <cmath>
#include <optional>
#include <variant>

namespace mlr {

/// lambda = c5 * sigma * (gamma + sigma) * sqrt(n p) * log(n)^log_exponent.
/// When gamma is absent it is estimated from the data by estimate_gamma.
struct LambdaAuto {
    double c5 = 1.0;
    double sigma = 0.0;
    std::optional<double> gamma;
    double log_exponent = 3.0;
};

struct Backtracking {
    double growth = 2.0;
};

/// Fixed step 1/L, with L a Lipschitz constant of the gradient of the smooth
/// part in the original (K, g) coordinates.
struct FixedStep {
    double lipschitz = 1.0;
};

struct RegularizedConfig {
    std::variant<double, LambdaAuto> lambda = 1.0;
    /// Known noise variance.
    double sigma2 = 0.0;
    int max_iter = 5000;
    double tol_rel_obj = 1e-7;
    std::variant<Backtracking, FixedStep> step = Backtracking{};
    /// Consecutive accepted objective increases that count as divergence.
    int divergence_window = 10;

    void validate() const {
        detail::require(max_iter >= 1, "RegularizedConfig: max_iter must be at least 1");
        detail::require(tol_rel_obj > 0, "RegularizedConfig: tolerance must be positive");
        detail::require(sigma2 >= 0, "RegularizedConfig: sigma2 must be nonnegative");
        detail::require(divergence_window >= 1, "RegularizedConfig: divergence window must be positive");
        if (auto *b = std::get_if<Backtracking>(&step))
            detail::require(b->growth > 1, "RegularizedConfig: backtracking growth must exceed 1");
        else
            detail::require(std::get<FixedStep>(step).lipschitz > 0, "RegularizedConfig: Lipschitz constant must be positive");
    }
};

/// Crude signal-scale proxy sqrt(2 * max(0, mean(y^2) - sigma2)).
inline double estimate_gamma(const MixedDataset &data, double sigma2) {
    double m = data.y.squaredNorm() / static_cast<double>(data.n());
    return std::sqrt(2.0 * std::max(0.0, m - sigma2));
}

inline double resolve_lambda(const RegularizedConfig &cfg, const MixedDataset &data) {
    if (auto *rule = std::get_if<LambdaAuto>(&cfg.lambda)) {
        double n = static_cast<double>(data.n());
        double p = static_cast<double>(data.p());
        double gamma = rule->gamma ? *rule->gamma : estimate_gamma(data, cfg.sigma2);
        return rule->c5 * rule->sigma * (gamma + rule->sigma) * std::sqrt(n * p) *
               std::pow(std::log(n), rule->log_exponent);
    }
    return std::get<double>(cfg.lambda);
}

struct SmoothEval {
    double value = 0.0;
    Mat grad_K;
    Vec grad_g;
};

/// sum_i s_i^2 with s_i = r_i + sigma2, and its gradient in (K, g).
inline SmoothEval smooth_objective_and_gradient(const LiftedEstimate &est, const MixedDataset &data, double sigma2) {
    Vec s = residuals(est, data).array() + sigma2;
    SmoothEval out;
    out.value = s.squaredNorm();
    // d/dK sum s_i^2 = sum 2 s_i (-x_i x_i'), d/dg = sum 2 s_i (2 y_i x_i).
    out.grad_K = -2.0 * data.X.transpose() * s.asDiagonal() * data.X;
    out.grad_K = (0.5 * (out.grad_K + out.grad_K.transpose())).eval();
    out.grad_g = 4.0 * data.X.transpose() * (s.array() * data.y.array()).matrix();
    return out;
}

/// Minimises sum_i (r_i(K, g) + sigma2)^2 + lambda ||K||_* by FISTA with
/// backtracking and function-value restart, so the objective trace is
/// non-increasing. Internally the responses and lifted rows are rescaled to
/// unit size; the returned estimate and traces are in original units.
///
/// Stops when the composite gradient-mapping norm (in the rescaled problem)
/// falls below tol_rel_obj * (1 + lambda + ||gradient at 0||), all in the
/// rescaled units.
inline SolveResult solve_regularized(const MixedDataset &data, const RegularizedConfig &cfg) {
    data.validate();
    cfg.validate();
    detail::Stopwatch clock;
    const Index n = data.n();
    const Index p = data.p();
    const double lambda = resolve_lambda(cfg, data);
    detail::require(lambda > 0 && std::isfinite(lambda), "solve_regularized: lambda must be positive and finite");

    SolverReport report;
    report.program = "regularized";
    report.parameter = lambda;

    double sy = std::sqrt(data.y.squaredNorm() / static_cast<double>(n));
    if (sy == 0.0)
        sy = 1.0;
    const Vec yn = data.y / sy;
    LiftedOperator op(p);
    const Index dk = op.dim_k();
    const Index d = op.dim();
    Mat A = op.features(data.X, yn);
    double sa = std::sqrt(A.squaredNorm() / static_cast<double>(d));
    if (sa == 0.0)
        sa = 1.0;
    A /= sa;
    const Vec t = (yn.array().square() - cfg.sigma2 / (sy * sy)).matrix() / sa;
    const double lam = lambda / (sy * sy * sa * sa);
    const double obj_scale = sy * sy * sy * sy * sa * sa;

    const Mat G = A.transpose() * A;
    const Vec b = A.transpose() * t;
    const double grad_scale = 1.0 + lam + 2.0 * b.norm();

    auto composite = [&](const Vec &w, double nuclear) { return (A * w - t).squaredNorm() + lam * nuclear; };

    // Prox step from z with step 1/L; returns the new point and its nuclear norm.
    auto prox_step = [&](const Vec &z, const Vec &grad, double L, double &nuclear) {
        Vec x = z - grad / L;
        Eigen::SelfAdjointEigenSolver<Mat> es(op.smat(x.head(dk)));
        if (es.info() != Eigen::Success)
            throw NumericalError("solve_regularized: eigendecomposition failed");
        const Vec lam_k = es.eigenvalues();
        const Vec shrunk = (lam_k.array().sign() * (lam_k.array().abs() - lam / L).max(0.0)).matrix();
        nuclear = shrunk.cwiseAbs().sum();
        x.head(dk) = op.svec(es.eigenvectors() * shrunk.asDiagonal() * es.eigenvectors().transpose());
        return x;
    };

    double L;
    const bool backtrack = std::holds_alternative<Backtracking>(cfg.step);
    double growth = 2.0;
    if (backtrack) {
        growth = std::get<Backtracking>(cfg.step).growth;
        Vec v = Vec::Ones(d) / std::sqrt(static_cast<double>(d));
        L = std::max(2.0 * (G * v).norm(), 1e-12);
    } else {
        L = std::get<FixedStep>(cfg.step).lipschitz * std::max(1.0, 1.0 / (sy * sy)) / (sa * sa);
    }

    Vec x = Vec::Zero(d);
    double F_x = composite(x, 0.0);
    Vec z = x;
    double tk = 1.0;
    int increases = 0;
    report.stop_reason = StopReason::max_iter;

    for (int it = 0; it < cfg.max_iter; ++it) {
        const Vec grad = 2.0 * (G * z - b);
        double nuclear = 0.0;
        Vec x_new;
        Vec delta;
        for (;;) {
            x_new = prox_step(z, grad, L, nuclear);
            delta = x_new - z;
            if (!backtrack)
                break;
            // For a quadratic the sufficient-decrease test is exact: f(x+) - f(z) -
            // grad'delta = delta'G delta.
            double curvature = delta.dot(G * delta);
            if (curvature <= 0.5 * L * delta.squaredNorm() * (1.0 + 1e-12))
                break;
            L *= growth;
        }
        const double gm = L * delta.norm();
        const double F_new = composite(x_new, nuclear);
        if (!std::isfinite(F_new))
            throw NumericalError("solve_regularized: non-finite objective");

        bool momentum_active = (z - x).squaredNorm() > 0.0;
        if (F_new > F_x && momentum_active) {
            // Function-value restart: discard momentum and retry from x.
            z = x;
            tk = 1.0;
        } else {
            if (F_new > F_x * (1.0 + 1e-14)) {
                if (++increases >= cfg.divergence_window)
                    throw NumericalError("solve_regularized: objective increased on consecutive steps (divergence)");
            } else {
                increases = 0;
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            z = x_new + ((tk - 1.0) / t_next) * (x_new - x);
            x = x_new;
            F_x = F_new;
            tk = t_next;
        }

        report.objective_trace.push_back(F_x * obj_scale);
        report.primal_residual_trace.push_back(gm);
        report.dual_residual_trace.push_back(delta.norm());
        report.iterations = it + 1;
        if (gm <= cfg.tol_rel_obj * grad_scale) {
            report.stop_reason = StopReason::converged;
            break;
        }
    }

    report.wall_time = clock.seconds();
    return {LiftedEstimate(sy * sy * op.smat(x.head(dk)), sy * x.tail(p)), report};
}

} // namespace mlr
