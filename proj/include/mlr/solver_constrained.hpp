#pragma once

#include <mlr/core.hpp>
#include <mlr/lifted_operator.hpp>
#include <mlr/prox.hpp>
#include <mlr/solver_report.hpp>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <sstream>
#include <variant>

namespace mlr {

/// eta = c4 * sqrt(n) * ||e|| * ||beta1 - beta2||. Both norms are oracle
/// quantities; supply them from generation metadata or as guesses.
struct EtaAuto {
    double c4 = 1.0;
    double e_norm = 0.0;
    double separation = 0.0;
};

struct ConstrainedConfig {
    std::variant<double, EtaAuto> eta = 0.0;
    int max_iter = 5000;
    double tol_primal = 1e-6;
    double tol_dual = 1e-6;
    double penalty = 1.0;
    bool adapt_penalty = true;
    double adapt_factor = 2.0;
    double adapt_ratio = 10.0;
    int adapt_interval = 10;

    void validate() const {
        detail::require(max_iter >= 1, "ConstrainedConfig: max_iter must be at least 1");
        detail::require(tol_primal > 0 && tol_dual > 0, "ConstrainedConfig: tolerances must be positive");
        detail::require(penalty > 0, "ConstrainedConfig: penalty must be positive");
        detail::require(adapt_factor > 1 && adapt_ratio > 1 && adapt_interval >= 1,
                        "ConstrainedConfig: invalid penalty adaptation settings");
        if (auto *e = std::get_if<EtaAuto>(&eta))
            detail::require(e->c4 >= 0 && e->e_norm >= 0 && e->separation >= 0,
                            "ConstrainedConfig: eta rule inputs must be nonnegative");
        else
            detail::require(std::get<double>(eta) >= 0, "ConstrainedConfig: eta must be nonnegative");
    }
};

inline double resolve_eta(const ConstrainedConfig &cfg, Index n) {
    if (auto *e = std::get_if<EtaAuto>(&cfg.eta))
        return e->c4 * std::sqrt(static_cast<double>(n)) * e->e_norm * e->separation;
    return std::get<double>(cfg.eta);
}

/// Minimises ||K||_* subject to sum_i |r_i(K, g)| <= eta.
///
/// Two-block ADMM on the splitting  A w - c = u,  K(w) = Z  with objective
/// ||Z||_* + indicator(||u||_1 <= eta). The w-step is an exact least-squares
/// solve against a cached Cholesky factor; the (u, Z) step is an l1-ball
/// projection and an eigenvalue soft-threshold. Rows are rescaled internally
/// so the default penalty is reasonable for any data scale.
///
/// A point is accepted as feasible when sum|r_i| <= eta (1 + tol_primal) +
/// tol_primal * sum y_i^2; the absolute term makes eta = 0 attainable at
/// finite precision. The returned estimate is the feasible iterate with the
/// smallest nuclear norm.
inline SolveResult solve_constrained(const MixedDataset &data, const ConstrainedConfig &cfg) {
    data.validate();
    cfg.validate();
    detail::Stopwatch clock;
    const Index n = data.n();
    const Index p = data.p();
    const double eta = resolve_eta(cfg, n);

    SolverReport report;
    report.program = "constrained";
    report.parameter = eta;

    const double ysq = data.y.squaredNorm();
    const double slack = cfg.tol_primal * ysq;
    const double limit = eta * (1.0 + cfg.tol_primal) + slack;

    // K = 0, g = 0 has residual -y^2, so it is optimal once sum y^2 <= eta.
    if (ysq <= eta) {
        report.stop_reason = StopReason::converged;
        report.wall_time = clock.seconds();
        return {LiftedEstimate::zero(p), report};
    }

    const double sy = std::sqrt(ysq / static_cast<double>(n));
    const Vec yn = data.y / sy;
    LiftedOperator op(p);
    const Index dk = op.dim_k();
    const Index d = op.dim();
    Mat A = op.features(data.X, yn);
    const double sa = std::sqrt(A.squaredNorm() / static_cast<double>(d));
    A /= sa;
    const Vec c = yn.array().square().matrix() / sa;
    const double scale_r = sy * sy * sa; // original residual = scale_r * (A w - c)
    const double radius = eta / scale_r;

    // ||r||_1 >= ||r||_2 >= least-squares residual, so a large least-squares
    // residual certifies that no point meets the constraint.
    Vec w = A.colPivHouseholderQr().solve(c);
    const double ls_residual = (A * w - c).norm() * scale_r;
    bool certified_infeasible = ls_residual > limit;
    if (ls_residual > 10.0 * eta + slack) {
        std::ostringstream msg;
        msg << "solve_constrained: infeasible, least-squares residual " << ls_residual << " exceeds eta " << eta;
        throw InfeasibleError(msg.str(), ls_residual, eta);
    }

    Mat H = A.transpose() * A;
    H.diagonal().head(dk).array() += 1.0;
    H.diagonal().array() += 1e-12 * H.trace() / static_cast<double>(d);
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success)
        throw NumericalError("solve_constrained: normal matrix is not positive definite");

    double rho = cfg.penalty;
    Vec Ax = A * w;
    Vec u = project_l1_ball(Ax - c, radius);
    Vec Z = w.head(dk);
    Vec l1 = Vec::Zero(n), l2 = Vec::Zero(dk);
    const auto AK = A.leftCols(dk);
    const auto Ag = A.rightCols(p);
    const double c_norm = c.norm();

    double best_obj = std::numeric_limits<double>::infinity();
    Vec best_Z = Z, best_g = w.tail(p);
    bool have_best = false;
    Vec last_g = w.tail(p);

    report.stop_reason = StopReason::max_iter;
    for (int it = 0; it < cfg.max_iter; ++it) {
        Vec rhs = A.transpose() * (c + u - l1);
        rhs.head(dk) += Z - l2;
        w = llt.solve(rhs);
        Ax.noalias() = A * w;

        Vec u_prev = u;
        u = project_l1_ball(Ax - c + l1, radius);

        Vec Z_prev = Z;
        Eigen::SelfAdjointEigenSolver<Mat> es(op.smat(w.head(dk) + l2));
        if (es.info() != Eigen::Success)
            throw NumericalError("solve_constrained: eigendecomposition failed");
        const Vec lam = es.eigenvalues();
        const Vec shrunk = (lam.array().sign() * (lam.array().abs() - 1.0 / rho).max(0.0)).matrix();
        Z = op.svec(es.eigenvectors() * shrunk.asDiagonal() * es.eigenvectors().transpose());
        const double obj = shrunk.cwiseAbs().sum();

        const Vec r1 = Ax - c - u;
        const Vec r2 = w.head(dk) - Z;
        l1 += r1;
        l2 += r2;

        const double primal = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
        Vec dvec = A.transpose() * (u - u_prev);
        dvec.head(dk) += Z - Z_prev;
        const double dual = rho * dvec.norm();
        const double eps_pri = cfg.tol_primal * std::max({std::sqrt(Ax.squaredNorm() + w.head(dk).squaredNorm()),
                                                          std::sqrt(u.squaredNorm() + Z.squaredNorm()), c_norm});
        // A'l1 + l2 vanishes at every w-step optimum, so the dual tolerance is
        // scaled by the multipliers themselves (floored at 1 in rescaled units).
        const double eps_dual =
            cfg.tol_dual * std::max(rho * std::sqrt(l1.squaredNorm() + l2.squaredNorm()), 1.0);

        last_g = w.tail(p);
        const double violation = (AK * Z + Ag * last_g - c).lpNorm<1>() * scale_r;
        const bool feasible = violation <= limit;
        if (feasible && obj < best_obj) {
            best_obj = obj;
            best_Z = Z;
            best_g = last_g;
            have_best = true;
        }

        report.objective_trace.push_back(obj * sy * sy);
        report.primal_residual_trace.push_back(primal);
        report.dual_residual_trace.push_back(dual);
        report.iterations = it + 1;
        if (!std::isfinite(primal) || !std::isfinite(dual))
            throw NumericalError("solve_constrained: non-finite residual");

        if (feasible && primal <= eps_pri && dual <= eps_dual) {
            report.stop_reason = StopReason::converged;
            break;
        }

        if (cfg.adapt_penalty && (it + 1) % cfg.adapt_interval == 0) {
            if (primal > cfg.adapt_ratio * dual) {
                rho *= cfg.adapt_factor;
                l1 /= cfg.adapt_factor;
                l2 /= cfg.adapt_factor;
            } else if (dual > cfg.adapt_ratio * primal) {
                rho /= cfg.adapt_factor;
                l1 *= cfg.adapt_factor;
                l2 *= cfg.adapt_factor;
            }
        }
    }

    if (!have_best) {
        best_Z = Z;
        best_g = last_g;
        if (certified_infeasible)
            report.stop_reason = StopReason::infeasible_detected;
    }
    report.wall_time = clock.seconds();
    return {LiftedEstimate(sy * sy * op.smat(best_Z), sy * best_g), report};
}

} // namespace mlr
