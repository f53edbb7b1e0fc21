#pragma once

#include <mlr/core.hpp>
#include <mlr/rng.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace mlr {

struct EigenpairResult {
    double lambda = 0.0;
    Vec v;
    int iterations = 0;
    /// ||M v - lambda v||.
    double residual = 0.0;
};

enum class EigenMethod { automatic, dense, power };

namespace detail {
/// Flip v so that its largest-magnitude entry is positive (first one on ties).
inline void canonicalize_sign(Vec &v) {
    Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0)
        v = -v;
}
} // namespace detail

/// Eigenpair of the algebraically largest eigenvalue of a symmetric matrix.
///
/// The dense path (default for p <= 64) uses a symmetric QR eigensolver. The
/// power path iterates on M + s I with s the largest absolute row sum, which
/// makes the shifted matrix positive semidefinite so that the dominant
/// eigenvalue is the algebraically largest one; it starts from the all-ones
/// vector plus a small index-dependent tiebreak. Either way the sign of v is
/// fixed by making its largest-magnitude entry positive.
inline EigenpairResult top_eigenpair(const Mat &M, double tol = 1e-12, int max_iter = 100000,
                                     EigenMethod method = EigenMethod::automatic) {
    detail::require(M.rows() == M.cols() && M.rows() >= 1, "top_eigenpair: matrix must be square and nonempty");
    detail::require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff()),
                    "top_eigenpair: matrix must be symmetric");
    const Index p = M.rows();
    const Mat S = 0.5 * (M + M.transpose());
    EigenpairResult out;
    if (method == EigenMethod::dense || (method == EigenMethod::automatic && p <= 64)) {
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        if (es.info() != Eigen::Success)
            throw NumericalError("top_eigenpair: dense eigensolver failed");
        out.lambda = es.eigenvalues()(p - 1);
        out.v = es.eigenvectors().col(p - 1);
        out.v.normalize();
        detail::canonicalize_sign(out.v);
        out.iterations = 1;
        out.residual = (S * out.v - out.lambda * out.v).norm();
        return out;
    }

    const double shift = S.cwiseAbs().rowwise().sum().maxCoeff();
    const double scale = std::max(S.norm(), std::numeric_limits<double>::min());
    Vec v(p);
    for (Index i = 0; i < p; ++i)
        v(i) = 1.0 + 1e-3 * static_cast<double>(i + 1) / static_cast<double>(p);
    v.normalize();
    double lambda = v.dot(S * v);
    double residual = (S * v - lambda * v).norm();
    int it = 0;
    while (residual > tol * scale && it < max_iter) {
        Vec w = S * v + shift * v;
        double nw = w.norm();
        if (nw == 0.0)
            break;
        v = w / nw;
        lambda = v.dot(S * v);
        residual = (S * v - lambda * v).norm();
        ++it;
    }
    if (residual > tol * scale) {
        std::ostringstream msg;
        msg << "top_eigenpair: power iteration did not converge, residual " << residual;
        throw ConvergenceError(msg.str(), residual);
    }
    detail::canonicalize_sign(v);
    out.lambda = lambda;
    out.v = v;
    out.iterations = it;
    out.residual = residual;
    return out;
}

/// Splits a lifted estimate into a regressor pair: with (lambda, v) the top
/// eigenpair of g g' - K (lambda clamped at 0), returns g +- sqrt(lambda) v.
inline RegressorPair recover_betas(const LiftedEstimate &est) {
    EigenpairResult top = top_eigenpair(j_matrix(est));
    double lam = std::max(top.lambda, 0.0);
    Vec step = std::sqrt(lam) * top.v;
    return {est.g() + step, est.g() - step};
}

struct PerturbationRow {
    double delta = 0.0;
    int trials = 0;
    int violations = 0;
    /// Largest ||sqrt(lh) vh - sqrt(l) v|| seen.
    double max_lhs = 0.0;
    /// Largest lhs / (10 min(delta / sqrt(||J||), sqrt(delta))).
    double max_ratio = 0.0;
};

struct PerturbationReport {
    double j_norm = 0.0;
    std::vector<PerturbationRow> rows;
    bool all_hold() const {
        return std::all_of(rows.begin(), rows.end(), [](const PerturbationRow &r) { return r.violations == 0; });
    }
    double max_ratio() const {
        double m = 0.0;
        for (const auto &r : rows)
            m = std::max(m, r.max_ratio);
        return m;
    }
};

/// Samples symmetric perturbations D with ||D||_F = delta of J = g g' - K at
/// the exact lift of `truth` and checks
///   ||sqrt(lh) vh - sqrt(l) v|| <= 10 min(delta / sqrt(||J||), sqrt(delta)),
/// where (l, v) and (lh, vh) are the top eigenpairs of J and J + D, vh is
/// sign-aligned with v and lh is clamped at 0.
inline PerturbationReport check_perturbation_lemma(const RegressorPair &truth, const std::vector<double> &delta_grid,
                                                   int trials, std::uint64_t seed) {
    detail::require(truth.separation().norm() > 0, "check_perturbation_lemma: components must differ");
    detail::require(trials >= 1, "check_perturbation_lemma: trials must be positive");
    const Index p = truth.dim();
    const Mat J = j_matrix(lift(truth));
    const EigenpairResult star = top_eigenpair(J);
    const Vec target = std::sqrt(std::max(star.lambda, 0.0)) * star.v;
    PerturbationReport report;
    report.j_norm = star.lambda;
    for (std::size_t k = 0; k < delta_grid.size(); ++k) {
        const double delta = delta_grid[k];
        detail::require(delta >= 0, "check_perturbation_lemma: delta must be nonnegative");
        PerturbationRow row;
        row.delta = delta;
        row.trials = trials;
        const double bound = 10.0 * std::min(delta / std::sqrt(star.lambda), std::sqrt(delta));
        Rng rng(seed, k);
        for (int t = 0; t < trials; ++t) {
            Mat D = rng.normal_matrix(p, p);
            D = (0.5 * (D + D.transpose())).eval();
            double nd = D.norm();
            D *= nd > 0 ? delta / nd : 0.0;
            EigenpairResult hat = top_eigenpair(J + D);
            Vec vh = hat.v.dot(star.v) < 0 ? Vec(-hat.v) : hat.v;
            double lhs = (std::sqrt(std::max(hat.lambda, 0.0)) * vh - target).norm();
            row.max_lhs = std::max(row.max_lhs, lhs);
            double ratio = bound > 0 ? lhs / bound : (lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
            row.max_ratio = std::max(row.max_ratio, ratio);
            if (lhs > bound * (1.0 + 1e-12) + 1e-14 * std::sqrt(star.lambda))
                ++row.violations;
        }
        report.rows.push_back(row);
    }
    return report;
}

} // namespace mlr
