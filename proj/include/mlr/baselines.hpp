#pragma once

#include <mlr/core.hpp>
#include <mlr/rng.hpp>
#include <mlr/solver_regularized.hpp>
#include <mlr/spectral.hpp>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace mlr {

// ---------------------------------------------------------------------- EM

struct RandomInit {
    std::uint64_t seed = 0;
    /// Components are drawn as scale * N(0, I) / sqrt(p).
    double scale = 1.0;
};

/// Initialise from the regularised lifted solver followed by spectral recovery.
struct SpectralWarmstart {
    RegularizedConfig solver;
};

struct KnownVariance {
    double sigma2 = 0.0;
};
struct EstimatedVariance {};

struct EmConfig {
    std::variant<RegressorPair, RandomInit, SpectralWarmstart> init = RandomInit{};
    int max_rounds = 500;
    double tol_param_change = 1e-10;
    std::variant<KnownVariance, EstimatedVariance> variance = EstimatedVariance{};
    /// Re-estimate the mixing weight instead of holding it at 1/2.
    bool estimate_weight = false;

    void validate() const {
        detail::require(max_rounds >= 1, "EmConfig: max_rounds must be at least 1");
        detail::require(tol_param_change >= 0, "EmConfig: tolerance must be nonnegative");
        if (auto *k = std::get_if<KnownVariance>(&variance))
            detail::require(k->sigma2 >= 0, "EmConfig: known variance must be nonnegative");
    }
};

struct EmResult {
    RegressorPair pair;
    int rounds = 0;
    /// n x 2 posterior probabilities of each component.
    Mat responsibilities;
    /// Observed-data log-likelihood after each round (empty for zero variance).
    std::vector<double> loglik_trace;
    double sigma2 = 0.0;
    double weight = 0.5;
    std::vector<std::string> warnings;
};

namespace detail {

inline double log_normal_density(double r, double s2) {
    return -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * r * r / s2;
}

/// Observed-data log-likelihood of the two-component mixture.
inline double mixture_loglik(const Vec &r1, const Vec &r2, double s2, double w) {
    double total = 0.0;
    for (Index i = 0; i < r1.size(); ++i) {
        double a = std::log(w) + log_normal_density(r1(i), s2);
        double b = std::log1p(-w) + log_normal_density(r2(i), s2);
        double m = std::max(a, b);
        total += m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    return total;
}

inline Vec weighted_least_squares(const Mat &X, const Vec &y, const Vec &w, const char *component) {
    Mat H = X.transpose() * w.asDiagonal() * X;
    Eigen::LDLT<Mat> ldlt(H);
    const double scale = std::max(H.diagonal().maxCoeff(), std::numeric_limits<double>::min());
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * scale)
        throw NumericalError(std::string("fit_em: singular weighted normal equations for component ") + component);
    return ldlt.solve(X.transpose() * (w.array() * y.array()).matrix());
}

} // namespace detail

/// Standard EM for a two-component mixture of linear regressions with
/// Gaussian noise. Soft responsibilities; with known variance 0 the
/// responsibilities become hard assignments (ties split evenly).
inline EmResult fit_em(const MixedDataset &data, const EmConfig &cfg) {
    data.validate();
    cfg.validate();
    const Index n = data.n(), p = data.p();
    const Mat &X = data.X;
    const Vec &y = data.y;
    std::vector<std::string> warnings;
    if (n < 2 * p)
        warnings.emplace_back("fit_em: fewer than 2p samples; estimates may be unstable");

    Vec b1, b2;
    if (auto *pair = std::get_if<RegressorPair>(&cfg.init)) {
        detail::require(pair->dim() == p, "fit_em: initial pair has wrong dimension");
        b1 = pair->beta1();
        b2 = pair->beta2();
    } else if (auto *r = std::get_if<RandomInit>(&cfg.init)) {
        Rng rng(r->seed, 0);
        b1 = rng.normal_vector(p) * (r->scale / std::sqrt(static_cast<double>(p)));
        b2 = rng.normal_vector(p) * (r->scale / std::sqrt(static_cast<double>(p)));
    } else {
        auto warm = recover_betas(solve_regularized(data, std::get<SpectralWarmstart>(cfg.init).solver).estimate);
        b1 = warm.beta1();
        b2 = warm.beta2();
    }

    const bool known = std::holds_alternative<KnownVariance>(cfg.variance);
    double s2 = known ? std::get<KnownVariance>(cfg.variance).sigma2 : 0.0;
    if (!known) {
        Vec r1 = y - X * b1, r2 = y - X * b2;
        s2 = std::max(0.5 * (r1.squaredNorm() + r2.squaredNorm()) / static_cast<double>(n), 1e-300);
    }
    const double s2_floor = 1e-24 * std::max(y.squaredNorm() / static_cast<double>(n), 1e-300);
    double w = 0.5;

    EmResult out{RegressorPair(b1, b2), 0, Mat(n, 2), {}, s2, w, warnings};
    for (int round = 1; round <= cfg.max_rounds; ++round) {
        // E-step.
        Vec r1 = y - X * b1, r2 = y - X * b2;
        Vec g1(n);
        for (Index i = 0; i < n; ++i) {
            if (s2 <= 0.0) {
                double a = r1(i) * r1(i), b = r2(i) * r2(i);
                g1(i) = a < b ? 1.0 : (a > b ? 0.0 : 0.5);
            } else {
                double la = std::log(w) - 0.5 * r1(i) * r1(i) / s2;
                double lb = std::log1p(-w) - 0.5 * r2(i) * r2(i) / s2;
                g1(i) = 1.0 / (1.0 + std::exp(lb - la));
            }
        }
        Vec g2 = Vec::Ones(n) - g1;

        // M-step.
        Vec nb1 = detail::weighted_least_squares(X, y, g1, "1");
        Vec nb2 = detail::weighted_least_squares(X, y, g2, "2");
        if (cfg.estimate_weight)
            w = std::clamp(g1.mean(), 1e-6, 1.0 - 1e-6);
        if (!known) {
            Vec q1 = y - X * nb1, q2 = y - X * nb2;
            s2 = std::max((g1.array() * q1.array().square() + g2.array() * q2.array().square()).sum() /
                              static_cast<double>(n),
                          s2_floor);
        }
        double change = (nb1 - b1).norm() + (nb2 - b2).norm();
        b1 = nb1;
        b2 = nb2;
        out.responsibilities.col(0) = g1;
        out.responsibilities.col(1) = g2;
        out.rounds = round;
        if (s2 > 0.0)
            out.loglik_trace.push_back(detail::mixture_loglik(y - X * b1, y - X * b2, s2, w));
        if (change <= cfg.tol_param_change * (1.0 + b1.norm() + b2.norm()))
            break;
    }
    out.pair = RegressorPair(b1, b2);
    out.sigma2 = s2;
    out.weight = w;
    return out;
}

// --------------------------------------------------------------- blind LAD

struct LadResult {
    Vec beta;
    double objective = 0.0;
    int iterations = 0;
    /// Duality gap at exit, relative to max(1, objective).
    double relative_gap = 0.0;
    std::vector<double> objective_trace;
};

/// min_beta sum_i |x_i'beta - y_i|, ignoring the mixture.
///
/// Iteratively reweighted least squares with weights 1 / max(|r_i|, eps),
/// eps = 1e-8 * mean|y|. A step is accepted only if it lowers the l1
/// objective; otherwise it is halved along the IRLS direction, and if that
/// stalls a diminishing subgradient step is tried. Stops when the duality
/// gap of the dual certificate u (the IRLS weighted residuals, projected onto
/// the null space of X' and clipped to the unit box, or the vertex certificate
/// built from the p smallest residuals) falls below 1e-8.
inline LadResult fit_blind_lad(const MixedDataset &data, int max_iter = 500, double tol = 1e-8) {
    data.validate();
    const Mat &X = data.X;
    const Vec &y = data.y;
    const Index n = data.n();
    detail::require(n >= data.p(), "fit_blind_lad: needs n >= p");
    const double eps = 1e-8 * std::max(y.cwiseAbs().mean(), std::numeric_limits<double>::min());
    auto objective = [&](const Vec &b) { return (X * b - y).lpNorm<1>(); };

    Eigen::ColPivHouseholderQR<Mat> qr(X);
    LadResult out;
    out.beta = qr.solve(y);
    out.objective = objective(out.beta);
    out.objective_trace.push_back(out.objective);

    // Dual of min ||X b - y||_1: max -y'u s.t. X'u = 0, ||u||_inf <= 1.
    auto certificate_gap = [&](Vec u, double obj) {
        u -= X * qr.solve(u); // u <- u - X (X'X)^{-1} X'u, now X'u = 0
        double inf = u.cwiseAbs().maxCoeff();
        if (inf > 1.0)
            u /= inf;
        return obj + y.dot(u);
    };
    auto duality_gap = [&](const Vec &beta, double obj) {
        Vec r = X * beta - y;
        double gap = certificate_gap((r.array() / r.array().abs().max(eps)).matrix(), obj);
        // Vertex certificate: signs off the p smallest residuals, basic rows solved from X'u = 0.
        const Index p = X.cols();
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        std::partial_sort(order.begin(), order.begin() + p, order.end(),
                          [&](Index a, Index b) { return std::abs(r(a)) < std::abs(r(b)); });
        Vec u = r.cwiseSign();
        Mat XB(p, p);
        for (Index k = 0; k < p; ++k) {
            XB.row(k) = X.row(order[static_cast<std::size_t>(k)]);
            u(order[static_cast<std::size_t>(k)]) = 0.0;
        }
        Eigen::FullPivLU<Mat> lu(XB.transpose());
        if (lu.isInvertible()) {
            Vec uB = lu.solve(-(X.transpose() * u));
            for (Index k = 0; k < p; ++k)
                u(order[static_cast<std::size_t>(k)]) = uB(k);
            gap = std::min(gap, certificate_gap(u, obj));
        }
        return gap;
    };

    for (int it = 1; it <= max_iter; ++it) {
        out.iterations = it;
        double gap = duality_gap(out.beta, out.objective);
        out.relative_gap = gap / std::max(1.0, out.objective);
        if (out.relative_gap <= tol)
            break;
        Vec r = X * out.beta - y;
        Vec wts = r.cwiseAbs().cwiseMax(eps).cwiseInverse();
        Mat H = X.transpose() * wts.asDiagonal() * X;
        Vec cand = H.ldlt().solve(X.transpose() * (wts.array() * y.array()).matrix());
        Vec dir = cand - out.beta;
        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h < 40 && !accepted; ++h, step *= 0.5) {
            Vec trial = out.beta + step * dir;
            double obj = objective(trial);
            if (obj < out.objective) {
                out.beta = trial;
                out.objective = obj;
                accepted = true;
            }
        }
        if (!accepted) {
            Vec sub = X.transpose() * r.cwiseSign();
            double sn = sub.norm();
            for (int h = 0; h < 40 && !accepted && sn > 0; ++h) {
                Vec trial = out.beta - (out.objective / (sn * sn)) * std::pow(0.5, h) * sub;
                double obj = objective(trial);
                if (obj < out.objective) {
                    out.beta = trial;
                    out.objective = obj;
                    accepted = true;
                }
            }
        }
        out.objective_trace.push_back(out.objective);
        if (!accepted)
            break;
    }
    out.relative_gap = duality_gap(out.beta, out.objective) / std::max(1.0, out.objective);
    return out;
}

// ------------------------------------------------------------------- oracle

/// Per-class ordinary least squares using the recorded labels.
inline RegressorPair fit_oracle(const MixedDataset &data) {
    data.validate();
    detail::require(data.z.has_value(), "fit_oracle: labels are required");
    const Index p = data.p();
    Vec betas[2];
    for (int label = 1; label >= 0; --label) {
        MixedDataset part = data.subset_by_label(label);
        const char *name = label == 1 ? "1" : "2";
        if (part.n() < p)
            throw ConfigError(std::string("fit_oracle: class ") + name + " has fewer than p samples");
        Eigen::ColPivHouseholderQR<Mat> qr(part.X);
        if (qr.rank() < p)
            throw NumericalError(std::string("fit_oracle: class ") + name + " design is rank deficient");
        betas[label == 1 ? 0 : 1] = qr.solve(part.y);
    }
    return {betas[0], betas[1]};
}

} // namespace mlr
