#pragma once

#include <mlr/core.hpp>
#include <mlr/solver_regularized.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

// Independent reference computations shared by the unit tests and the
// acceptance binary.
namespace mlr::oracle {

// For a 2 x 2 matrix [a b; c d] the singular values satisfy
// s1 + s2 = sqrt(||X||_F^2 + 2 |det X|) = max(||(a+d, b-c)||, ||(a-d, b+c)||).
// In the orthonormal coordinates B1 = (a+d, b-c)/sqrt2, B2 = (a-d, b+c)/sqrt2,
// the prox objective is 0.5 ||B - M||^2 + tau sqrt2 max(||B1||, ||B2||), so each
// block points along the matching block of M and only the two radii remain.
// Those are found by a zooming 2-d grid search.
inline Mat grid_search_svt(const Mat &M, double tau) {
    const double r2 = std::sqrt(2.0);
    Eigen::Vector2d m1((M(0, 0) + M(1, 1)) / r2, (M(0, 1) - M(1, 0)) / r2);
    Eigen::Vector2d m2((M(0, 0) - M(1, 1)) / r2, (M(0, 1) + M(1, 0)) / r2);
    const double n1 = m1.norm(), n2 = m2.norm();
    auto objective = [&](double a, double b) {
        return 0.5 * (n1 - a) * (n1 - a) + 0.5 * (n2 - b) * (n2 - b) + tau * r2 * std::max(a, b);
    };
    double ca = 0.5 * n1, cb = 0.5 * n2;
    double h = 0.25 * (n1 + n2 + 1.0);
    while (h > 1e-12) {
        double ba = ca, bb = cb, fbest = objective(ca, cb);
        for (int i = -4; i <= 4; ++i)
            for (int j = -4; j <= 4; ++j) {
                double a = std::clamp(ca + i * h, 0.0, n1), b = std::clamp(cb + j * h, 0.0, n2);
                double f = objective(a, b);
                if (f < fbest) {
                    fbest = f;
                    ba = a;
                    bb = b;
                }
            }
        if (ba == ca && bb == cb)
            h *= 0.5;
        ca = ba;
        cb = bb;
    }
    Eigen::Vector2d b1 = n1 > 0 ? Eigen::Vector2d(m1 * (ca / n1)) : Eigen::Vector2d::Zero();
    Eigen::Vector2d b2 = n2 > 0 ? Eigen::Vector2d(m2 * (cb / n2)) : Eigen::Vector2d::Zero();
    Mat out(2, 2);
    out << (b1(0) + b2(0)) / r2, (b1(1) + b2(1)) / r2, (b2(1) - b1(1)) / r2, (b1(0) - b2(0)) / r2;
    return out;
}

// Exact Euclidean projection onto {||x||_1 <= r} in 3-d by enumerating the
// faces of the cross-polytope: for every support S and sign pattern s,
// project onto {s'x_S = r, x_{S^c} = 0} and keep sign-consistent candidates.
inline Vec brute_project_l1(const Vec &v, double r) {
    if (v.lpNorm<1>() <= r)
        return v;
    Vec best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int support = 1; support < 8; ++support)
        for (int signs = 0; signs < 8; ++signs) {
            Vec s = Vec::Zero(3);
            int k = 0;
            for (int j = 0; j < 3; ++j)
                if (support & (1 << j)) {
                    s(j) = (signs & (1 << j)) ? 1.0 : -1.0;
                    ++k;
                }
            // Minimise ||x - v||^2 with x_j = v_j - t s_j on the support.
            double t = (s.dot(v) - r) / k;
            Vec x = Vec::Zero(3);
            bool consistent = true;
            for (int j = 0; j < 3; ++j)
                if (s(j) != 0.0) {
                    x(j) = v(j) - t * s(j);
                    if (x(j) * s(j) < 0)
                        consistent = false;
                }
            if (!consistent)
                continue;
            double dist = (x - v).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = x;
            }
        }
    return best;
}

struct ScalarLasso {
    double k = 0.0;
    double g = 0.0;
    /// |B|: lambda below 2 |B| shrinks k, above it zeroes k.
    double kink = 0.0;
};

// p = 1: minimise sum (a_i k + b_i g - c_i)^2 + lambda |k| with a = -x^2,
// b = 2 y x, c = y^2 - sigma2. Eliminating g projects a and c off b; the
// remaining scalar lasso has k = sign(B) max(|B| - lambda / 2, 0) / A.
inline ScalarLasso scalar_regularized(const MixedDataset &d, double sigma2, double lambda) {
    Vec a = -d.X.col(0).array().square().matrix();
    Vec b = 2.0 * (d.y.array() * d.X.col(0).array()).matrix();
    Vec c = (d.y.array().square() - sigma2).matrix();
    Vec a_perp = a - b * (b.dot(a) / b.squaredNorm());
    Vec c_perp = c - b * (b.dot(c) / b.squaredNorm());
    const double A = a_perp.squaredNorm(), B = a_perp.dot(c_perp);
    ScalarLasso out;
    out.kink = std::abs(B);
    out.k = (B > 0 ? 1.0 : -1.0) * std::max(std::abs(B) - 0.5 * lambda, 0.0) / A;
    out.g = b.dot(c - a * out.k) / b.squaredNorm();
    return out;
}

// Relative gap between the analytic directional derivative of the smooth
// objective and a central difference along a random symmetric direction.
inline double gradient_fd_gap(const LiftedEstimate &est, const MixedDataset &d, double sigma2, const Mat &DK_raw,
                              const Vec &Dg, double h = 1e-5) {
    Mat DK = (0.5 * (DK_raw + DK_raw.transpose())).eval();
    SmoothEval ev = smooth_objective_and_gradient(est, d, sigma2);
    double analytic = (ev.grad_K.array() * DK.array()).sum() + ev.grad_g.dot(Dg);
    double fp = smooth_objective_and_gradient(LiftedEstimate(est.K() + h * DK, est.g() + h * Dg), d, sigma2).value;
    double fm = smooth_objective_and_gradient(LiftedEstimate(est.K() - h * DK, est.g() - h * Dg), d, sigma2).value;
    double numeric = (fp - fm) / (2 * h);
    return std::abs(numeric - analytic) / std::max(1.0, std::abs(analytic));
}

} // namespace mlr::oracle
