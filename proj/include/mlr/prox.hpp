#pragma once

#include <mlr/core.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <functional>
#include <vector>

namespace mlr {

/// Singular value thresholding: the prox of tau*||.||_* for a general square
/// matrix, U max(S - tau, 0) V'.
inline Mat svt(const Mat &M, double tau) {
    detail::require(tau >= 0.0, "svt: threshold must be nonnegative");
    if (tau == 0.0)
        return M;
    Eigen::BDCSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw NumericalError("svt: SVD failed");
    Vec s = (svd.singularValues().array() - tau).max(0.0).matrix();
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// svt restricted to symmetric input, via an eigendecomposition: each
/// eigenvalue is soft-thresholded towards zero.
inline Mat svt_symmetric(const Mat &S, double tau) {
    detail::require(tau >= 0.0, "svt_symmetric: threshold must be nonnegative");
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.info() != Eigen::Success)
        throw NumericalError("svt_symmetric: eigendecomposition failed");
    Vec lam = es.eigenvalues();
    Vec shrunk = (lam.array().sign() * (lam.array().abs() - tau).max(0.0)).matrix();
    Mat out = es.eigenvectors() * shrunk.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

/// Euclidean projection onto {u : ||u||_1 <= radius} by the sort-and-threshold
/// rule: u = sign(v) max(|v| - theta, 0) with theta chosen so ||u||_1 = radius.
inline Vec project_l1_ball(const Vec &v, double radius) {
    detail::require(radius >= 0.0, "project_l1_ball: radius must be nonnegative");
    Vec a = v.cwiseAbs();
    if (a.sum() <= radius)
        return v;
    if (radius == 0.0)
        return Vec::Zero(v.size());
    std::vector<double> sorted(a.data(), a.data() + a.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cumsum += sorted[k];
        double t = (cumsum - radius) / static_cast<double>(k + 1);
        if (k + 1 == sorted.size() || sorted[k + 1] <= t) {
            theta = t;
            break;
        }
    }
    return (v.array().sign() * (a.array() - theta).max(0.0)).matrix();
}

} // namespace mlr
