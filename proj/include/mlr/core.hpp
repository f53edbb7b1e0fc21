#pragma once

#include <mlr/errors.hpp>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

namespace mlr {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Labels = Eigen::VectorXi;

/// The two regressors of a two-component mixture. Identity is up to swap:
/// compare pairs with rho_metric, never with ==.
class RegressorPair {
  public:
    RegressorPair(Vec beta1, Vec beta2) : beta1_(std::move(beta1)), beta2_(std::move(beta2)) {
        detail::require(beta1_.size() >= 1, "RegressorPair: dimension must be at least 1");
        detail::require(beta1_.size() == beta2_.size(), "RegressorPair: components differ in dimension");
        detail::require(beta1_.allFinite() && beta2_.allFinite(), "RegressorPair: non-finite entry");
    }

    Index dim() const { return beta1_.size(); }
    const Vec &beta1() const { return beta1_; }
    const Vec &beta2() const { return beta2_; }
    const Vec &beta(int component) const { return component == 1 ? beta1_ : beta2_; }

    /// beta1 - beta2.
    Vec separation() const { return beta1_ - beta2_; }
    /// ||beta1|| + ||beta2||, the signal scale.
    double gamma() const { return beta1_.norm() + beta2_.norm(); }
    RegressorPair swapped() const { return {beta2_, beta1_}; }

  private:
    Vec beta1_;
    Vec beta2_;
};

/// The lifted parametrisation (K, g). K is symmetrised on construction.
class LiftedEstimate {
  public:
    LiftedEstimate(const Mat &K, Vec g) : K_(symmetrized(K)), g_(std::move(g)) {
        detail::require(K.rows() == g_.size(), "LiftedEstimate: K and g differ in dimension");
    }

    static LiftedEstimate zero(Index p) { return {Mat::Zero(p, p), Vec::Zero(p)}; }

    Index dim() const { return g_.size(); }
    const Mat &K() const { return K_; }
    const Vec &g() const { return g_; }

  private:
    static Mat symmetrized(const Mat &K) {
        detail::require(K.rows() == K.cols(), "LiftedEstimate: K must be square");
        detail::require(K.rows() >= 1, "LiftedEstimate: dimension must be at least 1");
        return 0.5 * (K + K.transpose());
    }

    Mat K_;
    Vec g_;
};

struct DatasetMeta {
    std::string model = "mixed";
    std::uint64_t seed = 0;
    double sigma = 0.0;
    /// Generating pair, when known (synthetic data).
    std::optional<RegressorPair> truth;
};

/// Design X (n x p), responses y, and optionally the hidden labels
/// (1 means the row came from beta1, 0 from beta2) and the noise record.
struct MixedDataset {
    Mat X;
    Vec y;
    std::optional<Labels> z;
    std::optional<Vec> e;
    DatasetMeta meta;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    Index n1() const { return z ? z->sum() : 0; }
    Index n2() const { return z ? n() - z->sum() : 0; }

    /// Throws ConfigError on inconsistent dimensions or invalid labels.
    void validate() const {
        detail::require(X.rows() >= 1 && X.cols() >= 1, "MixedDataset: empty design");
        detail::require(y.size() == X.rows(), "MixedDataset: y length differs from rows of X");
        if (z) {
            detail::require(z->size() == X.rows(), "MixedDataset: z length differs from rows of X");
            detail::require(((z->array() == 0) || (z->array() == 1)).all(), "MixedDataset: labels must be 0 or 1");
        }
        if (e)
            detail::require(e->size() == X.rows(), "MixedDataset: e length differs from rows of X");
        if (meta.truth)
            detail::require(meta.truth->dim() == X.cols(), "MixedDataset: truth dimension differs from p");
    }

    /// Largest |y_i - x_i'beta_{b(i)} - e_i|; requires z, e and truth.
    double reconstruction_error() const {
        detail::require(z && e && meta.truth, "reconstruction_error: needs labels, noise and truth");
        const auto &t = *meta.truth;
        double worst = 0.0;
        for (Index i = 0; i < n(); ++i) {
            const Vec &b = (*z)(i) == 1 ? t.beta1() : t.beta2();
            worst = std::max(worst, std::abs(y(i) - X.row(i).dot(b) - (*e)(i)));
        }
        return worst;
    }

    /// Rows whose label equals `label`.
    MixedDataset subset_by_label(int label) const {
        detail::require(z.has_value(), "subset_by_label: labels not recorded");
        Index count = (z->array() == label).count();
        MixedDataset out;
        out.X.resize(count, p());
        out.y.resize(count);
        if (e)
            out.e = Vec(count);
        for (Index i = 0, k = 0; i < n(); ++i) {
            if ((*z)(i) != label)
                continue;
            out.X.row(k) = X.row(i);
            out.y(k) = y(i);
            if (e)
                (*out.e)(k) = (*e)(i);
            ++k;
        }
        out.meta = meta;
        return out;
    }
};

/// rho together with the pairing that attains it.
struct ErrorBreakdown {
    double rho = 0.0;
    /// Errors of estimate components 1 and 2 against their matched truth.
    double per_beta[2] = {0.0, 0.0};
    /// True when estimate component 1 is matched to reference component 2.
    bool swapped = false;
};

inline LiftedEstimate lift(const RegressorPair &pair) {
    const Vec &b1 = pair.beta1();
    const Vec &b2 = pair.beta2();
    Mat K = 0.5 * (b1 * b2.transpose() + b2 * b1.transpose());
    return {K, 0.5 * (b1 + b2)};
}

/// g g' - K. For an exact lift this is (beta1-beta2)(beta1-beta2)'/4.
inline Mat j_matrix(const LiftedEstimate &est) {
    Mat J = est.g() * est.g().transpose() - est.K();
    return 0.5 * (J + J.transpose());
}

/// Minimum over both pairings of the summed l2 errors. Ties resolve to the
/// identity pairing.
inline ErrorBreakdown rho_breakdown(const RegressorPair &estimate, const RegressorPair &reference) {
    detail::require(estimate.dim() == reference.dim(), "rho_metric: dimension mismatch");
    double d11 = (estimate.beta1() - reference.beta1()).norm();
    double d22 = (estimate.beta2() - reference.beta2()).norm();
    double d12 = (estimate.beta1() - reference.beta2()).norm();
    double d21 = (estimate.beta2() - reference.beta1()).norm();
    ErrorBreakdown out;
    if (d12 + d21 < d11 + d22) {
        out.swapped = true;
        out.per_beta[0] = d12;
        out.per_beta[1] = d21;
    } else {
        out.per_beta[0] = d11;
        out.per_beta[1] = d22;
    }
    out.rho = out.per_beta[0] + out.per_beta[1];
    return out;
}

inline double rho_metric(const RegressorPair &a, const RegressorPair &b) { return rho_breakdown(a, b).rho; }

/// ||beta1 - beta2||^2 / (||beta1||^2 + ||beta2||^2), in [0, 2].
inline double alpha(const RegressorPair &pair) {
    double denom = pair.beta1().squaredNorm() + pair.beta2().squaredNorm();
    if (denom == 0.0)
        throw ConfigError("alpha: undefined for a pair of zero vectors");
    return pair.separation().squaredNorm() / denom;
}

/// r_i = -x_i'K x_i + 2 y_i x_i'g - y_i^2.
inline Vec residuals(const LiftedEstimate &est, const MixedDataset &data) {
    detail::require(est.dim() == data.p(), "residuals: dimension mismatch");
    Mat XK = data.X * est.K();
    Vec quad = (XK.array() * data.X.array()).rowwise().sum();
    Vec lin = data.X * est.g();
    return (-quad.array() + 2.0 * data.y.array() * lin.array() - data.y.array().square()).matrix();
}

/// Nuclear norm of a symmetric matrix (sum of absolute eigenvalues).
inline double nuclear_norm_symmetric(const Mat &S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

} // namespace mlr
