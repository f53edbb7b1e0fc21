#pragma once

#include <mlr/core.hpp>

#include <cmath>
#include <utility>
#include <vector>

namespace mlr {

/// The residual map (K, g) -> r as an affine map on a flat coordinate vector
/// w = [svec(K); g], where svec stacks the upper triangle of K with
/// off-diagonal entries scaled by sqrt(2). With that scaling ||svec(K)|| =
/// ||K||_F, and r = Phi w - y^2 with row i of Phi equal to
/// [-svec(x_i x_i'), 2 y_i x_i'].
class LiftedOperator {
  public:
    explicit LiftedOperator(Index p) : p_(p) {
        detail::require(p >= 1, "LiftedOperator: dimension must be at least 1");
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i <= j; ++i)
                pairs_.emplace_back(i, j);
    }

    Index p() const { return p_; }
    /// Number of K coordinates, p(p+1)/2.
    Index dim_k() const { return static_cast<Index>(pairs_.size()); }
    /// Total coordinates, p(p+1)/2 + p.
    Index dim() const { return dim_k() + p_; }

    Vec svec(const Mat &K) const {
        Vec w(dim_k());
        for (Index k = 0; k < dim_k(); ++k) {
            auto [i, j] = pairs_[k];
            w(k) = i == j ? K(i, i) : std::sqrt(2.0) * 0.5 * (K(i, j) + K(j, i));
        }
        return w;
    }

    Mat smat(const Eigen::Ref<const Vec> &w) const {
        Mat K(p_, p_);
        for (Index k = 0; k < dim_k(); ++k) {
            auto [i, j] = pairs_[k];
            if (i == j) {
                K(i, i) = w(k);
            } else {
                K(i, j) = K(j, i) = w(k) / std::sqrt(2.0);
            }
        }
        return K;
    }

    Vec pack(const LiftedEstimate &est) const {
        Vec w(dim());
        w.head(dim_k()) = svec(est.K());
        w.tail(p_) = est.g();
        return w;
    }

    LiftedEstimate unpack(const Eigen::Ref<const Vec> &w) const { return {smat(w.head(dim_k())), w.tail(p_)}; }

    /// Rows Phi_i for the given design and responses.
    Mat features(const Mat &X, const Vec &y) const {
        detail::require(X.cols() == p_, "LiftedOperator: design has wrong column count");
        detail::require(X.rows() == y.size(), "LiftedOperator: y length differs from rows of X");
        Mat Phi(X.rows(), dim());
        const double r2 = std::sqrt(2.0);
        for (Index r = 0; r < X.rows(); ++r) {
            for (Index k = 0; k < dim_k(); ++k) {
                auto [i, j] = pairs_[k];
                double v = X(r, i) * X(r, j);
                Phi(r, k) = i == j ? -v : -r2 * v;
            }
            Phi.row(r).tail(p_) = 2.0 * y(r) * X.row(r);
        }
        return Phi;
    }

  private:
    Index p_;
    std::vector<std::pair<Index, Index>> pairs_;
};

} // namespace mlr
