#pragma once

#include <mlr/core.hpp>
#include <mlr/rng.hpp>
#include <mlr/synth.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mlr {

/// Entries uniform on {-1, +1}. Fourth moment 1, the case where the
/// paired-difference operator is blind to diagonal matrices. Offered only
/// for the isometry-failure demonstration, not as an estimation design.
struct RademacherDesign {};

using LabDesign = std::variant<GaussianDesign, BoundedSubgaussianDesign, RademacherDesign>;

inline Mat sample_lab_design(const LabDesign &design, Index n, Index p, Rng &rng) {
    if (std::holds_alternative<RademacherDesign>(design)) {
        Mat X(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j)
                X(i, j) = rng.rademacher();
        return X;
    }
    if (auto *b = std::get_if<BoundedSubgaussianDesign>(&design))
        return sample_design(*b, n, p, rng);
    return rng.normal_matrix(n, p);
}

/// E x^4 of one entry; `n` fixes the bound of the bounded design.
inline double lab_fourth_moment(const LabDesign &design, Index n) {
    if (std::holds_alternative<RademacherDesign>(design))
        return 1.0;
    if (auto *b = std::get_if<BoundedSubgaussianDesign>(&design))
        return design_fourth_moment(*b, n);
    return 3.0;
}

// ---------------------------------------------------------------- operators

/// Measurement operators of one half of the sample:
///   A(Z)_i = <x_i x_i', Z> / n_b
///   B(Z)_j = <x_{2j} x_{2j}' - x_{2j-1} x_{2j-1}', Z> / floor(n_b / 2)
///   D(z)_j = <e_{2j} x_{2j} - e_{2j-1} x_{2j-1}, z> / floor(n_b / 2)
/// with rows paired consecutively, (1, 2), (3, 4), ... in one-based terms.
class OperatorBundle {
  public:
    explicit OperatorBundle(Mat X, std::optional<Vec> e = std::nullopt) : X_(std::move(X)), e_(std::move(e)) {
        detail::require(X_.rows() >= 2, "OperatorBundle: needs at least two rows");
        if (e_)
            detail::require(e_->size() == X_.rows(), "OperatorBundle: noise length differs from rows");
    }

    /// Rows of `data` carrying label `label` (1 for beta1, 0 for beta2).
    static OperatorBundle from_dataset(const MixedDataset &data, int label) {
        MixedDataset part = data.subset_by_label(label);
        return OperatorBundle(part.X, part.e);
    }

    Index n() const { return X_.rows(); }
    Index pairs() const { return X_.rows() / 2; }
    const Mat &X() const { return X_; }

    Vec apply_A(const Mat &Z) const { return quadratic_forms(Z) / static_cast<double>(n()); }

    Vec apply_B(const Mat &Z) const {
        Vec q = quadratic_forms(Z);
        Vec out(pairs());
        for (Index j = 0; j < pairs(); ++j)
            out(j) = q(2 * j + 1) - q(2 * j);
        return out / static_cast<double>(pairs());
    }

    Vec apply_D(const Vec &z) const {
        detail::require(e_.has_value(), "OperatorBundle: D needs the noise record");
        Vec xz = X_ * z;
        Vec out(pairs());
        for (Index j = 0; j < pairs(); ++j)
            out(j) = (*e_)(2 * j + 1) * xz(2 * j + 1) - (*e_)(2 * j) * xz(2 * j);
        return out / static_cast<double>(pairs());
    }

  private:
    Vec quadratic_forms(const Mat &Z) const {
        detail::require(Z.rows() == X_.cols() && Z.cols() == X_.cols(), "OperatorBundle: Z has wrong shape");
        Mat XZ = X_ * Z;
        return (XZ.array() * X_.array()).rowwise().sum();
    }

    Mat X_;
    std::optional<Vec> e_;
};

/// U diag(s) V' with U, V orthonormal (QR of Gaussian matrices) and s uniform
/// on the simplex, scaled to unit Frobenius norm.
inline Mat random_low_rank(Index p, Index r, Rng &rng) {
    detail::require(r >= 1 && r <= p, "random_low_rank: rank must be in [1, p]");
    auto orthonormal = [&]() {
        Eigen::HouseholderQR<Mat> qr(rng.normal_matrix(p, r));
        return Mat(qr.householderQ() * Mat::Identity(p, r));
    };
    Mat U = orthonormal(), V = orthonormal();
    Vec s(r);
    for (Index i = 0; i < r; ++i)
        s(i) = -std::log(1.0 - rng.uniform()); // normalised exponentials are uniform on the simplex
    s /= s.sum();
    s /= s.norm();
    return U * s.asDiagonal() * V.transpose();
}

// -------------------------------------------------------------- isometry scan

enum class RipMode { matrix_only, with_noise };

struct RipOptions {
    RipMode mode = RipMode::matrix_only;
    /// Noise level of the e record in with_noise mode.
    double sigma = 1.0;
    /// Warn when n < oversampling * p * r.
    double oversampling = 20.0;
};

struct RipScanResult {
    double min_value = 0.0;
    double max_value = 0.0;
    int samples = 0;
    double ratio() const { return max_value > 0 ? min_value / max_value : 0.0; }
    bool min_positive() const { return min_value > 0.0; }
    std::vector<std::string> warnings;
};

/// Empirical range of ||B Z||_1 over random rank-r Z with ||Z||_F = 1, or of
/// ||B Z - D z||_1 over (Z, z) with ||Z||_F + sigma ||z|| = 1 in with_noise
/// mode. The whole sample is treated as one half.
inline RipScanResult rip_scan(const LabDesign &design, Index p, Index n, Index r, int num_samples,
                              std::uint64_t seed, const RipOptions &opt = {}) {
    detail::require(num_samples >= 1, "rip_scan: needs at least one sample");
    detail::require(n >= 2 && p >= 1, "rip_scan: invalid dimensions");
    RipScanResult out;
    if (static_cast<double>(n) < opt.oversampling * static_cast<double>(p * r))
        out.warnings.emplace_back("rip_scan: n is below the recommended oversampling of p * r");
    Rng design_rng(seed, design_stream), noise_rng(seed, noise_stream), z_rng(seed, 7);
    Mat X = sample_lab_design(design, n, p, design_rng);
    std::optional<Vec> e;
    if (opt.mode == RipMode::with_noise)
        e = opt.sigma * noise_rng.normal_vector(n);
    OperatorBundle ops(X, e);
    out.min_value = std::numeric_limits<double>::infinity();
    out.max_value = 0.0;
    for (int s = 0; s < num_samples; ++s) {
        Mat Z = random_low_rank(p, r, z_rng);
        double value;
        if (opt.mode == RipMode::with_noise) {
            Vec zv = z_rng.unit_vector(p) * std::abs(z_rng.normal());
            double scale = Z.norm() + opt.sigma * zv.norm();
            value = (ops.apply_B(Z / scale) - ops.apply_D(zv / scale)).lpNorm<1>();
        } else {
            value = ops.apply_B(Z).lpNorm<1>();
        }
        out.min_value = std::min(out.min_value, value);
        out.max_value = std::max(out.max_value, value);
    }
    out.samples = num_samples;
    return out;
}

struct BlindSpotResult {
    /// ||B Z||_1 for Z = diag(1, -1, 0, ...) / sqrt(2).
    double diagonal = 0.0;
    /// ||B Z||_1 for Z = (e1 e2' + e2 e1') / sqrt(2), same Frobenius norm.
    double off_diagonal = 0.0;
};

/// With Rademacher rows every x_i x_i' has unit diagonal, so B annihilates
/// traceless diagonal matrices while off-diagonal matrices remain visible.
inline BlindSpotResult rademacher_blind_spot(Index p, Index n, std::uint64_t seed) {
    detail::require(p >= 2, "rademacher_blind_spot: needs p >= 2");
    Rng rng(seed, design_stream);
    OperatorBundle ops(sample_lab_design(RademacherDesign{}, n, p, rng));
    Mat Zd = Mat::Zero(p, p), Zo = Mat::Zero(p, p);
    Zd(0, 0) = 1.0 / std::sqrt(2.0);
    Zd(1, 1) = -1.0 / std::sqrt(2.0);
    Zo(0, 1) = Zo(1, 0) = 1.0 / std::sqrt(2.0);
    return {ops.apply_B(Zd).lpNorm<1>(), ops.apply_B(Zo).lpNorm<1>()};
}

// ----------------------------------------------------------- moment checks

struct MonteCarloEstimate {
    double empirical = 0.0;
    double analytic = 0.0;
    double std_error = 0.0;
    /// |empirical - analytic| <= 5 standard errors.
    bool within() const { return std::abs(empirical - analytic) <= 5.0 * std_error; }
};

namespace detail {
/// Running mean and standard error.
struct MeanAccumulator {
    long long count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x) {
        ++count;
        double d = x - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (x - mean);
    }
    double std_error() const {
        if (count < 2)
            return 0.0;
        return std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
    }
};
} // namespace detail

/// Monte-Carlo E<B, Z>^2 for B = x2 x2' - x1 x1' against
/// 4 ||Z||_F^2 + 2 (mu - 3) ||diag Z||^2, evaluated at the symmetric part of Z
/// (the only part the quadratic forms see). `n_reference` fixes the entry
/// bound of the bounded design.
inline MonteCarloEstimate second_moment_identity_check(const LabDesign &design, const Mat &Z, long long trials,
                                                       std::uint64_t seed, Index n_reference = 1000) {
    detail::require(trials >= 1, "second_moment_identity_check: trials must be positive");
    detail::require(Z.rows() == Z.cols(), "second_moment_identity_check: Z must be square");
    const Index p = Z.rows();
    const Mat S = 0.5 * (Z + Z.transpose());
    const double mu = lab_fourth_moment(design, n_reference);
    MonteCarloEstimate out;
    out.analytic = 4.0 * S.squaredNorm() + 2.0 * (mu - 3.0) * S.diagonal().squaredNorm();
    Rng rng(seed, design_stream);
    detail::MeanAccumulator acc;
    for (long long t = 0; t < trials; ++t) {
        Mat x = sample_lab_design(design, 2, p, rng);
        double q2 = x.row(1).dot(S * x.row(1).transpose());
        double q1 = x.row(0).dot(S * x.row(0).transpose());
        acc.add((q2 - q1) * (q2 - q1));
    }
    out.empirical = acc.mean;
    out.std_error = acc.std_error();
    return out;
}

struct InequalityCheck {
    double empirical = 0.0;
    double std_error = 0.0;
    /// Exact Gaussian expectation of the left side.
    double exact = 0.0;
    double rhs = 0.0;
    bool holds_exact() const { return exact <= rhs * (1.0 + 1e-12) + 1e-15; }
    bool holds_empirical() const { return empirical <= rhs + 5.0 * std_error; }
};

struct GaussianMomentReport {
    /// E (x'a)^2 (x'b)^2 against ||a||^2 ||b||^2 + 2 <a, b>^2.
    MonteCarloEstimate identity;
    bool equal_norms = false;
    /// E[((x'a)^2 - (x'b)^2) (x'a)^2] <= 2 ||a||^2 ||a - b||^2; equal norms only.
    std::optional<InequalityCheck> second;
    /// E((x'a)^2 - (x'b)^2)^2 <= ||a - b||^4; equal norms only.
    std::optional<InequalityCheck> third;
};

/// Gaussian fourth-moment identity and the two inequalities derived from it.
/// The third inequality fails whenever <a, b> > 0; the exact expectation is
/// ||a - b||^2 ||a + b||^2 for equal norms, reported in `third->exact`.
inline GaussianMomentReport gaussian_moment_check(const Vec &a, const Vec &b, long long trials, std::uint64_t seed) {
    detail::require(a.size() == b.size() && a.size() >= 1, "gaussian_moment_check: dimension mismatch");
    detail::require(trials >= 1, "gaussian_moment_check: trials must be positive");
    const double na = a.squaredNorm(), nb = b.squaredNorm(), ab = a.dot(b);
    GaussianMomentReport rep;
    rep.identity.analytic = na * nb + 2.0 * ab * ab;
    rep.equal_norms = std::abs(na - nb) <= 1e-12 * std::max(na, nb);
    Rng rng(seed, design_stream);
    detail::MeanAccumulator id, s2, s3;
    Vec x(a.size());
    for (long long t = 0; t < trials; ++t) {
        for (Index j = 0; j < x.size(); ++j)
            x(j) = rng.normal();
        double pa = x.dot(a), pb = x.dot(b);
        double qa = pa * pa, qb = pb * pb;
        id.add(qa * qb);
        s2.add((qa - qb) * qa);
        s3.add((qa - qb) * (qa - qb));
    }
    rep.identity.empirical = id.mean;
    rep.identity.std_error = id.std_error();
    if (rep.equal_norms) {
        const double diff2 = (a - b).squaredNorm();
        InequalityCheck c2;
        c2.empirical = s2.mean;
        c2.std_error = s2.std_error();
        c2.exact = 3.0 * na * na - na * nb - 2.0 * ab * ab;
        c2.rhs = 2.0 * na * diff2;
        rep.second = c2;
        InequalityCheck c3;
        c3.empirical = s3.mean;
        c3.std_error = s3.std_error();
        c3.exact = 3.0 * na * na + 3.0 * nb * nb - 2.0 * (na * nb + 2.0 * ab * ab);
        c3.rhs = diff2 * diff2;
        rep.third = c3;
    }
    return rep;
}

// ------------------------------------------------------------- KL of mixtures

/// Upper bound on KL(Q_u || Q_v) for Q_a = N(a, s^2)/2 + N(-a, s^2)/2:
/// (u^2 - v^2) u^2 / (2 s^4) + v^3 max(0, v - u) (u^4 + 6 u^2 s^2 + 3 s^4) / (2 s^8).
inline double kl_mixture_bound(double u, double v, double sigma) {
    const double s2 = sigma * sigma, s4 = s2 * s2;
    return (u * u - v * v) * u * u / (2.0 * s4) +
           v * v * v * std::max(0.0, v - u) * (u * u * u * u + 6.0 * u * u * s2 + 3.0 * s4) / (2.0 * s4 * s4);
}

namespace detail {

/// log of (phi((x-a)/s) + phi((x+a)/s)) / 2 up to the common constant.
inline double log_mixture_kernel(double x, double a, double sigma) {
    double p = -(x - a) * (x - a) / (2.0 * sigma * sigma);
    double q = -(x + a) * (x + a) / (2.0 * sigma * sigma);
    double m = std::max(p, q);
    return m + std::log1p(std::exp(-std::abs(p - q))) - std::numbers::ln2;
}

template <class F>
double simpson_recursive(const F &f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                         int depth, bool &ok) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double diff = left + right - whole;
    if (std::abs(diff) <= 15.0 * tol)
        return left + right + diff / 15.0;
    if (depth <= 0) {
        ok = false;
        return left + right + diff / 15.0;
    }
    return simpson_recursive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
           simpson_recursive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}

} // namespace detail

/// Adaptive Simpson integration of f over [a, b] to absolute tolerance `tol`,
/// after an initial split into `panels` equal pieces. Throws NumericalError
/// if the recursion depth limit is reached.
template <class F>
double adaptive_simpson(const F &f, double a, double b, double tol, int panels = 32, int max_depth = 50) {
    double total = 0.0;
    bool ok = true;
    const double h = (b - a) / panels;
    for (int k = 0; k < panels; ++k) {
        double lo = a + k * h, hi = lo + h, mid = 0.5 * (lo + hi);
        double flo = f(lo), fmid = f(mid), fhi = f(hi);
        double whole = h / 6.0 * (flo + 4.0 * fmid + fhi);
        total += detail::simpson_recursive(f, lo, hi, flo, fmid, fhi, whole, tol / panels, max_depth, ok);
    }
    if (!ok)
        throw NumericalError("adaptive_simpson: quadrature did not converge");
    return total;
}

/// KL(Q_u || Q_v) by adaptive Simpson over [-(max(u,v) + 10 s), max(u,v) + 10 s].
inline double kl_mixture_numeric(double u, double v, double sigma, double tol = 1e-10) {
    detail::require(u >= 0 && v >= 0 && sigma > 0, "kl_mixture_numeric: needs u, v >= 0 and sigma > 0");
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    auto integrand = [&](double x) {
        double lu = detail::log_mixture_kernel(x, u, sigma);
        double lv = detail::log_mixture_kernel(x, v, sigma);
        return norm * std::exp(lu) * (lu - lv);
    };
    const double L = std::max(u, v) + 10.0 * sigma;
    // The integrand is even in x.
    return 2.0 * adaptive_simpson(integrand, 0.0, L, 0.5 * tol);
}

struct KlRow {
    double u = 0.0;
    double v = 0.0;
    double sigma = 0.0;
    double numeric = 0.0;
    double bound = 0.0;
    bool holds = false;
};

/// Compares quadrature KL with kl_mixture_bound on a grid; a cell holds when
/// numeric <= bound + slack.
inline std::vector<KlRow> kl_mixture_bound_check(const std::vector<double> &u_grid, const std::vector<double> &v_grid,
                                                 double sigma, double tol = 1e-10, double slack = 1e-8) {
    std::vector<KlRow> rows;
    for (double u : u_grid)
        for (double v : v_grid) {
            KlRow r{u, v, sigma, kl_mixture_numeric(u, v, sigma, tol), kl_mixture_bound(u, v, sigma), false};
            r.holds = r.numeric <= r.bound + slack;
            rows.push_back(r);
        }
    return rows;
}

// ------------------------------------------------------------ Fano accounting

namespace detail {
/// Probabilists' Gauss-Hermite rule: nodes t and weights w with
/// sum w f(t) ~ E f(Z), Z ~ N(0, 1). Golub-Welsch.
inline std::pair<Vec, Vec> gauss_hermite(int m) {
    Mat T = Mat::Zero(m, m);
    for (int k = 1; k < m; ++k)
        T(k, k - 1) = T(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Mat> es(T);
    Vec w = es.eigenvectors().row(0).transpose().array().square();
    return {es.eigenvalues(), w / w.sum()};
}
} // namespace detail

struct FanoReport {
    std::size_t members = 0;
    double log_m = 0.0;
    /// Upper bound on the mutual information between the member index and the sample.
    double information_bound = 0.0;
    bool information_small() const { return information_bound <= 0.25 * log_m; }
    /// 1 - (I + log 2) / log M, the Fano lower bound on the testing error.
    double testing_error_bound = 0.0;
    double separation = 0.0;
    /// separation / 2, the rho lower bound the construction targets.
    double predicted_lower_bound = 0.0;
    /// (separation / 2) * max(0, testing_error_bound).
    double fano_lower_bound = 0.0;
    /// Fewer than two members: no testing problem.
    bool degenerate = false;
};

/// Expected per-sample KL between members i and j of an antipodal packing with
/// balanced labels, Gaussian design and noise sigma: each sample's response
/// given x is Q_{|x'beta|}. Takes the smaller of the mixture bound (averaged
/// over x by Gauss-Hermite) and the labelled-regression bound
/// min_s ||beta_i - s beta_j||^2 / (2 sigma^2); both dominate the true KL.
inline double packing_pair_kl_bound(const Vec &bi, const Vec &bj, double sigma, int nodes = 96) {
    const double sii = bi.squaredNorm(), sjj = bj.squaredNorm(), sij = bi.dot(bj);
    const double l11 = std::sqrt(sii);
    const double l21 = l11 > 0 ? sij / l11 : 0.0;
    const double l22 = std::sqrt(std::max(0.0, sjj - l21 * l21));
    auto [t, w] = detail::gauss_hermite(nodes);
    double mixture = 0.0;
    for (int a = 0; a < nodes; ++a)
        for (int b = 0; b < nodes; ++b) {
            double u = std::abs(l11 * t(a));
            double v = std::abs(l21 * t(a) + l22 * t(b));
            mixture += w(a) * w(b) * kl_mixture_bound(u, v, sigma);
        }
    const double labelled = std::min((bi - bj).squaredNorm(), (bi + bj).squaredNorm()) / (2.0 * sigma * sigma);
    return std::min(std::max(mixture, 0.0), labelled);
}

/// I(theta; X, y) <= (1/M^2) sum_{i,j} n KL_ij with KL_ij from
/// packing_pair_kl_bound; reports whether I <= log(M) / 4.
inline FanoReport fano_accounting(const std::vector<RegressorPair> &packing, double separation, double sigma, Index n) {
    detail::require(sigma > 0 && n >= 1, "fano_accounting: needs sigma > 0 and n >= 1");
    FanoReport rep;
    rep.members = packing.size();
    rep.separation = separation;
    rep.predicted_lower_bound = 0.5 * separation;
    if (packing.size() < 2) {
        rep.degenerate = true;
        return rep;
    }
    const double M = static_cast<double>(packing.size());
    rep.log_m = std::log(M);
    double total = 0.0;
    for (std::size_t i = 0; i < packing.size(); ++i)
        for (std::size_t j = 0; j < packing.size(); ++j)
            if (i != j)
                total += packing_pair_kl_bound(packing[i].beta1(), packing[j].beta1(), sigma);
    rep.information_bound = static_cast<double>(n) * total / (M * M);
    rep.testing_error_bound = 1.0 - (rep.information_bound + std::numbers::ln2) / rep.log_m;
    rep.fano_lower_bound = rep.predicted_lower_bound * std::max(0.0, rep.testing_error_bound);
    return rep;
}

inline FanoReport fano_accounting(const PackingInstance &inst) {
    return fano_accounting(inst.pairs, inst.separation, inst.sigma, inst.n);
}

} // namespace mlr
