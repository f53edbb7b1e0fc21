#pragma once

#include <mlr/core.hpp>
#include <mlr/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace mlr {

// ---------------------------------------------------------------- models

enum class NoiseDistribution { gaussian, bounded_subgaussian };

struct NoNoise {};

/// i.i.d. noise with mean 0 and variance sigma^2. The bounded variant draws a
/// normal truncated at `bound` standard deviations, rescaled to unit variance.
struct StochasticNoise {
    double sigma = 0.0;
    NoiseDistribution distribution = NoiseDistribution::gaussian;
    double bound = 3.0;
};

/// Worst-case direction for a pair: e = -s (2z - 1) o (X v) with v the unit
/// separation direction, scaled so that ||e|| equals the budget. Rows from
/// beta1 are pulled towards beta2 and vice versa.
struct AlignedCancel {};

struct AdversarialNoise {
    double budget = 0.0;
    std::variant<AlignedCancel, Vec> strategy = AlignedCancel{};
};

using NoiseModel = std::variant<NoNoise, StochasticNoise, AdversarialNoise>;

struct GaussianDesign {};

/// Entries bounded by c sqrt(log n): normals beyond the (pre-scaled) bound are
/// resampled and the result rescaled to exact unit variance.
struct BoundedSubgaussianDesign {
    double c = 2.0;
};

using DesignModel = std::variant<GaussianDesign, BoundedSubgaussianDesign>;

struct BalancedBernoulli {};
struct FixedCounts {
    Index n1 = 0;
    Index n2 = 0;
};
using LabelModel = std::variant<BalancedBernoulli, FixedCounts>;

/// Stream ids, so that design, labels and noise are independent of each other.
enum RngStream : std::uint64_t { design_stream = 0, label_stream = 1, noise_stream = 2, packing_stream = 3, sign_stream = 4 };

// ------------------------------------------------------ truncated normal

namespace detail {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Second moment of a standard normal conditioned on |z| <= a.
inline double truncated_normal_variance(double a) {
    double mass = std::erf(a / std::numbers::sqrt2);
    return 1.0 - 2.0 * a * normal_pdf(a) / mass;
}

/// Fourth moment of a standard normal conditioned on |z| <= a.
inline double truncated_normal_fourth(double a) {
    double mass = std::erf(a / std::numbers::sqrt2);
    return 3.0 * truncated_normal_variance(a) - 2.0 * a * a * a * normal_pdf(a) / mass;
}

/// Returns the truncation point t such that z / sd(t), z ~ N(0,1) | |z| <= t,
/// has unit variance and support [-bound, bound]. Needs bound > sqrt(3), the
/// uniform-distribution limit.
inline double unit_variance_truncation(double bound) {
    if (!(bound > std::sqrt(3.0)))
        throw ConfigError("bounded sub-Gaussian: bound must exceed sqrt(3) for unit variance");
    double lo = 1e-6, hi = bound;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid / std::sqrt(truncated_normal_variance(mid)) < bound)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double sample_truncated_unit(Rng &rng, double t, double sd) {
    for (;;) {
        double z = rng.normal();
        if (std::abs(z) <= t)
            return z / sd;
    }
}

} // namespace detail

inline double design_bound(const BoundedSubgaussianDesign &d, Index n) {
    return d.c * std::sqrt(std::log(static_cast<double>(std::max<Index>(n, 2))));
}

/// E x^4 for one design entry.
inline double design_fourth_moment(const DesignModel &design, Index n) {
    if (auto *b = std::get_if<BoundedSubgaussianDesign>(&design)) {
        double t = detail::unit_variance_truncation(design_bound(*b, n));
        double var = detail::truncated_normal_variance(t);
        return detail::truncated_normal_fourth(t) / (var * var);
    }
    return 3.0;
}

inline Mat sample_design(const DesignModel &design, Index n, Index p, Rng &rng) {
    if (auto *b = std::get_if<BoundedSubgaussianDesign>(&design)) {
        double t = detail::unit_variance_truncation(design_bound(*b, n));
        double sd = std::sqrt(detail::truncated_normal_variance(t));
        Mat X(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j)
                X(i, j) = detail::sample_truncated_unit(rng, t, sd);
        return X;
    }
    return rng.normal_matrix(n, p);
}

inline Labels sample_labels(const LabelModel &model, Index n, Rng &rng) {
    Labels z(n);
    if (auto *f = std::get_if<FixedCounts>(&model)) {
        if (f->n1 < 0 || f->n2 < 0 || f->n1 + f->n2 != n)
            throw ConfigError("gen_mixed: fixed label counts must be nonnegative and sum to n");
        for (Index i = 0; i < n; ++i)
            z(i) = i < f->n1 ? 1 : 0;
        // Fisher-Yates with an explicit index draw keeps the permutation
        // independent of library shuffle implementations.
        for (Index i = n - 1; i > 0; --i) {
            Index j = static_cast<Index>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(z(i), z(j));
        }
        return z;
    }
    for (Index i = 0; i < n; ++i)
        z(i) = rng.bernoulli(0.5) ? 1 : 0;
    return z;
}

/// Draws a stochastic noise vector, or validates a custom adversarial one.
/// Aligned-cancel needs the labels and the pair, so it is built in gen_mixed.
inline Vec sample_noise(const NoiseModel &noise, Index n, Rng &rng) {
    if (auto *s = std::get_if<StochasticNoise>(&noise)) {
        detail::require(s->sigma >= 0, "noise: sigma must be nonnegative");
        Vec e(n);
        if (s->distribution == NoiseDistribution::bounded_subgaussian) {
            double t = detail::unit_variance_truncation(s->bound);
            double sd = std::sqrt(detail::truncated_normal_variance(t));
            for (Index i = 0; i < n; ++i)
                e(i) = s->sigma * detail::sample_truncated_unit(rng, t, sd);
        } else {
            for (Index i = 0; i < n; ++i)
                e(i) = s->sigma * rng.normal();
        }
        return e;
    }
    if (auto *a = std::get_if<AdversarialNoise>(&noise)) {
        detail::require(a->budget >= 0, "noise: adversarial budget must be nonnegative");
        if (auto *custom = std::get_if<Vec>(&a->strategy)) {
            detail::require(custom->size() == n, "noise: custom vector has wrong length");
            detail::require(custom->norm() <= a->budget * (1.0 + 1e-9), "noise: custom vector exceeds the budget");
            return *custom;
        }
        throw ConfigError("noise: aligned-cancel needs a regressor pair");
    }
    return Vec::Zero(n);
}

// --------------------------------------------------------------- mixed data

inline Vec aligned_cancel_noise(const RegressorPair &pair, const Mat &X, const Labels &z, double budget) {
    Vec v = pair.separation();
    if (v.norm() == 0.0) {
        v = Vec::Zero(pair.dim());
        v(0) = 1.0;
    }
    v.normalize();
    Vec raw = -((2 * z.array() - 1).cast<double>() * (X * v).array()).matrix();
    double nr = raw.norm();
    return nr > 0 ? Vec(raw * (budget / nr)) : Vec(Vec::Zero(X.rows()));
}

/// y_i = x_i'beta_{b(i)} + e_i with labels, design and noise drawn from
/// independent streams of `seed`.
inline MixedDataset gen_mixed(const RegressorPair &pair, Index n, const LabelModel &labels, const DesignModel &design,
                              const NoiseModel &noise, std::uint64_t seed) {
    detail::require(n >= 1, "gen_mixed: n must be at least 1");
    const Index p = pair.dim();
    Rng design_rng(seed, design_stream), label_rng(seed, label_stream), noise_rng(seed, noise_stream);
    MixedDataset d;
    d.X = sample_design(design, n, p, design_rng);
    d.z = sample_labels(labels, n, label_rng);
    const auto *adv = std::get_if<AdversarialNoise>(&noise);
    if (adv && std::holds_alternative<AlignedCancel>(adv->strategy)) {
        detail::require(adv->budget >= 0, "gen_mixed: adversarial budget must be nonnegative");
        d.e = aligned_cancel_noise(pair, d.X, *d.z, adv->budget);
    } else {
        d.e = sample_noise(noise, n, noise_rng);
    }
    d.y.resize(n);
    for (Index i = 0; i < n; ++i)
        d.y(i) = d.X.row(i).dot((*d.z)(i) == 1 ? pair.beta1() : pair.beta2()) + (*d.e)(i);

    d.meta.seed = seed;
    d.meta.truth = pair;
    if (auto *s = std::get_if<StochasticNoise>(&noise)) {
        d.meta.sigma = s->sigma;
        d.meta.model = s->distribution == NoiseDistribution::gaussian ? "mixed-gaussian" : "mixed-bounded";
    } else if (adv) {
        d.meta.model = std::holds_alternative<AlignedCancel>(adv->strategy) ? "mixed-aligned-cancel" : "mixed-custom";
    } else {
        d.meta.model = "mixed-noiseless";
    }
    return d;
}

// ------------------------------------------------------ adversarial witness

struct AdversarialPair {
    MixedDataset first;  ///< theta1 = (g v / 2, -g v / 2), no noise
    MixedDataset second; ///< theta2 = (g v / 2 + d v, -g v / 2 - d v), cancelling noise
};

/// Two instances that share (X, y) exactly although their regressor pairs are
/// 2 delta apart in rho: the second instance's noise -delta (2z - 1) o (X v)
/// cancels the extra separation. y of the second instance is the observed y
/// of the first, so the two are bit-identical.
inline AdversarialPair gen_adversarial_cancel(const Vec &v, double gamma_lo, double delta, Index n,
                                              std::uint64_t seed) {
    detail::require(std::abs(v.norm() - 1.0) <= 1e-9, "gen_adversarial_cancel: v must be a unit vector");
    detail::require(gamma_lo > 0, "gen_adversarial_cancel: gamma must be positive");
    detail::require(delta >= 0, "gen_adversarial_cancel: delta must be nonnegative");
    detail::require(n >= 1, "gen_adversarial_cancel: n must be at least 1");
    Rng design_rng(seed, design_stream), label_rng(seed, label_stream);
    AdversarialPair out;
    MixedDataset &a = out.first;
    a.X = design_rng.normal_matrix(n, v.size());
    a.z = sample_labels(BalancedBernoulli{}, n, label_rng);
    const Vec sign = (2 * a.z->array() - 1).cast<double>().matrix();
    const Vec Xv = a.X * v;
    a.y = (0.5 * gamma_lo) * sign.cwiseProduct(Xv);
    a.e = Vec::Zero(n);
    a.meta.model = "adversarial-cancel-first";
    a.meta.seed = seed;
    a.meta.truth = RegressorPair(0.5 * gamma_lo * v, -0.5 * gamma_lo * v);

    MixedDataset &b = out.second;
    b.X = a.X;
    b.z = a.z;
    b.y = a.y;
    b.e = -delta * sign.cwiseProduct(Xv);
    b.meta.model = "adversarial-cancel-second";
    b.meta.seed = seed;
    b.meta.truth = RegressorPair((0.5 * gamma_lo + delta) * v, -(0.5 * gamma_lo + delta) * v);
    return out;
}

// ----------------------------------------------------------------- packings

enum class SnrRegime { high, medium, low };

inline const char *to_string(SnrRegime r) {
    switch (r) {
    case SnrRegime::high: return "high-snr";
    case SnrRegime::medium: return "medium-snr";
    case SnrRegime::low: return "low-snr";
    }
    return "unknown";
}

struct PackingInstance {
    SnrRegime regime = SnrRegime::high;
    Index p = 0;
    Index n = 0;
    double sigma = 0.0;
    double kappa = 0.0;
    double c0 = 0.25;
    double tau = 0.0;
    double kappa0 = 0.0;
    /// Guaranteed lower bound on rho between distinct members.
    double separation = 0.0;
    /// Binary codewords of length p - 1, one per member.
    std::vector<std::vector<int>> codebook;
    /// Members theta_i = (beta_i, -beta_i).
    std::vector<RegressorPair> pairs;
    Index sampled_index = 0;
    MixedDataset sample;
};

/// Greedy random Varshamov-Gilbert codebook: keep random words whose Hamming
/// distance to every kept word and to its complement is at least
/// ceil(len / 16); stop at 2^ceil(len / 16) words.
inline std::vector<std::vector<int>> greedy_codebook(Index len, Rng &rng, int max_rejections = 100000) {
    const Index dmin = (len + 15) / 16;
    const std::size_t target = std::size_t{1} << std::min<Index>(dmin, 20);
    std::vector<std::vector<int>> book;
    int rejections = 0;
    while (book.size() < target) {
        std::vector<int> w(static_cast<std::size_t>(len));
        for (auto &b : w)
            b = rng.bernoulli(0.5) ? 1 : 0;
        bool ok = true;
        for (const auto &k : book) {
            Index h = 0;
            for (Index j = 0; j < len; ++j)
                h += w[static_cast<std::size_t>(j)] != k[static_cast<std::size_t>(j)];
            if (h < dmin || len - h < dmin) {
                ok = false;
                break;
            }
        }
        if (ok) {
            book.push_back(std::move(w));
        } else if (++rejections > max_rejections) {
            throw NumericalError("greedy_codebook: too many rejections");
        }
    }
    return book;
}

/// Packing of antipodal pairs (beta_i, -beta_i) with
/// beta_i = kappa0 e_p + sum_j (2 xi_i(j) - 1) tau e_j over codewords xi_i:
///   high:   tau = 2 c0 sigma / sqrt(n),             kappa0^2 = kappa^2 - (p-1) tau^2
///   medium: tau = 2 c0 (sigma^2 / kappa) / sqrt(n), kappa0^2 = kappa^2 - (p-1) tau^2
///   low:    tau = 2 c0 sigma (p/n)^(1/4) / sqrt(p-1), kappa0 = 0
/// kappa is half the lower bound on ||beta1|| + ||beta2||. Norms and pairwise
/// separations are verified after construction. Also samples one member and a
/// Gaussian dataset (balanced labels, noise sigma) from it.
inline PackingInstance gen_packing_instance(SnrRegime regime, Index p, Index n, double sigma, double kappa,
                                            std::uint64_t seed, double c0 = 0.25) {
    detail::require(p >= 17, "gen_packing_instance: p must be at least 17");
    detail::require(n >= 1 && sigma > 0 && kappa > 0 && c0 > 0, "gen_packing_instance: invalid parameters");
    PackingInstance inst;
    inst.regime = regime;
    inst.p = p;
    inst.n = n;
    inst.sigma = sigma;
    inst.kappa = kappa;
    inst.c0 = c0;
    const double nd = static_cast<double>(n);
    const double pm1 = static_cast<double>(p - 1);
    auto fail = [&](const std::string &why) {
        std::ostringstream msg;
        msg << "gen_packing_instance (" << to_string(regime) << "): kappa=" << kappa << " outside admissible range: "
            << why;
        throw ConfigError(msg.str());
    };
    switch (regime) {
    case SnrRegime::high:
        inst.tau = 2.0 * c0 * sigma / std::sqrt(nd);
        if (!(2.0 * kappa > sigma))
            fail("needs 2 kappa > sigma");
        if (kappa * kappa < pm1 * inst.tau * inst.tau)
            fail("needs kappa^2 >= (p-1) tau^2");
        inst.kappa0 = std::sqrt(kappa * kappa - pm1 * inst.tau * inst.tau);
        inst.separation = 2.0 * c0 * sigma * std::sqrt(pm1 / nd);
        break;
    case SnrRegime::medium:
        inst.tau = 2.0 * c0 * (sigma * sigma / kappa) / std::sqrt(nd);
        if (2.0 * kappa > sigma)
            fail("needs 2 kappa <= sigma");
        if (kappa * kappa < pm1 * inst.tau * inst.tau)
            fail("needs kappa^2 >= (p-1) tau^2");
        inst.kappa0 = std::sqrt(kappa * kappa - pm1 * inst.tau * inst.tau);
        inst.separation = 2.0 * c0 * (sigma * sigma / kappa) * std::sqrt(pm1 / nd);
        break;
    case SnrRegime::low:
        inst.tau = 2.0 * c0 * sigma / std::sqrt(pm1) * std::pow(static_cast<double>(p) / nd, 0.25);
        inst.kappa0 = 0.0;
        if (kappa > std::sqrt(pm1) * inst.tau)
            fail("needs kappa <= ||beta_i|| = 2 c0 sigma (p/n)^(1/4)");
        inst.separation = std::sqrt(pm1) * inst.tau;
        break;
    }

    Rng rng(seed, packing_stream);
    inst.codebook = greedy_codebook(p - 1, rng);
    for (const auto &word : inst.codebook) {
        Vec beta = Vec::Zero(p);
        for (Index j = 0; j < p - 1; ++j)
            beta(j) = (2.0 * word[static_cast<std::size_t>(j)] - 1.0) * inst.tau;
        beta(p - 1) = inst.kappa0;
        inst.pairs.emplace_back(beta, -beta);
    }

    // Exhaustive verification; any failure is a construction bug.
    for (std::size_t i = 0; i < inst.pairs.size(); ++i) {
        double norm = inst.pairs[i].beta1().norm();
        bool ok = regime == SnrRegime::low ? norm >= kappa * (1.0 - 1e-12) : std::abs(norm - kappa) <= 1e-12 * kappa;
        if (!ok)
            throw NumericalError("gen_packing_instance: member violates the norm constraint");
        for (std::size_t j = i + 1; j < inst.pairs.size(); ++j)
            if (rho_metric(inst.pairs[i], inst.pairs[j]) < inst.separation * (1.0 - 1e-12))
                throw NumericalError("gen_packing_instance: members closer than the separation");
    }

    inst.sampled_index = static_cast<Index>(rng.next() % inst.pairs.size());
    inst.sample = gen_mixed(inst.pairs[static_cast<std::size_t>(inst.sampled_index)], n, BalancedBernoulli{},
                            GaussianDesign{}, StochasticNoise{sigma}, seed);
    inst.sample.meta.model = std::string("packing-") + to_string(regime);
    return inst;
}

// ------------------------------------------------------------ phase retrieval

enum class PhaseModel { noisy_phase, noisy_magnitude };

inline const char *to_string(PhaseModel m) { return m == PhaseModel::noisy_phase ? "noisy-phase" : "noisy-magnitude"; }

/// Magnitude-only measurements of one signal.
struct PhaseDataset {
    Mat X;
    Vec zmeas;
    std::optional<Vec> e;
    std::optional<Vec> truth;
    PhaseModel model = PhaseModel::noisy_phase;
    std::uint64_t seed = 0;
    double sigma = 0.0;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
    void validate() const {
        detail::require(X.rows() >= 1 && X.cols() >= 1, "PhaseDataset: empty design");
        detail::require(zmeas.size() == X.rows(), "PhaseDataset: measurement count differs from rows of X");
        if (e)
            detail::require(e->size() == X.rows(), "PhaseDataset: e length differs from rows of X");
        if (truth)
            detail::require(truth->size() == X.cols(), "PhaseDataset: truth dimension differs from p");
    }
};

/// noisy-phase: z_i = |x_i'beta + e_i|; noisy-magnitude: z_i = |x_i'beta| + e_i.
inline PhaseDataset gen_phase_retrieval(const Vec &beta, Index n, PhaseModel model, const NoiseModel &noise,
                                        std::uint64_t seed, const DesignModel &design = GaussianDesign{}) {
    detail::require(n >= 1 && beta.size() >= 1, "gen_phase_retrieval: empty problem");
    Rng design_rng(seed, design_stream), noise_rng(seed, noise_stream);
    PhaseDataset d;
    d.X = sample_design(design, n, beta.size(), design_rng);
    d.e = sample_noise(noise, n, noise_rng);
    d.truth = beta;
    d.model = model;
    d.seed = seed;
    if (auto *s = std::get_if<StochasticNoise>(&noise))
        d.sigma = s->sigma;
    const Vec clean = d.X * beta;
    d.zmeas = model == PhaseModel::noisy_phase ? Vec((clean + *d.e).cwiseAbs()) : Vec(clean.cwiseAbs() + *d.e);
    return d;
}

} // namespace mlr
