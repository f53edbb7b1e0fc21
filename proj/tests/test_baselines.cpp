#include <mlr/baselines.hpp>
#include <mlr/core.hpp>
#include <mlr/rng.hpp>
#include <mlr/synth.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace mlr;

namespace {

RegressorPair well_separated(std::uint64_t seed, Index p) {
    Rng rng(seed, 77);
    Vec u = rng.unit_vector(p);
    return {u, -u};
}

} // namespace

TEST(Oracle, InterpolatesNoiselessData) {
    RegressorPair truth = well_separated(1, 5);
    MixedDataset d = gen_mixed(truth, 80, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 1);
    EXPECT_LE(rho_metric(fit_oracle(d), truth), 1e-10);
}

TEST(Oracle, ComponentOrderFollowsLabels) {
    Rng rng(2, 0);
    RegressorPair truth(rng.normal_vector(3), rng.normal_vector(3));
    MixedDataset d = gen_mixed(truth, 60, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 2);
    RegressorPair fit = fit_oracle(d);
    EXPECT_LE((fit.beta1() - truth.beta1()).norm(), 1e-10);
    EXPECT_LE((fit.beta2() - truth.beta2()).norm(), 1e-10);
}

TEST(Oracle, ErrorsOnSmallOrDegenerateClass) {
    MixedDataset d = gen_mixed(well_separated(3, 5), 20, FixedCounts{3, 17}, GaussianDesign{}, NoNoise{}, 3);
    EXPECT_THROW(fit_oracle(d), ConfigError);
    MixedDataset dup = gen_mixed(well_separated(3, 2), 20, FixedCounts{10, 10}, GaussianDesign{}, NoNoise{}, 3);
    for (Index i = 0; i < dup.n(); ++i)
        dup.X(i, 1) = 2.0 * dup.X(i, 0);
    EXPECT_THROW(fit_oracle(dup), NumericalError);
    dup.z.reset();
    EXPECT_THROW(fit_oracle(dup), ConfigError);
}

TEST(Em, LogLikelihoodIsNonDecreasing) {
    RegressorPair truth = well_separated(4, 4);
    MixedDataset d = gen_mixed(truth, 400, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.3}, 4);
    EmConfig cfg;
    cfg.init = RandomInit{9, 1.0};
    EmResult res = fit_em(d, cfg);
    ASSERT_GE(res.loglik_trace.size(), 2u);
    for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
        EXPECT_GE(res.loglik_trace[i], res.loglik_trace[i - 1] - 1e-9 * std::abs(res.loglik_trace[i - 1]))
            << "round " << i;
}

TEST(Em, ConvergesFromNearbyStart) {
    RegressorPair truth = well_separated(5, 4);
    MixedDataset d = gen_mixed(truth, 800, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.1}, 5);
    EmConfig cfg;
    cfg.init = RegressorPair(truth.beta1() * 0.8, truth.beta2() * 0.8);
    EmResult res = fit_em(d, cfg);
    EXPECT_LE(rho_metric(res.pair, truth), 0.1);
    EXPECT_NEAR(res.sigma2, 0.01, 0.005);
    EXPECT_EQ(res.responsibilities.rows(), d.n());
    EXPECT_LE((res.responsibilities.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Em, ZeroKnownVarianceUsesHardAssignments) {
    RegressorPair truth = well_separated(6, 3);
    MixedDataset d = gen_mixed(truth, 200, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 6);
    EmConfig cfg;
    cfg.init = RegressorPair(truth.beta1() * 0.9, truth.beta2() * 0.9);
    cfg.variance = KnownVariance{0.0};
    EmResult res = fit_em(d, cfg);
    EXPECT_TRUE(res.loglik_trace.empty());
    EXPECT_LE(rho_metric(res.pair, truth), 1e-10);
    for (Index i = 0; i < d.n(); ++i)
        EXPECT_TRUE(res.responsibilities(i, 0) == 0.0 || res.responsibilities(i, 0) == 1.0 ||
                    res.responsibilities(i, 0) == 0.5);
}

TEST(Em, WarnsWhenSampleIsSmall) {
    MixedDataset d = gen_mixed(well_separated(7, 5), 8, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.1}, 7);
    EmConfig cfg;
    cfg.max_rounds = 1;
    try {
        EmResult res = fit_em(d, cfg);
        EXPECT_FALSE(res.warnings.empty());
    } catch (const NumericalError &) {
        SUCCEED();
    }
}

TEST(Em, RejectsInvalidConfig) {
    MixedDataset d = gen_mixed(well_separated(8, 2), 20, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 8);
    EmConfig cfg;
    cfg.max_rounds = 0;
    EXPECT_THROW(fit_em(d, cfg), ConfigError);
    cfg.max_rounds = 5;
    cfg.variance = KnownVariance{-1.0};
    EXPECT_THROW(fit_em(d, cfg), ConfigError);
}

// p = 1: sum |x_i b - y_i| = sum |x_i| |b - y_i / x_i| is minimised by a
// weighted median of y_i / x_i with weights |x_i|.
TEST(BlindLad, ScalarMatchesWeightedMedian) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        MixedDataset d = gen_mixed(RegressorPair(Vec::Constant(1, 2.0), Vec::Constant(1, -1.0)), 51, BalancedBernoulli{},
                                   GaussianDesign{}, StochasticNoise{0.2}, seed);
        std::vector<std::pair<double, double>> pts;
        double total = 0.0;
        for (Index i = 0; i < d.n(); ++i) {
            pts.emplace_back(d.y(i) / d.X(i, 0), std::abs(d.X(i, 0)));
            total += std::abs(d.X(i, 0));
        }
        std::sort(pts.begin(), pts.end());
        double acc = 0.0, median = 0.0;
        for (auto &pt : pts) {
            acc += pt.second;
            if (acc >= 0.5 * total) {
                median = pt.first;
                break;
            }
        }
        auto objective = [&](double b) { return (d.X.col(0) * b - d.y).lpNorm<1>(); };
        LadResult res = fit_blind_lad(d);
        EXPECT_LE(res.objective, objective(median) * (1 + 1e-8) + 1e-12) << "seed " << seed;
        EXPECT_LE(res.relative_gap, 1e-6);
    }
}

TEST(BlindLad, RobustToGrossOutliers) {
    Rng rng(9, 0);
    Vec beta = rng.normal_vector(4);
    MixedDataset d = gen_mixed(RegressorPair(beta, beta), 200, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 9);
    for (Index i = 0; i < 20; ++i)
        d.y(i * 10) += 100.0;
    LadResult res = fit_blind_lad(d);
    EXPECT_LE((res.beta - beta).norm(), 1e-6);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
        EXPECT_LE(res.objective_trace[i], res.objective_trace[i - 1]);
}
