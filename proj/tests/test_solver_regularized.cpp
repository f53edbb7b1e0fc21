#include <mlr/rng.hpp>
#include <mlr/solver_regularized.hpp>
#include <mlr/spectral.hpp>
#include <mlr/synth.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mlr;

namespace {

MixedDataset noisy_data(std::uint64_t seed, Index p, Index n, double sigma) {
    Rng rng(seed, 9);
    RegressorPair pair(rng.normal_vector(p), rng.normal_vector(p));
    return gen_mixed(pair, n, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{sigma}, seed);
}

} // namespace

TEST(SmoothObjective, GradientMatchesCentralDifferences) {
    for (std::uint64_t inst = 0; inst < 50; ++inst) {
        Rng rng(inst, 17);
        const Index p = 1 + static_cast<Index>(inst % 4);
        MixedDataset d = noisy_data(inst, p, 30, 0.4);
        Mat K = rng.normal_matrix(p, p);
        LiftedEstimate est(K, rng.normal_vector(p));
        Mat DK = rng.normal_matrix(p, p);
        Vec Dg = rng.normal_vector(p);
        EXPECT_LE(oracle::gradient_fd_gap(est, d, 0.16, DK, Dg), 1e-5) << "instance " << inst;
    }
}

TEST(RegularizedSolver, ScalarClosedForm) {
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Rng rng(inst, 31);
        MixedDataset d = gen_mixed(RegressorPair(Vec::Constant(1, 1.0 + rng.uniform()), Vec::Constant(1, -0.5)), 60,
                                   BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.3}, inst);
        const double sigma2 = 0.09;
        // Half the thresholds shrink k, the rest zero it.
        const double kink = oracle::scalar_regularized(d, sigma2, 0.0).kink;
        const double lambda = (inst % 2 == 0 ? 0.8 : 2.5) * kink;
        const oracle::ScalarLasso want = oracle::scalar_regularized(d, sigma2, lambda);

        RegularizedConfig cfg;
        cfg.lambda = lambda;
        cfg.sigma2 = sigma2;
        cfg.tol_rel_obj = 1e-13;
        cfg.max_iter = 100000;
        SolveResult res = solve_regularized(d, cfg);
        EXPECT_NEAR(res.estimate.K()(0, 0), want.k, 1e-8 * std::max(1.0, std::abs(want.k))) << "instance " << inst;
        EXPECT_NEAR(res.estimate.g()(0), want.g, 1e-8 * std::max(1.0, std::abs(want.g))) << "instance " << inst;
    }
}

TEST(RegularizedSolver, ObjectiveTraceIsNonIncreasing) {
    MixedDataset d = noisy_data(3, 5, 300, 0.2);
    RegularizedConfig cfg;
    cfg.lambda = LambdaAuto{0.003, 0.2, std::nullopt, 3.0};
    cfg.sigma2 = 0.04;
    SolveResult res = solve_regularized(d, cfg);
    const auto &tr = res.report.objective_trace;
    ASSERT_FALSE(tr.empty());
    for (std::size_t i = 1; i < tr.size(); ++i)
        EXPECT_LE(tr[i], tr[i - 1] * (1 + 1e-12)) << "iteration " << i;
    EXPECT_EQ(res.report.stop_reason, StopReason::converged);
    EXPECT_EQ(res.report.primal_residual_trace.size(), tr.size());
    EXPECT_EQ(res.report.dual_residual_trace.size(), tr.size());
}

TEST(RegularizedSolver, FixedStepAgreesWithBacktracking) {
    MixedDataset d = noisy_data(4, 3, 200, 0.3);
    RegularizedConfig cfg;
    cfg.lambda = 5.0;
    cfg.sigma2 = 0.09;
    cfg.tol_rel_obj = 1e-10;
    cfg.max_iter = 50000;
    SolveResult bt = solve_regularized(d, cfg);
    // A valid Lipschitz constant: 2 * largest eigenvalue of the lifted Gram matrix.
    LiftedOperator op(3);
    Mat A = op.features(d.X, d.y);
    Eigen::SelfAdjointEigenSolver<Mat> es(A.transpose() * A, Eigen::EigenvaluesOnly);
    cfg.step = FixedStep{2.0 * es.eigenvalues().maxCoeff()};
    SolveResult fx = solve_regularized(d, cfg);
    EXPECT_LE((bt.estimate.K() - fx.estimate.K()).norm(), 1e-5 * (1 + bt.estimate.K().norm()));
    EXPECT_LE((bt.estimate.g() - fx.estimate.g()).norm(), 1e-5 * (1 + bt.estimate.g().norm()));
}

TEST(RegularizedSolver, HugeWeightZeroesK) {
    MixedDataset d = noisy_data(5, 3, 100, 0.1);
    RegularizedConfig cfg;
    cfg.lambda = 1e12;
    SolveResult res = solve_regularized(d, cfg);
    EXPECT_EQ(res.estimate.K().norm(), 0.0);
}

TEST(RegularizedSolver, RecoversNearNoiselessTruth) {
    Rng rng(6, 0);
    RegressorPair truth(rng.unit_vector(6), -rng.unit_vector(6));
    MixedDataset d = gen_mixed(truth, 500, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 6);
    RegularizedConfig cfg;
    cfg.lambda = 1e-6;
    cfg.tol_rel_obj = 1e-10;
    cfg.max_iter = 20000;
    SolveResult res = solve_regularized(d, cfg);
    EXPECT_LE(rho_metric(recover_betas(res.estimate), truth), 1e-3);
}

TEST(RegularizedSolver, LambdaRuleFollowsFormula) {
    MixedDataset d = noisy_data(7, 4, 100, 0.5);
    RegularizedConfig cfg;
    cfg.lambda = LambdaAuto{2.0, 0.5, 1.5, 3.0};
    const double n = 100, p = 4;
    EXPECT_NEAR(resolve_lambda(cfg, d), 2.0 * 0.5 * 2.0 * std::sqrt(n * p) * std::pow(std::log(n), 3.0), 1e-9);
}

TEST(RegularizedSolver, InvalidConfigurationThrows) {
    MixedDataset d = noisy_data(8, 2, 20, 0.5);
    RegularizedConfig cfg;
    cfg.lambda = -1.0;
    EXPECT_THROW(solve_regularized(d, cfg), ConfigError);
    cfg.lambda = 1.0;
    cfg.max_iter = 0;
    EXPECT_THROW(solve_regularized(d, cfg), ConfigError);
    cfg.max_iter = 10;
    cfg.step = FixedStep{-1.0};
    EXPECT_THROW(solve_regularized(d, cfg), ConfigError);
}

TEST(RegularizedSolver, ReportsMaxIterWhenCapped) {
    MixedDataset d = noisy_data(9, 4, 200, 0.5);
    RegularizedConfig cfg;
    cfg.lambda = 1.0;
    cfg.max_iter = 3;
    cfg.tol_rel_obj = 1e-15;
    SolveResult res = solve_regularized(d, cfg);
    EXPECT_EQ(res.report.stop_reason, StopReason::max_iter);
    EXPECT_EQ(res.report.iterations, 3);
}
