#include <mlr/rng.hpp>
#include <mlr/solver_constrained.hpp>
#include <mlr/spectral.hpp>
#include <mlr/synth.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace mlr;

namespace {

// p = 1 residual row: a k + b g - c with a = -x^2, b = 2 y x, c = y^2.
struct ScalarRows {
    Vec a, b, c;
    explicit ScalarRows(const MixedDataset &d)
        : a(-d.X.col(0).array().square().matrix()), b(2.0 * (d.y.array() * d.X.col(0).array()).matrix()),
          c(d.y.array().square().matrix()) {}

    // min_g sum |a k + b g - c| is a weighted median problem in g.
    double best_l1(double k) const {
        std::vector<std::pair<double, double>> pts;
        double constant = 0.0;
        for (Index i = 0; i < a.size(); ++i) {
            if (b(i) == 0.0)
                constant += std::abs(a(i) * k - c(i));
            else
                pts.emplace_back((c(i) - a(i) * k) / b(i), std::abs(b(i)));
        }
        std::sort(pts.begin(), pts.end());
        double total = 0.0;
        for (auto &pt : pts)
            total += pt.second;
        double acc = 0.0, g = 0.0;
        for (auto &pt : pts) {
            acc += pt.second;
            if (acc >= 0.5 * total) {
                g = pt.first;
                break;
            }
        }
        double val = constant;
        for (Index i = 0; i < a.size(); ++i)
            val += std::abs(a(i) * k + b(i) * g - c(i));
        return val;
    }
};

// Golden-section search for the minimiser of the convex function best_l1.
double scalar_minimiser(const ScalarRows &rows, double bracket) {
    double lo = -bracket, hi = bracket;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 300; ++it) {
        double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
        if (rows.best_l1(m1) < rows.best_l1(m2))
            hi = m2;
        else
            lo = m1;
    }
    return 0.5 * (lo + hi);
}

// Smallest |k| with best_l1(k) <= eta: bisection from the minimiser towards zero.
double scalar_constrained_oracle(const ScalarRows &rows, double eta, double bracket) {
    if (rows.best_l1(0.0) <= eta)
        return 0.0;
    double kmin = scalar_minimiser(rows, bracket);
    EXPECT_LE(rows.best_l1(kmin), eta) << "oracle: instance is infeasible";
    double inside = kmin, outside = 0.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (inside + outside);
        (rows.best_l1(mid) <= eta ? inside : outside) = mid;
    }
    return std::abs(inside);
}

} // namespace

TEST(ConstrainedSolver, ScalarIntervalSearchOracle) {
    for (std::uint64_t inst = 0; inst < 8; ++inst) {
        Rng rng(inst, 41);
        RegressorPair truth(Vec::Constant(1, 0.5 + rng.uniform()), Vec::Constant(1, -0.5 - rng.uniform()));
        MixedDataset d = gen_mixed(truth, 40, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.3}, inst);
        ScalarRows rows(d);
        const double bracket = 50.0;
        // Radius halfway between the smallest attainable l1 residual and the value at k = 0.
        const double floor = rows.best_l1(scalar_minimiser(rows, bracket));
        const double eta = floor + 0.5 * (rows.best_l1(0.0) - floor);
        const double want = scalar_constrained_oracle(rows, eta, bracket);

        ConstrainedConfig cfg;
        cfg.eta = eta;
        cfg.tol_primal = cfg.tol_dual = 1e-9;
        cfg.max_iter = 200000;
        SolveResult res = solve_constrained(d, cfg);
        EXPECT_NEAR(std::abs(res.estimate.K()(0, 0)), want, 1e-4 * std::max(1.0, want)) << "instance " << inst;
        EXPECT_LE(residuals(res.estimate, d).lpNorm<1>(), eta * (1 + 1e-9) + 1e-9 * d.y.squaredNorm());
    }
}

TEST(ConstrainedSolver, ExactRecoveryNoiseless) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed, 43);
        RegressorPair truth(rng.unit_vector(5), rng.unit_vector(5));
        MixedDataset d = gen_mixed(truth, 150, FixedCounts{75, 75}, GaussianDesign{}, NoNoise{}, seed);
        SolveResult res = solve_constrained(d, ConstrainedConfig{});
        EXPECT_LE(rho_metric(recover_betas(res.estimate), truth), 1e-3 * truth.gamma()) << "seed " << seed;
        EXPECT_EQ(res.report.stop_reason, StopReason::converged);
    }
}

TEST(ConstrainedSolver, ReturnedEstimateIsFeasible) {
    Rng rng(5, 43);
    RegressorPair truth(rng.unit_vector(4), rng.unit_vector(4));
    MixedDataset d = gen_mixed(truth, 200, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.1}, 5);
    ConstrainedConfig cfg;
    cfg.eta = EtaAuto{1.0, d.e->norm(), truth.separation().norm()};
    SolveResult res = solve_constrained(d, cfg);
    const double eta = resolve_eta(cfg, d.n());
    EXPECT_DOUBLE_EQ(res.report.parameter, eta);
    EXPECT_LE(residuals(res.estimate, d).lpNorm<1>(), eta * (1 + cfg.tol_primal) + cfg.tol_primal * d.y.squaredNorm());
    // The truth is feasible too, so the minimum cannot exceed its nuclear norm by more than the tolerance slack.
    EXPECT_LE(nuclear_norm_symmetric(res.estimate.K()), nuclear_norm_symmetric(lift(truth).K()) * (1 + 1e-3));
}

TEST(ConstrainedSolver, LargeRadiusGivesZero) {
    Rng rng(6, 43);
    MixedDataset d = gen_mixed(RegressorPair(rng.unit_vector(3), rng.unit_vector(3)), 50, BalancedBernoulli{},
                               GaussianDesign{}, NoNoise{}, 6);
    ConstrainedConfig cfg;
    cfg.eta = d.y.squaredNorm() * 1.01;
    SolveResult res = solve_constrained(d, cfg);
    EXPECT_EQ(res.estimate.K().norm(), 0.0);
    EXPECT_EQ(res.estimate.g().norm(), 0.0);
    EXPECT_EQ(res.report.stop_reason, StopReason::converged);
}

TEST(ConstrainedSolver, CertifiesInfeasibility) {
    Rng rng(7, 43);
    MixedDataset d = gen_mixed(RegressorPair(rng.unit_vector(3), rng.unit_vector(3)), 100, BalancedBernoulli{},
                               GaussianDesign{}, StochasticNoise{1.0}, 7);
    ConstrainedConfig cfg;
    cfg.eta = 1e-3;
    try {
        solve_constrained(d, cfg);
        FAIL() << "expected InfeasibleError";
    } catch (const InfeasibleError &ex) {
        EXPECT_GT(ex.ls_residual(), 10 * ex.radius());
        EXPECT_DOUBLE_EQ(ex.radius(), 1e-3);
    }
}

TEST(ConstrainedSolver, EtaRuleFollowsFormula) {
    ConstrainedConfig cfg;
    cfg.eta = EtaAuto{0.5, 3.0, 2.0};
    EXPECT_DOUBLE_EQ(resolve_eta(cfg, 400), 0.5 * 20.0 * 3.0 * 2.0);
}

TEST(ConstrainedSolver, InvalidConfigurationThrows) {
    MixedDataset d;
    d.X = Mat::Identity(3, 2);
    d.y = Vec::Ones(3);
    ConstrainedConfig cfg;
    cfg.eta = -1.0;
    EXPECT_THROW(solve_constrained(d, cfg), ConfigError);
    cfg.eta = 0.0;
    cfg.penalty = 0.0;
    EXPECT_THROW(solve_constrained(d, cfg), ConfigError);
    cfg.penalty = 1.0;
    cfg.adapt_factor = 1.0;
    EXPECT_THROW(solve_constrained(d, cfg), ConfigError);
}

TEST(ConstrainedSolver, TracesHaveOneEntryPerIteration) {
    Rng rng(8, 43);
    MixedDataset d = gen_mixed(RegressorPair(rng.unit_vector(3), rng.unit_vector(3)), 80, BalancedBernoulli{},
                               GaussianDesign{}, NoNoise{}, 8);
    SolveResult res = solve_constrained(d, ConstrainedConfig{});
    EXPECT_EQ(res.report.objective_trace.size(), static_cast<std::size_t>(res.report.iterations));
    EXPECT_EQ(res.report.primal_residual_trace.size(), static_cast<std::size_t>(res.report.iterations));
    EXPECT_EQ(res.report.dual_residual_trace.size(), static_cast<std::size_t>(res.report.iterations));
    EXPECT_EQ(res.report.program, "constrained");
}
