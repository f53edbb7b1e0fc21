// Fits both convex estimators on one synthetic instance and reports the
// recovery error of each.

#include <mlr/mlr.hpp>

#include <cstdio>

int main() {
    using namespace mlr;
    const Index p = 10, n = 600;
    const double sigma = 0.1;

    Rng rng(42, 5);
    RegressorPair truth(rng.normal_vector(p), rng.normal_vector(p));
    MixedDataset data = gen_mixed(truth, n, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{sigma}, 42);

    ConstrainedConfig constrained;
    constrained.eta = EtaAuto{1.0, data.e->norm(), truth.separation().norm()};
    SolveResult c = solve_constrained(data, constrained);

    RegularizedConfig regularized;
    regularized.sigma2 = sigma * sigma;
    LambdaAuto rule;
    rule.c5 = 0.003;
    rule.sigma = sigma;
    regularized.lambda = rule;
    SolveResult r = solve_regularized(data, regularized);

    for (const SolveResult *res : {&c, &r}) {
        RegressorPair fit = recover_betas(res->estimate);
        std::printf("%-12s rho %.4f  iterations %d  stop %s\n", res->report.program.c_str(), rho_metric(fit, truth),
                    res->report.iterations, to_string(res->report.stop_reason));
    }
    return 0;
}
