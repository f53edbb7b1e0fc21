#include <mlr/bench.hpp>
#include <mlr/io.hpp>
#include <mlr/mlr.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace mlr;
using json = nlohmann::json;

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;
constexpr int exit_assert = 4;

struct Globals {
    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;
    std::string config;
};

struct AssertionFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_assertion(bool ok, const std::string &what) {
    if (!ok)
        throw AssertionFailed("assertion failed: " + what);
}

std::string need_out(const Globals &g, const std::string &command) {
    if (g.out.empty())
        throw ConfigError(command + ": --out is required");
    return g.out;
}

void print(const json &j) { std::cout << j.dump(2) << "\n"; }

// ------------------------------------------------------------------ generate

struct GenerateArgs {
    std::string kind = "mixed";
    Index p = 10;
    Index n = 200;
    double sigma = 0.0;
    double gamma = 1.0;
    std::string noise = "gaussian";
    std::string labels = "bernoulli";
    std::string truth = "random";
};

void run_generate(const Globals &g, const GenerateArgs &a) {
    const std::string out = need_out(g, "generate");
    const std::string noise_name = a.sigma == 0.0 && a.noise == "gaussian" ? "none" : a.noise;
    const NoiseModel noise = bench::noise_model_named(noise_name, a.sigma, a.n);
    if (a.kind == "mixed") {
        RegressorPair truth = bench::sample_truth(a.truth, a.p, a.gamma, g.seed);
        MixedDataset d = gen_mixed(truth, a.n, bench::label_model_named(a.labels, a.n), GaussianDesign{}, noise, g.seed);
        io::write_dataset(out, d);
        print(io::meta_to_json(d));
        return;
    }
    if (a.kind != "noisy-phase" && a.kind != "noisy-magnitude")
        throw ConfigError("generate: --kind must be mixed, noisy-phase or noisy-magnitude");
    if (noise_name == "adversarial")
        throw ConfigError("generate: phase data takes gaussian, bounded or none noise");
    Rng rng(g.seed, bench::truth_stream);
    Vec beta = 0.5 * a.gamma * rng.unit_vector(a.p);
    PhaseModel model = a.kind == "noisy-phase" ? PhaseModel::noisy_phase : PhaseModel::noisy_magnitude;
    PhaseDataset d = gen_phase_retrieval(beta, a.n, model, noise, g.seed);
    io::write_phase_dataset(out, d);
    print(json{{"model", to_string(model)}, {"p", a.p}, {"n", a.n}, {"sigma", a.sigma}, {"seed", g.seed}});
}

// --------------------------------------------------------------------- solve

struct SolveArgs {
    std::string data;
    std::string estimator = "constrained";
    std::optional<double> eta;
    double c4 = 1.0;
    std::optional<double> e_norm;
    std::optional<double> separation;
    std::optional<double> lambda;
    double c5 = 0.003;
    std::optional<double> sigma;
    std::optional<double> gamma;
    double log_exponent = 3.0;
    int max_iter = 5000;
    std::optional<double> tol;
};

ConstrainedConfig constrained_config(const SolveArgs &a, const MixedDataset &d) {
    ConstrainedConfig cfg;
    cfg.max_iter = a.max_iter;
    if (a.tol)
        cfg.tol_primal = cfg.tol_dual = *a.tol;
    if (a.eta) {
        cfg.eta = *a.eta;
    } else if (a.e_norm && a.separation) {
        cfg.eta = EtaAuto{a.c4, *a.e_norm, *a.separation};
    } else if (d.e && d.meta.truth) {
        cfg.eta = EtaAuto{a.c4, d.e->norm(), d.meta.truth->separation().norm()};
    } else {
        throw ConfigError("solve: give --eta, or --e-norm with --separation, or data carrying its noise and truth");
    }
    return cfg;
}

RegularizedConfig regularized_config(const SolveArgs &a) {
    RegularizedConfig cfg;
    cfg.max_iter = a.max_iter;
    if (a.tol)
        cfg.tol_rel_obj = *a.tol;
    const double sigma = a.sigma.value_or(0.0);
    cfg.sigma2 = sigma * sigma;
    if (a.lambda)
        cfg.lambda = *a.lambda;
    else if (a.sigma)
        cfg.lambda = LambdaAuto{a.c5, sigma, a.gamma, a.log_exponent};
    else
        throw ConfigError("solve: give --lambda or --sigma for the regularized program");
    return cfg;
}

void run_solve(const Globals &g, const SolveArgs &a) {
    const std::string out = io::strip_extension(need_out(g, "solve"));
    MixedDataset d = io::read_dataset(a.data);
    json summary{{"estimator", a.estimator}, {"p", d.p()}, {"n", d.n()}};
    std::optional<RegressorPair> pair;
    if (a.estimator == "constrained" || a.estimator == "regularized") {
        SolveResult res = a.estimator == "constrained" ? solve_constrained(d, constrained_config(a, d))
                                                       : solve_regularized(d, regularized_config(a));
        io::write_estimate(out + "_estimate.csv", res.estimate);
        io::write_atomic(out + "_report.json", io::report_to_json(res.report).dump(2) + "\n");
        pair = recover_betas(res.estimate);
        summary["stop_reason"] = to_string(res.report.stop_reason);
        summary["iterations"] = res.report.iterations;
        summary["parameter"] = res.report.parameter;
    } else if (a.estimator == "em") {
        EmConfig cfg;
        cfg.init = RandomInit{g.seed, a.gamma.value_or(1.0)};
        if (a.sigma)
            cfg.variance = KnownVariance{*a.sigma * *a.sigma};
        EmResult res = fit_em(d, cfg);
        pair = res.pair;
        summary["rounds"] = res.rounds;
        summary["sigma2"] = res.sigma2;
        summary["warnings"] = res.warnings;
    } else if (a.estimator == "lad") {
        LadResult res = fit_blind_lad(d);
        pair = RegressorPair(res.beta, res.beta);
        summary["objective"] = res.objective;
        summary["relative_gap"] = res.relative_gap;
    } else if (a.estimator == "oracle") {
        pair = fit_oracle(d);
    } else {
        throw ConfigError("solve: unknown estimator " + a.estimator);
    }
    io::write_pair(out + "_pair.csv", *pair);
    if (d.meta.truth)
        summary["rho"] = rho_metric(*pair, *d.meta.truth);
    print(summary);
}

// ------------------------------------------------------------------- recover

void run_recover(const Globals &g, const std::string &estimate) {
    const std::string out = need_out(g, "recover");
    RegressorPair pair = recover_betas(io::read_estimate(estimate));
    io::write_pair(out, pair);
    print(json{{"beta1", io::vec_to_json(pair.beta1())}, {"beta2", io::vec_to_json(pair.beta2())}});
}

// ---------------------------------------------------------------- experiment

void run_experiment(const Globals &g, bool threads_given) {
    if (g.config.empty())
        throw ConfigError("experiment: --config is required");
    bench::ExperimentGrid grid = bench::load_grid(g.config);
    if (!g.out.empty())
        grid.output_dir = g.out;
    if (threads_given)
        grid.threads = g.threads;
    bench::GridResult res = bench::run_grid(grid);
    json cells = json::array();
    for (const auto &c : res.cells)
        cells.push_back({{"p", c.p},
                         {"n", c.n},
                         {"sigma", c.sigma},
                         {"gamma", c.gamma},
                         {"estimator", c.estimator},
                         {"median_rho", c.median_rho},
                         {"failures", c.failures}});
    print(json{{"output_dir", grid.output_dir},
               {"cells_computed", res.cells_computed},
               {"cells_cached", res.cells_cached},
               {"cells", cells}});
}

// ----------------------------------------------------------------- ripcheck

struct RipArgs {
    std::string design = "gaussian";
    Index p = 10;
    Index n = 2000;
    Index rank = 2;
    int samples = 200;
    double noise_sigma = 0.0;
    std::optional<double> assert_ratio;
    std::optional<double> assert_min;
};

LabDesign lab_design_named(const std::string &name) {
    if (name == "gaussian")
        return GaussianDesign{};
    if (name == "bounded")
        return BoundedSubgaussianDesign{};
    if (name == "rademacher")
        return RademacherDesign{};
    throw ConfigError("unknown design " + name);
}

void run_ripcheck(const Globals &g, const RipArgs &a) {
    RipOptions opt;
    if (a.noise_sigma > 0) {
        opt.mode = RipMode::with_noise;
        opt.sigma = a.noise_sigma;
    }
    RipScanResult res = rip_scan(lab_design_named(a.design), a.p, a.n, a.rank, a.samples, g.seed, opt);
    json j{{"design", a.design}, {"min", res.min_value}, {"max", res.max_value},
           {"ratio", res.ratio()}, {"samples", res.samples}, {"warnings", res.warnings}};
    if (a.design == "rademacher" && a.p >= 2) {
        BlindSpotResult blind = rademacher_blind_spot(a.p, a.n, g.seed);
        j["blind_spot_diagonal"] = blind.diagonal;
        j["blind_spot_off_diagonal"] = blind.off_diagonal;
    }
    print(j);
    if (a.assert_ratio)
        check_assertion(res.ratio() >= *a.assert_ratio, "min/max ratio below threshold");
    if (a.assert_min)
        check_assertion(res.min_value > *a.assert_min, "minimum below threshold");
}

// ------------------------------------------------------------------ klcheck

struct KlArgs {
    std::vector<double> sigmas{0.5, 1.0, 2.0};
    int points = 20;
    double span = 2.0;
    double slack = 1e-8;
    bool assert_all = false;
};

void run_klcheck(const Globals &g, const KlArgs &a) {
    if (a.points < 2)
        throw ConfigError("klcheck: --points must be at least 2");
    json rows = json::array();
    int holds = 0, total = 0;
    for (double sigma : a.sigmas) {
        std::vector<double> grid;
        for (int k = 0; k < a.points; ++k)
            grid.push_back(a.span * sigma * k / (a.points - 1));
        for (const KlRow &r : kl_mixture_bound_check(grid, grid, sigma, 1e-10, a.slack)) {
            holds += r.holds;
            ++total;
            rows.push_back({{"u", r.u}, {"v", r.v}, {"sigma", r.sigma}, {"numeric", r.numeric}, {"bound", r.bound},
                            {"holds", r.holds}});
        }
    }
    if (!g.out.empty())
        io::write_atomic(g.out, rows.dump(2) + "\n");
    print(json{{"cells", total}, {"holds", holds}});
    if (a.assert_all)
        check_assertion(holds == total, "KL bound violated");
}

// --------------------------------------------------------------- momentcheck

struct MomentArgs {
    int pairs = 50;
    long long samples = 1000000;
    Index dim = 5;
    double min_fraction = 0.96;
    bool assert_fraction = false;
};

void run_momentcheck(const Globals &g, const MomentArgs &a) {
    Rng rng(g.seed, 0);
    int within = 0;
    json rows = json::array();
    for (int k = 0; k < a.pairs; ++k) {
        Vec x = rng.normal_vector(a.dim), y = rng.normal_vector(a.dim);
        GaussianMomentReport rep = gaussian_moment_check(x, y, a.samples, hash_words({g.seed, static_cast<std::uint64_t>(k)}));
        within += rep.identity.within();
        rows.push_back({{"empirical", rep.identity.empirical},
                        {"analytic", rep.identity.analytic},
                        {"std_error", rep.identity.std_error},
                        {"within", rep.identity.within()}});
    }
    if (!g.out.empty())
        io::write_atomic(g.out, rows.dump(2) + "\n");
    print(json{{"pairs", a.pairs}, {"within_5_se", within}});
    if (a.assert_fraction)
        check_assertion(within >= a.min_fraction * a.pairs, "too few pairs within 5 standard errors");
}

// --------------------------------------------------------------------- fano

struct FanoArgs {
    std::string regime = "high";
    Index p = 33;
    Index n = 400;
    double sigma = 0.5;
    double kappa = 1.0;
};

void run_fano(const Globals &g, const FanoArgs &a) {
    SnrRegime regime = a.regime == "high" ? SnrRegime::high : a.regime == "medium" ? SnrRegime::medium : SnrRegime::low;
    if (a.regime != "high" && a.regime != "medium" && a.regime != "low")
        throw ConfigError("fano: --regime must be high, medium or low");
    PackingInstance inst = gen_packing_instance(regime, a.p, a.n, a.sigma, a.kappa, g.seed);
    FanoReport rep = fano_accounting(inst);
    print(json{{"members", rep.members},
               {"log_m", rep.log_m},
               {"information_bound", rep.information_bound},
               {"information_small", rep.information_small()},
               {"testing_error_bound", rep.testing_error_bound},
               {"separation", rep.separation},
               {"predicted_lower_bound", rep.predicted_lower_bound},
               {"fano_lower_bound", rep.fano_lower_bound},
               {"degenerate", rep.degenerate}});
}

// ----------------------------------------------------------- phase-retrieval

struct PhaseArgs {
    std::string data;
    std::string program = "constrained";
    double eta = 0.0;
    std::optional<double> lambda;
    double sigma = 0.0;
    std::optional<double> assert_error;
};

void run_phase(const Globals &g, const PhaseArgs &a) {
    PhaseDataset d = io::read_phase_dataset(a.data);
    PhaseProgram program;
    if (a.program == "constrained") {
        ConstrainedConfig cfg;
        cfg.eta = a.eta;
        program = cfg;
    } else if (a.program == "regularized") {
        RegularizedConfig cfg;
        cfg.sigma2 = a.sigma * a.sigma;
        cfg.lambda = a.lambda ? std::variant<double, LambdaAuto>(*a.lambda)
                              : std::variant<double, LambdaAuto>(LambdaAuto{0.003, a.sigma, std::nullopt, 3.0});
        program = cfg;
    } else {
        throw ConfigError("phase-retrieval: --program must be constrained or regularized");
    }
    PhaseResult res = solve_phase(d, program, g.seed);
    if (!g.out.empty()) {
        std::ostringstream csv;
        csv << "beta\n";
        for (Index i = 0; i < res.beta_hat.size(); ++i)
            csv << io::format_double(res.beta_hat(i)) << "\n";
        io::write_atomic(g.out, csv.str());
    }
    json j{{"beta_hat", io::vec_to_json(res.beta_hat)}, {"stop_reason", to_string(res.report.stop_reason)}};
    if (res.error)
        j["error"] = *res.error;
    print(j);
    if (a.assert_error) {
        check_assertion(res.error.has_value(), "no truth recorded for --assert-error");
        check_assertion(*res.error <= *a.assert_error, "recovery error above threshold");
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Mixed linear regression via convex lifted estimation"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out", g.out, "Output path or prefix");
    auto *threads_opt = app.add_option("--threads", g.threads, "Worker threads for experiments")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config, "Experiment grid JSON");

    GenerateArgs gen;
    auto *generate = app.add_subcommand("generate", "Synthesize a mixed or phase-retrieval dataset");
    generate->add_option("--kind", gen.kind, "mixed | noisy-phase | noisy-magnitude");
    generate->add_option("--p", gen.p, "Dimension");
    generate->add_option("--n", gen.n, "Sample size");
    generate->add_option("--sigma", gen.sigma, "Noise level");
    generate->add_option("--gamma", gen.gamma, "Sum of component norms");
    generate->add_option("--noise", gen.noise, "gaussian | bounded | adversarial | none");
    generate->add_option("--labels", gen.labels, "bernoulli | fixed");
    generate->add_option("--truth", gen.truth, "random | antipodal");

    SolveArgs sol;
    auto *solve = app.add_subcommand("solve", "Fit an estimator to a dataset");
    solve->add_option("--data", sol.data, "Dataset prefix")->required();
    solve->add_option("--estimator", sol.estimator, "constrained | regularized | em | lad | oracle");
    solve->add_option("--eta", sol.eta, "Constraint radius");
    solve->add_option("--c4", sol.c4, "Constant of the radius rule");
    solve->add_option("--e-norm", sol.e_norm, "Noise norm for the radius rule");
    solve->add_option("--separation", sol.separation, "Component separation for the radius rule");
    solve->add_option("--lambda", sol.lambda, "Nuclear-norm weight");
    solve->add_option("--c5", sol.c5, "Constant of the weight rule");
    solve->add_option("--sigma", sol.sigma, "Known noise level");
    solve->add_option("--gamma", sol.gamma, "Signal scale for the weight rule");
    solve->add_option("--log-exponent", sol.log_exponent, "Power of log n in the weight rule");
    solve->add_option("--max-iter", sol.max_iter, "Iteration cap");
    solve->add_option("--tol", sol.tol, "Stopping tolerance");

    std::string estimate_path;
    auto *recover = app.add_subcommand("recover", "Split a lifted estimate into two regressors");
    recover->add_option("--estimate", estimate_path, "Estimate CSV")->required();

    auto *experiment = app.add_subcommand("experiment", "Run a grid experiment from --config");

    RipArgs rip;
    auto *ripcheck = app.add_subcommand("ripcheck", "Empirical isometry range of the paired-difference operator");
    ripcheck->add_option("--design", rip.design, "gaussian | bounded | rademacher");
    ripcheck->add_option("--p", rip.p, "Dimension");
    ripcheck->add_option("--n", rip.n, "Sample size");
    ripcheck->add_option("--rank", rip.rank, "Rank of the test matrices");
    ripcheck->add_option("--samples", rip.samples, "Number of test matrices");
    ripcheck->add_option("--noise-sigma", rip.noise_sigma, "Include the noise operator at this level");
    ripcheck->add_option("--assert-ratio", rip.assert_ratio, "Fail unless min/max >= value");
    ripcheck->add_option("--assert-min", rip.assert_min, "Fail unless min > value");

    KlArgs kl;
    auto *klcheck = app.add_subcommand("klcheck", "Quadrature KL of symmetric mixtures against the closed-form bound");
    klcheck->add_option("--sigma", kl.sigmas, "Noise levels");
    klcheck->add_option("--points", kl.points, "Grid points per axis");
    klcheck->add_option("--span", kl.span, "Grid covers [0, span * sigma]");
    klcheck->add_option("--slack", kl.slack, "Allowed excess over the bound");
    klcheck->add_flag("--assert", kl.assert_all, "Fail on any violation");

    MomentArgs mom;
    auto *momentcheck = app.add_subcommand("momentcheck", "Monte-Carlo Gaussian fourth-moment identity");
    momentcheck->add_option("--pairs", mom.pairs, "Random vector pairs");
    momentcheck->add_option("--samples", mom.samples, "Samples per pair");
    momentcheck->add_option("--dim", mom.dim, "Dimension");
    momentcheck->add_option("--min-fraction", mom.min_fraction, "Required fraction within 5 standard errors");
    momentcheck->add_flag("--assert", mom.assert_fraction, "Fail below --min-fraction");

    FanoArgs fa;
    auto *fano = app.add_subcommand("fano", "Packing construction and mutual-information accounting");
    fano->add_option("--regime", fa.regime, "high | medium | low");
    fano->add_option("--p", fa.p, "Dimension");
    fano->add_option("--n", fa.n, "Sample size");
    fano->add_option("--sigma", fa.sigma, "Noise level");
    fano->add_option("--kappa", fa.kappa, "Signal norm");

    PhaseArgs ph;
    auto *phase = app.add_subcommand("phase-retrieval", "Recover a signal from magnitude measurements");
    phase->add_option("--data", ph.data, "Phase dataset prefix")->required();
    phase->add_option("--program", ph.program, "constrained | regularized");
    phase->add_option("--eta", ph.eta, "Constraint radius");
    phase->add_option("--lambda", ph.lambda, "Nuclear-norm weight");
    phase->add_option("--sigma", ph.sigma, "Known noise level");
    phase->add_option("--assert-error", ph.assert_error, "Fail unless the recovery error is at most this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return exit_config;
    }

    try {
        if (*generate)
            run_generate(g, gen);
        else if (*solve)
            run_solve(g, sol);
        else if (*recover)
            run_recover(g, estimate_path);
        else if (*experiment)
            run_experiment(g, threads_opt->count() > 0);
        else if (*ripcheck)
            run_ripcheck(g, rip);
        else if (*klcheck)
            run_klcheck(g, kl);
        else if (*momentcheck)
            run_momentcheck(g, mom);
        else if (*fano)
            run_fano(g, fa);
        else if (*phase)
            run_phase(g, ph);
    } catch (const AssertionFailed &e) {
        std::cerr << e.what() << "\n";
        return exit_assert;
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const NumericalError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const nlohmann::json::exception &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }
    return 0;
}
