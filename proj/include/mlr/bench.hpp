#pragma once

// Grid experiments over (p, n, sigma, gamma) x estimator x trial, with
// per-cell caching, results.csv, summary.json and a small SVG plot.
// Needs nlohmann/json and a threads library.

#include <mlr/baselines.hpp>
#include <mlr/core.hpp>
#include <mlr/io.hpp>
#include <mlr/rng.hpp>
#include <mlr/solver_constrained.hpp>
#include <mlr/solver_regularized.hpp>
#include <mlr/spectral.hpp>
#include <mlr/synth.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace mlr::bench {

using json = nlohmann::json;

inline const std::vector<std::string> &known_estimators() {
    static const std::vector<std::string> names{"constrained", "regularized", "em", "lad", "oracle"};
    return names;
}

inline const std::vector<std::string> &known_noise_models() {
    static const std::vector<std::string> names{"gaussian", "bounded", "adversarial", "none"};
    return names;
}

struct EstimatorSettings {
    /// Constant of the oracle constraint radius c4 sqrt(n) ||e|| ||beta1 - beta2||.
    double c4 = 1.0;
    /// Constant and log exponent of the oracle regularisation weight.
    double c5 = 0.003;
    double log_exponent = 3.0;
    /// Weight used when the rule gives 0 (sigma = 0), relative to sum y_i^2.
    double lambda_noiseless = 1e-8;
    int max_iter = 5000;
    double tol_constrained = 1e-6;
    double tol_regularized = 1e-7;
    int em_max_rounds = 500;
};

struct ExperimentGrid {
    std::vector<Index> p;
    std::vector<Index> n;
    std::vector<double> sigma;
    std::vector<double> gamma{1.0};
    std::vector<std::string> estimators{"constrained", "regularized"};
    /// gaussian | bounded | adversarial (aligned cancellation, budget sigma sqrt(n)) | none
    std::string noise_model = "gaussian";
    /// bernoulli | fixed (exactly n/2 per component)
    std::string labels = "bernoulli";
    /// random (independent directions) | antipodal (beta2 = -beta1); both with ||beta_b|| = gamma / 2
    std::string truth = "random";
    int trials = 1;
    std::uint64_t base_seed = 0;
    std::string output_dir = "experiment";
    int threads = 1;
    /// When false, wall_time is written as 0 so reruns are byte-identical.
    bool record_wall_time = true;
    EstimatorSettings settings;

    void validate() const {
        mlr::detail::require(!p.empty() && !n.empty() && !sigma.empty() && !gamma.empty(),
                        "ExperimentGrid: p, n, sigma and gamma must be nonempty");
        for (Index v : p)
            mlr::detail::require(v >= 1, "ExperimentGrid: p must be positive");
        for (Index v : n)
            mlr::detail::require(v >= 1, "ExperimentGrid: n must be positive");
        for (double v : sigma)
            mlr::detail::require(v >= 0 && std::isfinite(v), "ExperimentGrid: sigma must be nonnegative");
        for (double v : gamma)
            mlr::detail::require(v > 0 && std::isfinite(v), "ExperimentGrid: gamma must be positive");
        mlr::detail::require(!estimators.empty(), "ExperimentGrid: no estimators");
        for (const auto &e : estimators)
            mlr::detail::require(std::find(known_estimators().begin(), known_estimators().end(), e) != known_estimators().end(),
                            "ExperimentGrid: unknown estimator " + e);
        mlr::detail::require(std::find(known_noise_models().begin(), known_noise_models().end(), noise_model) !=
                            known_noise_models().end(),
                        "ExperimentGrid: unknown noise model " + noise_model);
        mlr::detail::require(labels == "bernoulli" || labels == "fixed", "ExperimentGrid: labels must be bernoulli or fixed");
        mlr::detail::require(truth == "random" || truth == "antipodal", "ExperimentGrid: truth must be random or antipodal");
        mlr::detail::require(trials >= 1, "ExperimentGrid: trials must be at least 1");
        mlr::detail::require(threads >= 1, "ExperimentGrid: threads must be at least 1");
        mlr::detail::require(settings.max_iter >= 1 && settings.em_max_rounds >= 1, "ExperimentGrid: iteration caps must be positive");
    }

    json to_json() const {
        json s{{"c4", settings.c4},
               {"c5", settings.c5},
               {"log_exponent", settings.log_exponent},
               {"lambda_noiseless", settings.lambda_noiseless},
               {"max_iter", settings.max_iter},
               {"tol_constrained", settings.tol_constrained},
               {"tol_regularized", settings.tol_regularized},
               {"em_max_rounds", settings.em_max_rounds}};
        return json{{"p", p},
                    {"n", n},
                    {"sigma", sigma},
                    {"gamma", gamma},
                    {"estimators", estimators},
                    {"noise_model", noise_model},
                    {"labels", labels},
                    {"truth", truth},
                    {"trials", trials},
                    {"base_seed", base_seed},
                    {"output_dir", output_dir},
                    {"threads", threads},
                    {"record_wall_time", record_wall_time},
                    {"settings", s}};
    }

    static ExperimentGrid from_json(const json &j) {
        static const std::vector<std::string> keys{"p",      "n",         "sigma",       "gamma",   "estimators",
                                                   "noise_model", "labels", "truth",     "trials",  "base_seed",
                                                   "output_dir",  "threads", "record_wall_time", "settings"};
        for (auto it = j.begin(); it != j.end(); ++it)
            mlr::detail::require(std::find(keys.begin(), keys.end(), it.key()) != keys.end(),
                            "experiment config: unknown key " + it.key());
        ExperimentGrid g;
        try {
            g.p = j.at("p").get<std::vector<Index>>();
            g.n = j.at("n").get<std::vector<Index>>();
            g.sigma = j.at("sigma").get<std::vector<double>>();
            g.gamma = j.value("gamma", g.gamma);
            g.estimators = j.value("estimators", g.estimators);
            g.noise_model = j.value("noise_model", g.noise_model);
            g.labels = j.value("labels", g.labels);
            g.truth = j.value("truth", g.truth);
            g.trials = j.value("trials", g.trials);
            g.base_seed = j.value("base_seed", g.base_seed);
            g.output_dir = j.value("output_dir", g.output_dir);
            g.threads = j.value("threads", g.threads);
            g.record_wall_time = j.value("record_wall_time", g.record_wall_time);
            if (j.contains("settings")) {
                const json &s = j["settings"];
                auto &t = g.settings;
                t.c4 = s.value("c4", t.c4);
                t.c5 = s.value("c5", t.c5);
                t.log_exponent = s.value("log_exponent", t.log_exponent);
                t.lambda_noiseless = s.value("lambda_noiseless", t.lambda_noiseless);
                t.max_iter = s.value("max_iter", t.max_iter);
                t.tol_constrained = s.value("tol_constrained", t.tol_constrained);
                t.tol_regularized = s.value("tol_regularized", t.tol_regularized);
                t.em_max_rounds = s.value("em_max_rounds", t.em_max_rounds);
            }
        } catch (const json::exception &ex) {
            throw ConfigError(std::string("experiment config: ") + ex.what());
        }
        g.validate();
        return g;
    }
};

inline ExperimentGrid load_grid(const std::string &path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error &ex) {
        throw ConfigError(path + ": " + ex.what());
    }
    return ExperimentGrid::from_json(j);
}

struct TrialResult {
    int trial = 0;
    double rho = std::numeric_limits<double>::quiet_NaN();
    double err1 = std::numeric_limits<double>::quiet_NaN();
    double err2 = std::numeric_limits<double>::quiet_NaN();
    double e_norm = 0.0;
    int iters = 0;
    double wall_time = 0.0;
    /// converged | max_iter | infeasible | numerical_error | config_error
    std::string status = "converged";

    bool failed() const { return !std::isfinite(rho); }
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_of(std::vector<double> v, double q) {
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// FNV-1a, stable across platforms and runs.
inline std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace detail

struct CellResult {
    Index p = 0;
    Index n = 0;
    double sigma = 0.0;
    double gamma = 0.0;
    std::string estimator;
    std::string noise_model;
    std::vector<TrialResult> trials;

    double median_rho = std::numeric_limits<double>::quiet_NaN();
    double iqr_rho = std::numeric_limits<double>::quiet_NaN();
    double median_err1 = std::numeric_limits<double>::quiet_NaN();
    double median_err2 = std::numeric_limits<double>::quiet_NaN();
    double median_e_norm = 0.0;
    int failures = 0;

    /// Statistics over the trials that produced an estimate.
    void summarize() {
        std::vector<double> rho, e1, e2, en;
        failures = 0;
        for (const auto &t : trials) {
            en.push_back(t.e_norm);
            if (t.failed()) {
                ++failures;
                continue;
            }
            rho.push_back(t.rho);
            e1.push_back(t.err1);
            e2.push_back(t.err2);
        }
        median_rho = detail::median_of(rho);
        iqr_rho = detail::quantile_of(rho, 0.75) - detail::quantile_of(rho, 0.25);
        median_err1 = detail::median_of(e1);
        median_err2 = detail::median_of(e2);
        median_e_norm = detail::median_of(en);
    }
};

/// Seed of the data for one trial. It does not depend on the estimator, so
/// every estimator in a cell sees the same datasets.
inline std::uint64_t trial_seed(const ExperimentGrid &grid, Index p, Index n, double sigma, double gamma, int trial) {
    return hash_words({grid.base_seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(n), hash_double(sigma),
                       hash_double(gamma), static_cast<std::uint64_t>(trial)});
}

/// Stream for the generating pair, separate from the dataset streams.
inline constexpr std::uint64_t truth_stream = 5;

inline RegressorPair sample_truth(const std::string &shape, Index p, double gamma, std::uint64_t seed) {
    mlr::detail::require(shape == "random" || shape == "antipodal", "truth must be random or antipodal, got " + shape);
    Rng rng(seed, truth_stream);
    Vec b1 = 0.5 * gamma * rng.unit_vector(p);
    if (shape == "antipodal")
        return {b1, -b1};
    Vec b2 = 0.5 * gamma * rng.unit_vector(p);
    return {b1, b2};
}

/// bernoulli | fixed
inline LabelModel label_model_named(const std::string &name, Index n) {
    mlr::detail::require(name == "bernoulli" || name == "fixed", "labels must be bernoulli or fixed, got " + name);
    if (name == "fixed")
        return FixedCounts{n / 2, n - n / 2};
    return BalancedBernoulli{};
}

/// gaussian | bounded | adversarial (aligned cancellation, budget sigma sqrt(n)) | none
inline NoiseModel noise_model_named(const std::string &name, double sigma, Index n) {
    if (name == "gaussian")
        return StochasticNoise{sigma, NoiseDistribution::gaussian};
    if (name == "bounded")
        return StochasticNoise{sigma, NoiseDistribution::bounded_subgaussian};
    if (name == "adversarial")
        return AdversarialNoise{sigma * std::sqrt(static_cast<double>(n)), AlignedCancel{}};
    mlr::detail::require(name == "none", "unknown noise model " + name);
    return NoNoise{};
}

inline MixedDataset trial_dataset(const ExperimentGrid &grid, Index p, Index n, double sigma, double gamma, int trial) {
    const std::uint64_t seed = trial_seed(grid, p, n, sigma, gamma, trial);
    RegressorPair truth = sample_truth(grid.truth, p, gamma, seed);
    return gen_mixed(truth, n, label_model_named(grid.labels, n), GaussianDesign{},
                     noise_model_named(grid.noise_model, sigma, n), seed);
}

/// Runs one estimator on one trial dataset. Solver exceptions become a status.
inline TrialResult run_trial(const ExperimentGrid &grid, Index p, Index n, double sigma, double gamma,
                             const std::string &estimator, int trial) {
    TrialResult out;
    out.trial = trial;
    const MixedDataset data = trial_dataset(grid, p, n, sigma, gamma, trial);
    const RegressorPair &truth = *data.meta.truth;
    out.e_norm = data.e->norm();
    const auto &s = grid.settings;
    mlr::detail::Stopwatch clock;
    try {
        std::optional<RegressorPair> estimate;
        if (estimator == "constrained") {
            ConstrainedConfig cfg;
            cfg.eta = EtaAuto{s.c4, out.e_norm, (truth.beta1() - truth.beta2()).norm()};
            cfg.max_iter = s.max_iter;
            cfg.tol_primal = cfg.tol_dual = s.tol_constrained;
            auto res = solve_constrained(data, cfg);
            estimate = recover_betas(res.estimate);
            out.iters = res.report.iterations;
            out.status = to_string(res.report.stop_reason);
        } else if (estimator == "regularized") {
            RegularizedConfig cfg;
            cfg.lambda = LambdaAuto{s.c5, sigma, gamma, s.log_exponent};
            if (resolve_lambda(cfg, data) <= 0.0)
                cfg.lambda = s.lambda_noiseless * std::max(data.y.squaredNorm(), 1e-300);
            cfg.sigma2 = grid.noise_model == "gaussian" || grid.noise_model == "bounded" ? sigma * sigma : 0.0;
            cfg.max_iter = s.max_iter;
            cfg.tol_rel_obj = s.tol_regularized;
            auto res = solve_regularized(data, cfg);
            estimate = recover_betas(res.estimate);
            out.iters = res.report.iterations;
            out.status = to_string(res.report.stop_reason);
        } else if (estimator == "em") {
            EmConfig cfg;
            cfg.init = RandomInit{hash_words({data.meta.seed, 0x656dULL}), gamma};
            cfg.max_rounds = s.em_max_rounds;
            auto res = fit_em(data, cfg);
            estimate = res.pair;
            out.iters = res.rounds;
            out.status = res.rounds < s.em_max_rounds ? "converged" : "max_iter";
        } else if (estimator == "lad") {
            auto res = fit_blind_lad(data);
            estimate = RegressorPair(res.beta, res.beta);
            out.iters = res.iterations;
            out.status = res.relative_gap <= 1e-8 ? "converged" : "max_iter";
        } else if (estimator == "oracle") {
            estimate = fit_oracle(data);
            out.iters = 1;
            out.status = "converged";
        } else {
            throw ConfigError("run_trial: unknown estimator " + estimator);
        }
        auto br = rho_breakdown(*estimate, truth);
        out.rho = br.rho;
        out.err1 = br.per_beta[0];
        out.err2 = br.per_beta[1];
    } catch (const InfeasibleError &) {
        out.status = "infeasible";
    } catch (const NumericalError &) {
        out.status = "numerical_error";
    } catch (const ConfigError &) {
        out.status = "config_error";
    }
    out.wall_time = grid.record_wall_time ? clock.seconds() : 0.0;
    return out;
}

namespace detail {

inline json trial_to_json(const TrialResult &t) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return json{{"trial", t.trial}, {"rho", num(t.rho)},     {"err1", num(t.err1)},
                {"err2", num(t.err2)}, {"e_norm", t.e_norm}, {"iters", t.iters},
                {"wall_time", t.wall_time}, {"status", t.status}};
}

inline TrialResult trial_from_json(const json &j) {
    auto num = [](const json &v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
    TrialResult t;
    t.trial = j.at("trial").get<int>();
    t.rho = num(j.at("rho"));
    t.err1 = num(j.at("err1"));
    t.err2 = num(j.at("err2"));
    t.e_norm = j.at("e_norm").get<double>();
    t.iters = j.at("iters").get<int>();
    t.wall_time = j.at("wall_time").get<double>();
    t.status = j.at("status").get<std::string>();
    return t;
}

/// Everything that influences the trials of one cell.
inline std::uint64_t cell_hash(const ExperimentGrid &grid, const CellResult &cell) {
    json j = grid.to_json();
    j.erase("output_dir");
    j.erase("threads");
    j.erase("p");
    j.erase("n");
    j.erase("sigma");
    j.erase("gamma");
    j.erase("estimators");
    j["cell"] = json{{"p", cell.p}, {"n", cell.n}, {"sigma", cell.sigma}, {"gamma", cell.gamma}, {"estimator", cell.estimator}};
    return fnv1a(j.dump());
}

/// Runs `count` independent jobs on up to `threads` workers.
inline void parallel_for(int count, int threads, const std::function<void(int)> &job) {
    const int workers = std::max(1, std::min(threads, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i)
            job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++)
                job(i);
        });
    for (auto &t : pool)
        t.join();
}

} // namespace detail

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    int count = 0;
};

enum class ScalingAxis { sigma, n, e_norm };

inline const char *to_string(ScalingAxis a) {
    switch (a) {
    case ScalingAxis::sigma:
        return "sigma";
    case ScalingAxis::n:
        return "n";
    case ScalingAxis::e_norm:
        return "e_norm";
    }
    return "?";
}

/// Least-squares fit of log(median rho) on log(axis) over the given cells.
/// Needs at least 3 cells with positive, finite coordinates.
inline SlopeFit fit_scaling_slope(const std::vector<CellResult> &cells, ScalingAxis axis) {
    std::vector<double> xs, ys;
    for (const auto &c : cells) {
        double x = axis == ScalingAxis::sigma ? c.sigma : axis == ScalingAxis::n ? static_cast<double>(c.n) : c.median_e_norm;
        mlr::detail::require(x > 0 && std::isfinite(x), "fit_scaling_slope: axis values must be positive");
        mlr::detail::require(c.median_rho > 0 && std::isfinite(c.median_rho),
                        "fit_scaling_slope: median error must be positive and finite");
        xs.push_back(std::log(x));
        ys.push_back(std::log(c.median_rho));
    }
    const int k = static_cast<int>(xs.size());
    mlr::detail::require(k >= 3, "fit_scaling_slope: at least 3 cells are required");
    double mx = 0, my = 0;
    for (int i = 0; i < k; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < k; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    mlr::detail::require(sxx > 0, "fit_scaling_slope: axis values must not all coincide");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.count = k;
    double sse = 0;
    for (int i = 0; i < k; ++i) {
        double r = ys[i] - fit.intercept - fit.slope * xs[i];
        sse += r * r;
    }
    fit.stderr_slope = k > 2 ? std::sqrt(sse / (k - 2) / sxx) : 0.0;
    return fit;
}

/// log-log plot of median rho against sigma, one polyline per series.
inline std::string svg_plot(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> &series,
                            const std::string &title) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto &[name, pts] : series)
        for (auto [x, y] : pts) {
            if (!(x > 0 && y > 0 && std::isfinite(y)))
                continue;
            x0 = std::min(x0, std::log10(x));
            x1 = std::max(x1, std::log10(x));
            y0 = std::min(y0, std::log10(y));
            y1 = std::max(y1, std::log10(y));
        }
    if (!(x1 >= x0)) {
        x0 = y0 = 0;
        x1 = y1 = 1;
    }
    if (x1 == x0)
        x1 = x0 + 1;
    if (y1 == y0)
        y1 = y0 + 1;
    const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
    auto px = [&](double x) { return L + (std::log10(x) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (std::log10(y) - y0) / (y1 - y0) * (H - T - B); };
    static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << L << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << (W - R + L) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\">log10 sigma ["
      << io::format_double(x0) << ", " << io::format_double(x1) << "]</text>\n";
    s << "<text x=\"8\" y=\"" << T - 8 << "\" font-size=\"12\">log10 median rho [" << io::format_double(y0) << ", "
      << io::format_double(y1) << "]</text>\n";
    int k = 0;
    for (const auto &[name, pts] : series) {
        const char *color = colors[k % 6];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (auto [x, y] : pts)
            if (x > 0 && y > 0 && std::isfinite(y))
                s << px(x) << ',' << py(y) << ' ';
        s << "\"/>\n";
        s << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" font-size=\"12\" fill=\"" << color
          << "\">" << name << "</text>\n";
        ++k;
    }
    s << "</svg>\n";
    return s.str();
}

struct GridResult {
    std::vector<CellResult> cells;
    int cells_computed = 0;
    int cells_cached = 0;
};

/// Runs (or reloads) every cell and writes results.csv, summary.json and
/// phase_diagram.svg into grid.output_dir. Cell files under cells/ carry a
/// hash of their inputs, so an interrupted run resumes where it stopped.
inline GridResult run_grid(const ExperimentGrid &grid) {
    grid.validate();
    namespace fs = std::filesystem;
    const fs::path root(grid.output_dir);
    fs::create_directories(root / "cells");

    GridResult result;
    for (std::size_t ip = 0; ip < grid.p.size(); ++ip)
        for (std::size_t in = 0; in < grid.n.size(); ++in)
            for (std::size_t is = 0; is < grid.sigma.size(); ++is)
                for (std::size_t ig = 0; ig < grid.gamma.size(); ++ig)
                    for (const auto &est : grid.estimators) {
                        CellResult cell;
                        cell.p = grid.p[ip];
                        cell.n = grid.n[in];
                        cell.sigma = grid.sigma[is];
                        cell.gamma = grid.gamma[ig];
                        cell.estimator = est;
                        cell.noise_model = grid.noise_model;
                        const std::uint64_t h = detail::cell_hash(grid, cell);
                        const fs::path file = root / "cells" /
                                              ("cell_" + std::to_string(ip) + "_" + std::to_string(in) + "_" +
                                               std::to_string(is) + "_" + std::to_string(ig) + "_" + est + ".json");
                        bool cached = false;
                        if (fs::exists(file)) {
                            try {
                                json j = json::parse(io::read_file(file));
                                if (j.at("hash").get<std::uint64_t>() == h &&
                                    static_cast<int>(j.at("trials").size()) == grid.trials) {
                                    for (const auto &t : j["trials"])
                                        cell.trials.push_back(detail::trial_from_json(t));
                                    cached = true;
                                }
                            } catch (const std::exception &) {
                                cell.trials.clear();
                            }
                        }
                        if (!cached) {
                            cell.trials.resize(static_cast<std::size_t>(grid.trials));
                            detail::parallel_for(grid.trials, grid.threads, [&](int t) {
                                cell.trials[static_cast<std::size_t>(t)] =
                                    run_trial(grid, cell.p, cell.n, cell.sigma, cell.gamma, est, t);
                            });
                            json j{{"hash", h}, {"trials", json::array()}};
                            for (const auto &t : cell.trials)
                                j["trials"].push_back(detail::trial_to_json(t));
                            io::write_atomic(file, j.dump(1) + "\n");
                            ++result.cells_computed;
                        } else {
                            ++result.cells_cached;
                        }
                        cell.summarize();
                        result.cells.push_back(std::move(cell));
                    }

    // results.csv
    std::ostringstream csv;
    csv << "p,n,sigma,gamma,estimator,noise_model,trial,rho,err1,err2,iters,wall_time,status\n";
    auto num = [](double v) { return std::isfinite(v) ? io::format_double(v) : std::string("nan"); };
    for (const auto &c : result.cells)
        for (const auto &t : c.trials)
            csv << c.p << ',' << c.n << ',' << io::format_double(c.sigma) << ',' << io::format_double(c.gamma) << ','
                << c.estimator << ',' << c.noise_model << ',' << t.trial << ',' << num(t.rho) << ',' << num(t.err1)
                << ',' << num(t.err2) << ',' << t.iters << ',' << io::format_double(t.wall_time) << ',' << t.status
                << '\n';
    io::write_atomic(root / "results.csv", csv.str());

    // summary.json
    auto jnum = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json summary{{"config", grid.to_json()}, {"cells", json::array()}, {"slopes", json::array()}};
    for (const auto &c : result.cells)
        summary["cells"].push_back(json{{"p", c.p},
                                        {"n", c.n},
                                        {"sigma", c.sigma},
                                        {"gamma", c.gamma},
                                        {"estimator", c.estimator},
                                        {"median_rho", jnum(c.median_rho)},
                                        {"iqr_rho", jnum(c.iqr_rho)},
                                        {"median_err1", jnum(c.median_err1)},
                                        {"median_err2", jnum(c.median_err2)},
                                        {"failures", c.failures}});
    // Slopes along sigma for each (p, n, gamma, estimator), split into the
    // windows sigma <= gamma and sigma > gamma (n / p)^(1/4).
    for (Index p : grid.p)
        for (Index n : grid.n)
            for (double gamma : grid.gamma)
                for (const auto &est : grid.estimators) {
                    const double knee = gamma * std::pow(static_cast<double>(n) / static_cast<double>(p), 0.25);
                    std::vector<CellResult> high, low;
                    for (const auto &c : result.cells) {
                        if (c.p != p || c.n != n || c.gamma != gamma || c.estimator != est)
                            continue;
                        if (!(c.median_rho > 0 && c.sigma > 0))
                            continue;
                        if (c.sigma <= gamma)
                            high.push_back(c);
                        else if (c.sigma > knee)
                            low.push_back(c);
                    }
                    for (auto [name, cells] : {std::pair{"high-snr", &high}, std::pair{"low-snr", &low}}) {
                        if (cells->size() < 3)
                            continue;
                        SlopeFit f = fit_scaling_slope(*cells, ScalingAxis::sigma);
                        summary["slopes"].push_back(json{{"axis", "sigma"},
                                                         {"window", name},
                                                         {"p", p},
                                                         {"n", n},
                                                         {"gamma", gamma},
                                                         {"estimator", est},
                                                         {"slope", f.slope},
                                                         {"stderr", f.stderr_slope},
                                                         {"count", f.count}});
                    }
                }
    io::write_atomic(root / "summary.json", summary.dump(2) + "\n");

    // phase_diagram.svg for the first (p, n, gamma).
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    for (const auto &est : grid.estimators) {
        std::vector<std::pair<double, double>> pts;
        for (const auto &c : result.cells)
            if (c.p == grid.p[0] && c.n == grid.n[0] && c.gamma == grid.gamma[0] && c.estimator == est)
                pts.emplace_back(c.sigma, c.median_rho);
        series.emplace_back(est, std::move(pts));
    }
    io::write_atomic(root / "phase_diagram.svg",
                     svg_plot(series, "median rho vs sigma (p=" + std::to_string(grid.p[0]) + ", n=" +
                                          std::to_string(grid.n[0]) + ")"));
    return result;
}

} // namespace mlr::bench
