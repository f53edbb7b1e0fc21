#pragma once

#include <mlr/core.hpp>
#include <mlr/rng.hpp>
#include <mlr/solver_constrained.hpp>
#include <mlr/solver_regularized.hpp>
#include <mlr/spectral.hpp>
#include <mlr/synth.hpp>

#include <optional>
#include <variant>

namespace mlr {

/// Turns magnitude measurements into a mixed-regression sample by attaching
/// fresh Rademacher signs: y_i = eps_i z_i. The result is a mixture with
/// pair (beta, -beta) and noise eps_i s_i e_i (noisy-phase, s_i the sign of
/// x_i'beta + e_i) or eps_i e_i (noisy-magnitude, s_i the sign of x_i'beta).
///
/// When the input carries its truth and noise record, the implied labels
/// (1 where eps_i s_i = +1) and the transformed noise are recorded too; real
/// data never has them. `forced_signs` replaces the random signs (for tests).
inline MixedDataset reduce_to_mixed(const PhaseDataset &phase, std::uint64_t seed,
                                    const std::optional<Vec> &forced_signs = std::nullopt) {
    phase.validate();
    if (phase.model == PhaseModel::noisy_phase)
        detail::require((phase.zmeas.array() >= 0).all(), "reduce_to_mixed: noisy-phase magnitudes must be nonnegative");
    const Index n = phase.n();
    Vec eps(n);
    if (forced_signs) {
        detail::require(forced_signs->size() == n, "reduce_to_mixed: forced signs have wrong length");
        detail::require((forced_signs->array().abs() == 1.0).all(), "reduce_to_mixed: forced signs must be +-1");
        eps = *forced_signs;
    } else {
        Rng rng(seed, sign_stream);
        for (Index i = 0; i < n; ++i)
            eps(i) = rng.rademacher();
    }
    MixedDataset d;
    d.X = phase.X;
    d.y = eps.cwiseProduct(phase.zmeas);
    d.meta.model = std::string("phase-reduced-") + to_string(phase.model);
    d.meta.seed = seed;
    d.meta.sigma = phase.sigma;
    if (phase.truth && phase.e) {
        const Vec &beta = *phase.truth;
        const Vec clean = phase.X * beta;
        const Vec inner = phase.model == PhaseModel::noisy_phase ? Vec(clean + *phase.e) : clean;
        Labels z(n);
        Vec e(n);
        for (Index i = 0; i < n; ++i) {
            double s = inner(i) >= 0 ? 1.0 : -1.0;
            z(i) = eps(i) * s > 0 ? 1 : 0;
            e(i) = eps(i) * s * (*phase.e)(i);
        }
        // noisy-magnitude: y = eps (|x'b| + e) = (eps s) x'b + eps e.
        if (phase.model == PhaseModel::noisy_magnitude)
            e = eps.cwiseProduct(*phase.e);
        d.z = z;
        d.e = e;
        d.meta.truth = RegressorPair(beta, -beta);
    }
    return d;
}

using PhaseProgram = std::variant<ConstrainedConfig, RegularizedConfig>;

struct PhaseResult {
    /// (beta1_hat - beta2_hat) / 2, sign-canonicalised.
    Vec beta_hat;
    RegressorPair pair;
    SolverReport report;
    /// min over s = +-1 of ||s beta_hat - beta||, when the truth is known.
    std::optional<double> error;
};

/// Reduction, lifted solve, spectral split. The target pair is antipodal, so
/// the signal estimate is half the difference of the recovered components.
inline PhaseResult solve_phase(const PhaseDataset &phase, const PhaseProgram &program, std::uint64_t seed) {
    MixedDataset mixed = reduce_to_mixed(phase, seed);
    SolveResult solved = std::holds_alternative<ConstrainedConfig>(program)
                             ? solve_constrained(mixed, std::get<ConstrainedConfig>(program))
                             : solve_regularized(mixed, std::get<RegularizedConfig>(program));
    RegressorPair pair = recover_betas(solved.estimate);
    Vec beta_hat = 0.5 * (pair.beta1() - pair.beta2());
    detail::canonicalize_sign(beta_hat);
    PhaseResult out{beta_hat, pair, solved.report, std::nullopt};
    if (phase.truth)
        out.error = std::min((beta_hat - *phase.truth).norm(), (beta_hat + *phase.truth).norm());
    return out;
}

} // namespace mlr
