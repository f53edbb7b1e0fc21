#include <mlr/core.hpp>
#include <mlr/rng.hpp>
#include <mlr/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace mlr;

namespace {

RegressorPair unit_pair(std::uint64_t seed, Index p) {
    Rng rng(seed, 99);
    return {rng.unit_vector(p), rng.unit_vector(p)};
}

} // namespace

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    Rng a(5, 0), b(5, 0), c(5, 1), d(6, 0);
    for (int i = 0; i < 10; ++i) {
        auto va = a.next();
        EXPECT_EQ(va, b.next());
        EXPECT_NE(va, c.next());
        EXPECT_NE(va, d.next());
    }
}

TEST(Rng, NormalMomentsAreStandard) {
    Rng rng(1, 0);
    double s1 = 0, s2 = 0, s4 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    EXPECT_NEAR(s1 / n, 0.0, 5 * std::sqrt(1.0 / n));
    EXPECT_NEAR(s2 / n, 1.0, 5 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(GenMixed, DeterministicGivenSeed) {
    RegressorPair pair = unit_pair(1, 4);
    MixedDataset a = gen_mixed(pair, 100, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.5}, 42);
    MixedDataset b = gen_mixed(pair, 100, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.5}, 42);
    MixedDataset c = gen_mixed(pair, 100, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.5}, 43);
    EXPECT_EQ(a.X, b.X);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(*a.z, *b.z);
    EXPECT_NE(a.X, c.X);
}

TEST(GenMixed, NoiseStreamIndependentOfDesign) {
    // Changing only the noise level leaves design and labels untouched.
    RegressorPair pair = unit_pair(2, 3);
    MixedDataset a = gen_mixed(pair, 50, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{0.1}, 7);
    MixedDataset b = gen_mixed(pair, 50, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{2.0}, 7);
    EXPECT_EQ(a.X, b.X);
    EXPECT_EQ(*a.z, *b.z);
    EXPECT_LE((*a.e * 20.0 - *b.e).norm(), 1e-12);
}

TEST(GenMixed, ResponsesReconstructExactly) {
    MixedDataset d = gen_mixed(unit_pair(3, 5), 300, BalancedBernoulli{}, GaussianDesign{}, StochasticNoise{1.0}, 3);
    EXPECT_LE(d.reconstruction_error(), 1e-12);
    EXPECT_EQ(d.meta.model, "mixed-gaussian");
    EXPECT_TRUE(d.meta.truth.has_value());
}

TEST(GenMixed, FixedCountsAreExact) {
    MixedDataset d = gen_mixed(unit_pair(4, 2), 101, FixedCounts{40, 61}, GaussianDesign{}, NoNoise{}, 4);
    EXPECT_EQ(d.n1(), 40);
    EXPECT_EQ(d.n2(), 61);
    EXPECT_THROW(gen_mixed(unit_pair(4, 2), 100, FixedCounts{40, 61}, GaussianDesign{}, NoNoise{}, 4), ConfigError);
}

TEST(GenMixed, BalancedLabelsAreRoughlyHalf) {
    MixedDataset d = gen_mixed(unit_pair(5, 2), 10000, BalancedBernoulli{}, GaussianDesign{}, NoNoise{}, 5);
    EXPECT_NEAR(static_cast<double>(d.n1()) / 10000.0, 0.5, 5 * 0.005);
}

TEST(GenMixed, AlignedCancelHasExactBudgetAndPullsTogether) {
    RegressorPair pair = unit_pair(6, 4);
    MixedDataset d = gen_mixed(pair, 200, BalancedBernoulli{}, GaussianDesign{}, AdversarialNoise{3.0, AlignedCancel{}}, 6);
    EXPECT_NEAR(d.e->norm(), 3.0, 1e-12);
    EXPECT_LE(d.reconstruction_error(), 1e-12);
    // Every label-1 row moves towards beta2 along v = (beta1 - beta2)/||.||.
    Vec v = pair.separation().normalized();
    for (Index i = 0; i < d.n(); ++i) {
        double xv = d.X.row(i).dot(v);
        double dir = (*d.z)(i) == 1 ? -1.0 : 1.0;
        EXPECT_GE(dir * (*d.e)(i) * xv, -1e-15);
    }
}

TEST(GenMixed, CustomAdversarialVectorIsUsedAsGiven) {
    Vec e = Vec::LinSpaced(10, -1, 1);
    MixedDataset d = gen_mixed(unit_pair(7, 2), 10, BalancedBernoulli{}, GaussianDesign{}, AdversarialNoise{e.norm(), e}, 7);
    EXPECT_EQ(*d.e, e);
    EXPECT_THROW(gen_mixed(unit_pair(7, 2), 11, BalancedBernoulli{}, GaussianDesign{}, AdversarialNoise{1.0, e}, 7),
                 ConfigError);
}

TEST(BoundedDesign, EntriesBoundedWithUnitVariance) {
    const Index n = 4000;
    Rng rng(8, design_stream);
    BoundedSubgaussianDesign design{2.0};
    Mat X = sample_design(design, n, 5, rng);
    const double bound = design_bound(design, n);
    EXPECT_LE(X.cwiseAbs().maxCoeff(), bound);
    double var = X.array().square().mean();
    EXPECT_NEAR(var, 1.0, 5 * std::sqrt(2.0 / (n * 5)));
    EXPECT_NEAR(design_fourth_moment(design, n), X.array().pow(4).mean(), 0.1);
}

TEST(BoundedNoise, UnitVarianceTruncation) {
    Rng rng(9, noise_stream);
    Vec e = sample_noise(StochasticNoise{0.5, NoiseDistribution::bounded_subgaussian, 3.0}, 100000, rng);
    EXPECT_NEAR(e.squaredNorm() / 1e5, 0.25, 5 * 0.25 * std::sqrt(2.0 / 1e5));
    EXPECT_LE(e.cwiseAbs().maxCoeff(), 0.5 * 3.0 * 1.0001);
}

TEST(AdversarialWitness, ResponsesAreBitIdentical) {
    Rng rng(10, 0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Vec v = rng.unit_vector(6);
        AdversarialPair w = gen_adversarial_cancel(v, 1.5, 0.4, 120, seed);
        EXPECT_EQ((w.first.y - w.second.y).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(w.first.X, w.second.X);
        EXPECT_NEAR(rho_metric(*w.first.meta.truth, *w.second.meta.truth), 0.8, 1e-12);
        // Each instance explains y through its own pair and noise.
        EXPECT_LE(w.first.reconstruction_error(), 1e-12);
        EXPECT_LE(w.second.reconstruction_error(), 1e-12);
    }
}

TEST(AdversarialWitness, RejectsNonUnitDirection) {
    EXPECT_THROW(gen_adversarial_cancel(Vec::Ones(3), 1.0, 0.1, 10, 0), ConfigError);
}

TEST(Packing, HighSnrMembersAreSeparatedWithExactNorm) {
    PackingInstance inst = gen_packing_instance(SnrRegime::high, 33, 400, 0.5, 1.0, 1);
    ASSERT_GE(inst.pairs.size(), 2u);
    for (std::size_t i = 0; i < inst.pairs.size(); ++i) {
        EXPECT_NEAR(inst.pairs[i].beta1().norm(), 1.0, 1e-12);
        EXPECT_LE((inst.pairs[i].beta1() + inst.pairs[i].beta2()).norm(), 0.0);
        for (std::size_t j = i + 1; j < inst.pairs.size(); ++j)
            EXPECT_GE(rho_metric(inst.pairs[i], inst.pairs[j]), inst.separation * (1 - 1e-12));
    }
    EXPECT_NEAR(inst.separation, 2 * 0.25 * 0.5 * std::sqrt(32.0 / 400.0), 1e-15);
    EXPECT_EQ(inst.sample.n(), 400);
}

TEST(Packing, CodebookHasMinimumDistanceToWordsAndComplements) {
    Rng rng(11, packing_stream);
    auto book = greedy_codebook(48, rng);
    EXPECT_EQ(book.size(), 8u);
    std::set<std::vector<int>> unique(book.begin(), book.end());
    EXPECT_EQ(unique.size(), book.size());
    for (std::size_t i = 0; i < book.size(); ++i)
        for (std::size_t j = i + 1; j < book.size(); ++j) {
            int h = 0;
            for (std::size_t k = 0; k < 48; ++k)
                h += book[i][k] != book[j][k];
            EXPECT_GE(h, 3);
            EXPECT_GE(48 - h, 3);
        }
}

TEST(Packing, MediumAndLowRegimes) {
    PackingInstance med = gen_packing_instance(SnrRegime::medium, 33, 400, 2.0, 0.8, 2);
    EXPECT_NEAR(med.separation, 2 * 0.25 * (4.0 / 0.8) * std::sqrt(32.0 / 400.0), 1e-12);
    PackingInstance low = gen_packing_instance(SnrRegime::low, 33, 400, 2.0, 0.1, 3);
    for (const auto &pair : low.pairs)
        EXPECT_GE(pair.beta1().norm(), 0.1);
}

TEST(Packing, InadmissibleParametersThrowConfigError) {
    EXPECT_THROW(gen_packing_instance(SnrRegime::high, 33, 400, 2.0, 0.5, 1), ConfigError);  // 2 kappa <= sigma
    EXPECT_THROW(gen_packing_instance(SnrRegime::medium, 33, 400, 0.5, 1.0, 1), ConfigError); // 2 kappa > sigma
    EXPECT_THROW(gen_packing_instance(SnrRegime::low, 33, 400, 0.5, 10.0, 1), ConfigError);
    EXPECT_THROW(gen_packing_instance(SnrRegime::high, 8, 400, 0.5, 1.0, 1), ConfigError);
}

TEST(PhaseGenerator, MeasurementsAreMagnitudes) {
    Rng rng(12, 0);
    Vec beta = rng.unit_vector(4);
    PhaseDataset ph = gen_phase_retrieval(beta, 100, PhaseModel::noisy_phase, StochasticNoise{0.1}, 12);
    EXPECT_LE((ph.zmeas - (ph.X * beta + *ph.e).cwiseAbs()).cwiseAbs().maxCoeff(), 1e-15);
    PhaseDataset pm = gen_phase_retrieval(beta, 100, PhaseModel::noisy_magnitude, StochasticNoise{0.1}, 12);
    EXPECT_LE((pm.zmeas - ((pm.X * beta).cwiseAbs() + *pm.e)).cwiseAbs().maxCoeff(), 1e-15);
}
