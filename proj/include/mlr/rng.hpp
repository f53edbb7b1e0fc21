#pragma once

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace mlr {

/// SplitMix64 finaliser; used to derive independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a list of 64-bit words.
inline std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto w : words)
        h = splitmix64(h ^ splitmix64(w));
    return h;
}

inline std::uint64_t hash_double(double v) { return std::bit_cast<std::uint64_t>(v); }

/// Random source whose output is a pure function of (seed, stream).
/// Different streams of one seed are statistically independent, so a
/// generator can draw design, labels and noise from separate streams and
/// changing one model leaves the others bit-identical.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(hash_words({seed, stream})) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    bool bernoulli(double p = 0.5) { return uniform() < p; }
    double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
    std::uint64_t next() { return engine_(); }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        // Row-major fill so that a prefix of rows does not depend on the row count.
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j)
                m(i, j) = normal();
        return m;
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v(i) = normal();
        return v;
    }

    /// Uniformly distributed unit vector.
    Eigen::VectorXd unit_vector(Eigen::Index n) {
        Eigen::VectorXd v;
        do {
            v = normal_vector(n);
        } while (v.norm() == 0.0);
        return v / v.norm();
    }

    std::mt19937_64 &engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace mlr
