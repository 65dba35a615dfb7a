#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mmfit {

/// Mixes (seed, stream, substream) into a 64-bit engine seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) noexcept;

/// A seeded engine plus the distributions the samplers need. One stream per
/// chain / replicate / classification; never shared between threads.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0);

    double normal() { return normal_(engine_); }
    double normal(double mean, double sd) { return sd > 0.0 ? mean + sd * normal_(engine_) : mean; }
    double uniform() { return uniform_(engine_); }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    double gamma(double shape, double rate);
    double inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }

    /// m distinct values from [0, n), sorted ascending (Floyd's algorithm).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace mmfit
