#include "mmfit/random.hpp"

#include <algorithm>
#include <set>

namespace mmfit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ (substream * 0x632be59bd9b4e019ULL));
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    const std::uint64_t s = derive_seed(seed, stream, substream);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(substream)};
    engine_.seed(seq);
}

std::size_t RandomStream::index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

double RandomStream::gamma(double shape, double rate) {
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    return dist(engine_);
}

std::vector<std::size_t> RandomStream::sample_without_replacement(std::size_t n, std::size_t m) {
    std::set<std::size_t> chosen;
    for (std::size_t j = n - m; j < n; ++j) {
        const std::size_t t = index(j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    return {chosen.begin(), chosen.end()};
}

} // namespace mmfit
