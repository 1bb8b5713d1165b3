#pragma once

#include <cstdint>
#include <random>

namespace dte {

// SplitMix64 finalizer; used to derive well-separated sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/*
 * Caller-owned random stream. Every stochastic operation takes one of these
 * explicitly; there is no global generator.
 *
 * Seed schedule: the stream for (master, sub_stream, iteration) is a pure
 * function of those three integers, so results do not depend on how
 * iterations are distributed over worker threads.
 */
class RandomStream {
   public:
    using engine_type = std::mt19937_64;

    explicit RandomStream(std::uint64_t seed) : engine_(mix64(seed)) {}

    static RandomStream for_iteration(std::uint64_t master, std::uint64_t sub_stream,
                                      std::uint64_t iteration) {
        return RandomStream(mix64(mix64(master) ^ mix64(sub_stream + 0x5851F42D4C957F2DULL)) +
                            iteration);
    }

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    double normal() { return normal_(engine_); }

    double gamma(double shape, double rate) {
        std::gamma_distribution<double> g(shape, 1.0 / rate);
        return g(engine_);
    }

    engine_type& engine() { return engine_; }

   private:
    engine_type engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dte
