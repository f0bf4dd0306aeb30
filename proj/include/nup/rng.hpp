// Counter-based random streams.
//
// Every draw hashes (seed, counter) with the splitmix64 finalizer, so a stream
// is a pure function of its seed and the number of draws taken so far. Normal
// variates use the cosine branch of Box-Muller with two fresh uniforms per
// variate; nothing is cached between calls.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nup {

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (++counter_);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        // Rejection sampling keeps the draw unbiased for any bound.
        const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} / bound) * bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = uniform();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Independent child stream, e.g. one per sweep run or per trial.
    SeededRng split(std::uint64_t salt) const {
        SeededRng tmp(seed_ ^ (0xd1b54a32d192ed03ULL * (salt + 1)));
        return SeededRng(tmp.next_u64());
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace nup
