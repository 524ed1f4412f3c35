#pragma once

#include <cstdint>
#include <random>

namespace sqdh {

// Thin wrapper around mt19937_64 that produces uniforms through fixed
// bit manipulation rather than std::uniform_* adapters, so that streams
// are reproducible independent of the standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on the open interval (0,1); safe to feed into log().
    double uniform01() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1p-53;
    }

    // Unbiased uniform integer in [0, n) by rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace sqdh
