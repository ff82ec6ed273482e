#pragma once

#include <array>
#include <cstdint>

namespace s3d {

// xoshiro256** 1.0 seeded through splitmix64. Normal deviates use the
// Box-Muller transform so the stream is identical on every platform that
// implements IEEE doubles and a correctly rounded libm.
class Rng {
public:
    static constexpr const char* kAlgorithm = "xoshiro256starstar-1.0/splitmix64/box-muller";

    explicit Rng(std::uint64_t seed = 0) noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double normal() noexcept;
    // Unbiased integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    // Independent stream derived from this generator's seed and a stream id.
    Rng fork(std::uint64_t stream) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace s3d
