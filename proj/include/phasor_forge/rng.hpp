#pragma once

#include <array>
#include <cstdint>

namespace phasor_forge {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

// Sequential draws from the counter space (seed, index, channel, block).
// Two streams with the same triple produce the same sequence on every
// platform and thread count.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t index, std::uint32_t channel);

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    // Inversion below mean 10, Hoermann PTRS above.
    std::uint64_t poisson(double mean);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_;
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
};

}  // namespace phasor_forge
