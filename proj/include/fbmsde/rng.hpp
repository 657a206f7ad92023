#pragma once

#include <cstdint>
#include <random>

namespace fbmsde {

// Independent Gaussian streams addressed by (seed, stream_id, component).
// Every stream is seeded from its key alone, so a Monte Carlo batch draws the
// same numbers whatever order or thread the paths are generated on.
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t component)
        : engine_(make_engine(seed, stream_id, component)) {}

    double operator()() { return normal_(engine_); }

private:
    static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id,
                                       std::uint64_t component) {
        auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
        auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
        // The leading tag keeps these sequences distinct from a plain seed_seq{seed}.
        std::seed_seq seq{0x46424d31u, lo(seed), hi(seed), lo(stream_id), hi(stream_id),
                          lo(component), hi(component)};
        return std::mt19937_64(seq);
    }

    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace fbmsde
