#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>

namespace habitmfg {

using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

// Philox4x64 with 10 rounds (Salmon et al., SC'11). Pure function of
// (counter, key).
std::array<std::uint64_t, 4> philox4x64_10(PhiloxCounter counter, PhiloxKey key) noexcept;

// Deterministic stream of i.i.d. N(0,1) draws keyed by (seed, replication,
// agent). Block b of the stream is philox(counter = {b, agent, 0, 0},
// key = {seed, replication}); each block yields four uniforms and hence two
// Box-Muller pairs. The draw at position k depends only on the key and k.
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t replication, std::uint64_t agent) noexcept;

    double next() noexcept;
    void fill(std::span<double> out) noexcept;

private:
    void refill() noexcept;

    PhiloxKey key_;
    std::uint64_t agent_;
    std::uint64_t block_ = 0;
    std::array<double, 4> buffer_{};
    int pos_ = 4;
};

inline GaussianStream rng_stream(std::uint64_t seed, std::uint64_t replication,
                                 std::uint64_t agent) noexcept {
    return {seed, replication, agent};
}

// Uniform in the open interval (0,1) from the 52 high bits.
double to_open_unit(std::uint64_t bits) noexcept;

// Supplies standard-normal increments for one agent's path. Simulators take
// this so tests can force deterministic (e.g. zero) noise.
using IncrementSource = std::function<void(std::size_t agent, std::span<double> normals)>;

IncrementSource philox_increments(std::uint64_t seed, std::uint64_t replication);
IncrementSource zero_increments();

}  // namespace habitmfg
