#include "habitmfg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace habitmfg {

namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;  // golden ratio
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;  // sqrt(3) - 1

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    __extension__ using u128 = unsigned __int128;
    const u128 p = static_cast<u128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint64_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

GaussianStream::GaussianStream(std::uint64_t seed, std::uint64_t replication,
                               std::uint64_t agent) noexcept
    : key_{seed, replication}, agent_(agent) {}

void GaussianStream::refill() noexcept {
    const auto bits = philox4x64_10({block_++, agent_, 0, 0}, key_);
    for (int pair = 0; pair < 2; ++pair) {
        const double u1 = to_open_unit(bits[2 * pair]);
        const double u2 = to_open_unit(bits[2 * pair + 1]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        buffer_[2 * pair] = r * std::cos(angle);
        buffer_[2 * pair + 1] = r * std::sin(angle);
    }
    pos_ = 0;
}

double GaussianStream::next() noexcept {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
}

void GaussianStream::fill(std::span<double> out) noexcept {
    for (double& x : out) x = next();
}

IncrementSource philox_increments(std::uint64_t seed, std::uint64_t replication) {
    return [seed, replication](std::size_t agent, std::span<double> normals) {
        rng_stream(seed, replication, agent).fill(normals);
    };
}

IncrementSource zero_increments() {
    return [](std::size_t, std::span<double> normals) {
        std::fill(normals.begin(), normals.end(), 0.0);
    };
}

}  // namespace habitmfg
