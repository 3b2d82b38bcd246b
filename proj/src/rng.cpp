#include "mvc/rng.hpp"

#include <cmath>
#include <numbers>

namespace mvc {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

Philox4x32::Counter counter_for(const NoiseAddress& a) {
    return {a.particle, a.step, a.stream,
            (static_cast<std::uint32_t>(a.slot) << 16) | a.block};
}

Philox4x32::Key key_for(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

} // namespace

Philox4x32::Counter Philox4x32::apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t lo0, hi0, lo1, hi1;
        mulhilo(kMulA, ctr[0], lo0, hi0);
        mulhilo(kMulB, ctr[2], lo1, hi1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

std::array<double, 2> uniform_pair(const NoiseAddress& addr) {
    const auto out = Philox4x32::apply(counter_for(addr), key_for(addr.seed));
    return {to_open_unit(out[0], out[1]), to_open_unit(out[2], out[3])};
}

std::array<double, 2> normal_pair(const NoiseAddress& addr) {
    const auto u = uniform_pair(addr);
    const double radius = std::sqrt(-2.0 * std::log(u[0]));
    const double angle = 2.0 * std::numbers::pi * u[1];
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

void fill_normals(NoiseAddress addr, double* out, int n) {
    for (int k = 0; k < n; k += 2) {
        addr.block = static_cast<std::uint16_t>(k / 2);
        const auto z = normal_pair(addr);
        out[k] = z[0];
        if (k + 1 < n) out[k + 1] = z[1];
    }
}

double CounterStream::uniform() {
    NoiseAddress a{seed_, static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
                   stream_, 0xFFFF, 0};
    ++index_;
    return uniform_pair(a)[0];
}

double CounterStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    NoiseAddress a{seed_, static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
                   stream_, 0xFFFE, 0};
    ++index_;
    const auto z = normal_pair(a);
    spare_ = z[1];
    has_spare_ = true;
    return z[0];
}

} // namespace mvc
