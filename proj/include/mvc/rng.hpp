#pragma once

#include <array>
#include <cstdint>

namespace mvc {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The generator is a pure function of (key, counter), so any draw can be
/// reproduced without replaying a sequence. Streams used by the simulator are
/// addressed by (seed, particle, step, stream, slot, block).
class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter apply(Counter ctr, Key key);
};

/// Address of one block of random output.
struct NoiseAddress {
    std::uint64_t seed = 0;
    std::uint32_t particle = 0;
    std::uint32_t step = 0;
    std::uint32_t stream = 0;
    std::uint16_t slot = 0;
    std::uint16_t block = 0;
};

/// Two uniforms in the open interval (0, 1) with 53-bit resolution.
std::array<double, 2> uniform_pair(const NoiseAddress& addr);

/// Two independent standard normals (Box-Muller on one Philox block).
std::array<double, 2> normal_pair(const NoiseAddress& addr);

/// Fills `out[0..n)` with standard normals drawn from consecutive blocks of
/// the address (block index is overwritten).
void fill_normals(NoiseAddress addr, double* out, int n);

/// Sequential convenience wrapper for setup code (initial laws, probes):
/// draw k is addressed by (seed, stream, k) and independent of call order.
class CounterStream {
  public:
    CounterStream(std::uint64_t seed, std::uint32_t stream) : seed_(seed), stream_(stream) {}

    double uniform();
    double normal();

  private:
    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint64_t index_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mvc
