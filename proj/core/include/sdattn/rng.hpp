#pragma once

#include <cstdint>
#include <initializer_list>

namespace sdattn {

/// Counter-based deterministic random stream (SplitMix64). The raw u64
/// stream depends only on the seed and the draw index, so identical seeds
/// reproduce identical streams on any platform. Derived floating-point
/// draws additionally rely on IEEE-754 double arithmetic.
///
/// The stream and the derive() chain below are part of the protocol
/// contract: key sets are regenerated independently by every participant
/// from the same seed, so any reimplementation must match them bit for bit.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection-free modulo is avoided to keep
    /// the distribution exactly uniform.
    std::uint64_t next_below(std::uint64_t n);

    /// Standard normal via Box-Muller (uses one cached value).
    double next_gaussian();

    /// One SplitMix64 output for input x, stateless.
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ULL;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBULL;
        x ^= x >> 31;
        return x;
    }

  private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

/// Deterministic sub-seed derivation: folds each tag into the running state
/// through the SplitMix64 mixer. derive(s, {a, b}) != derive(s, {b, a}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace sdattn
