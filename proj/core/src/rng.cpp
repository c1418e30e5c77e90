#include "sdattn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sdattn {

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double RngStream::next_gaussian() {
    if (have_cached_) {
        have_cached_ = false;
        return cached_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = next_double();
    double v = next_double();
    if (u < 0x1.0p-60) u = 0x1.0p-60;
    const double r = std::sqrt(-2.0 * std::log(u));
    const double t = 2.0 * M_PI * v;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = base;
    for (std::uint64_t t : tags) s = RngStream::mix(s ^ (t + 0x9E3779B97F4A7C15ULL));
    return s;
}

}  // namespace sdattn
