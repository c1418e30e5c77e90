#include "sdattn/float_format.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace sdattn {

namespace {

struct FormatSpec {
    int mantissa_bits;  // explicit bits
    int emin;           // minimum normal exponent
    double max_finite;
};

constexpr FormatSpec kBf16{7, -126, 0x1.FEp127};
constexpr FormatSpec kF16{10, -14, 65504.0};

// Round-to-nearest-even at the target precision, entirely in double
// arithmetic. The scaled value fits in a double integer range, so
// nearbyint (RNE under the default FP environment) gives a single
// correctly-rounded step from double to the target grid.
double round_spec(double x, const FormatSpec& spec) {
    if (x == 0.0 || std::isnan(x)) return x;
    if (std::isinf(x)) return std::copysign(spec.max_finite, x);
    const int e = std::ilogb(x);
    const int q = (e < spec.emin ? spec.emin : e) - spec.mantissa_bits;
    const double quantum = std::ldexp(1.0, q);
    double y = std::nearbyint(x / quantum) * quantum;
    if (std::abs(y) > spec.max_finite) y = std::copysign(spec.max_finite, y);
    return y;
}

}  // namespace

double round_to_format(double x, FloatFormat fmt) {
    switch (fmt) {
        case FloatFormat::f64:
            return x;
        case FloatFormat::f32:
            return static_cast<double>(static_cast<float>(x));
        case FloatFormat::bf16:
            return round_spec(x, kBf16);
        case FloatFormat::f16:
            return round_spec(x, kF16);
    }
    throw std::invalid_argument("round_to_format: unknown format");
}

Matrix round_to_format(const Matrix& m, FloatFormat fmt) {
    if (fmt == FloatFormat::f64) return m;
    Matrix out = m;
    for (double& v : out.data) v = round_to_format(v, fmt);
    return out;
}

std::uint16_t bf16_bits_from_double(double x) {
    const float f = static_cast<float>(x);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    // Representable bf16 values have zero low mantissa bits in f32.
    return static_cast<std::uint16_t>(u >> 16);
}

double double_from_bf16_bits(std::uint16_t b) {
    const std::uint32_t u = static_cast<std::uint32_t>(b) << 16;
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

std::uint16_t f16_bits_from_double(double x) {
    std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    if (x == 0.0) return sign;
    const double a = std::abs(x);
    const int e = std::ilogb(a);
    if (e < -14) {
        // Subnormal: value = mant * 2^-24.
        const auto mant = static_cast<std::uint16_t>(std::nearbyint(a * 0x1.0p24));
        return sign | mant;
    }
    const auto mant = static_cast<std::uint16_t>(std::nearbyint((std::ldexp(a, -e) - 1.0) * 1024.0));
    assert(mant < 1024 && e <= 15);
    return sign | static_cast<std::uint16_t>((e + 15) << 10) | mant;
}

double double_from_f16_bits(std::uint16_t b) {
    const double sign = (b & 0x8000) ? -1.0 : 1.0;
    const int exp = (b >> 10) & 0x1F;
    const int mant = b & 0x3FF;
    if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
    if (exp == 31) {
        if (mant == 0) return sign * std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sign * std::ldexp(1.0 + static_cast<double>(mant) / 1024.0, exp - 15);
}

std::string to_string(FloatFormat fmt) {
    switch (fmt) {
        case FloatFormat::f64: return "f64";
        case FloatFormat::f32: return "f32";
        case FloatFormat::bf16: return "bf16";
        case FloatFormat::f16: return "f16";
    }
    return "?";
}

FloatFormat float_format_from_string(const std::string& s) {
    if (s == "f64") return FloatFormat::f64;
    if (s == "f32") return FloatFormat::f32;
    if (s == "bf16") return FloatFormat::bf16;
    if (s == "f16") return FloatFormat::f16;
    throw std::invalid_argument("unknown float format: " + s);
}

}  // namespace sdattn
