#pragma once

#include <cstdint>
#include <string>

#include "sdattn/matrix.hpp"

namespace sdattn {

/// Floating-point formats a tensor can be rounded to before hitting the
/// wire. f64 is the identity; bf16 keeps 7 explicit mantissa bits, f16
/// keeps 10. Rounding is round-to-nearest-even; f16 overflow clamps to the
/// max finite value so matrices stay finite.
enum class FloatFormat : std::uint8_t { f64 = 0, f32 = 1, bf16 = 2, f16 = 3 };

double round_to_format(double x, FloatFormat fmt);
Matrix round_to_format(const Matrix& m, FloatFormat fmt);

/// Bit conversions used by the wire codec. Values must already be
/// representable in the target format (i.e. passed through round_to_format).
std::uint16_t bf16_bits_from_double(double x);
double double_from_bf16_bits(std::uint16_t b);
std::uint16_t f16_bits_from_double(double x);
double double_from_f16_bits(std::uint16_t b);

std::string to_string(FloatFormat fmt);
FloatFormat float_format_from_string(const std::string& s);

}  // namespace sdattn
