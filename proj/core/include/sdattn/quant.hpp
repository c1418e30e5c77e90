#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdattn/matrix.hpp"

namespace sdattn {

/// Affine min-max quantization of a tensor: per-tensor scale
/// (max-min)/(2^b - 1) and zero-point min, round-to-nearest codes packed
/// LSB-first. A constant tensor quantizes with scale 0 and round-trips
/// exactly.
struct QTensor {
    int bits = 8;
    std::uint64_t count = 0;
    std::vector<std::uint8_t> codes;  // ceil(count * bits / 8) bytes
    float scale = 0.0f;
    float zero_point = 0.0f;
};

QTensor quantize_affine(std::span<const double> values, int bits);
QTensor quantize_affine(const Matrix& m, int bits);
std::vector<double> dequantize(const QTensor& q);
Matrix dequantize(const QTensor& q, std::size_t rows, std::size_t cols);

/// Raw code access (test/packing checks).
std::uint32_t qtensor_code(const QTensor& q, std::uint64_t idx);

}  // namespace sdattn
