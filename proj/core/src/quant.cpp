#include "sdattn/quant.hpp"

#include <cmath>
#include <stdexcept>

namespace sdattn {

namespace {

void write_code(std::vector<std::uint8_t>& codes, std::uint64_t idx, int bits, std::uint32_t v) {
    std::uint64_t bit = idx * static_cast<std::uint64_t>(bits);
    for (int i = 0; i < bits; ++i, ++bit)
        if (v & (1u << i)) codes[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
}

std::uint32_t read_code(const std::vector<std::uint8_t>& codes, std::uint64_t idx, int bits) {
    std::uint32_t v = 0;
    std::uint64_t bit = idx * static_cast<std::uint64_t>(bits);
    for (int i = 0; i < bits; ++i, ++bit)
        if (codes[bit / 8] & (1u << (bit % 8))) v |= 1u << i;
    return v;
}

}  // namespace

QTensor quantize_affine(std::span<const double> values, int bits) {
    if (bits < 2 || bits > 8) throw std::invalid_argument("quantize_affine: bits must be in [2, 8]");
    QTensor q;
    q.bits = bits;
    q.count = values.size();
    q.codes.assign((values.size() * static_cast<std::uint64_t>(bits) + 7) / 8, 0);
    if (values.empty()) return q;
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("quantize_affine: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const std::uint32_t levels = (1u << bits) - 1;
    q.zero_point = static_cast<float>(lo);
    q.scale = static_cast<float>((hi - lo) / static_cast<double>(levels));
    if (q.scale == 0.0f) return q;  // constant tensor: all codes 0
    const double inv_scale = 1.0 / static_cast<double>(q.scale);
    for (std::uint64_t i = 0; i < q.count; ++i) {
        double c = std::nearbyint((values[i] - static_cast<double>(q.zero_point)) * inv_scale);
        if (c < 0.0) c = 0.0;
        if (c > static_cast<double>(levels)) c = static_cast<double>(levels);
        write_code(q.codes, i, bits, static_cast<std::uint32_t>(c));
    }
    return q;
}

QTensor quantize_affine(const Matrix& m, int bits) { return quantize_affine(m.data, bits); }

std::vector<double> dequantize(const QTensor& q) {
    std::vector<double> out(q.count);
    for (std::uint64_t i = 0; i < q.count; ++i)
        out[i] = static_cast<double>(read_code(q.codes, i, q.bits)) *
                     static_cast<double>(q.scale) +
                 static_cast<double>(q.zero_point);
    return out;
}

Matrix dequantize(const QTensor& q, std::size_t rows, std::size_t cols) {
    if (q.count != rows * cols) throw std::invalid_argument("dequantize: shape mismatch");
    return Matrix(rows, cols, dequantize(q));
}

std::uint32_t qtensor_code(const QTensor& q, std::uint64_t idx) {
    return read_code(q.codes, idx, q.bits);
}

}  // namespace sdattn
