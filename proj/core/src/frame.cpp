#include "sdattn/frame.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "sdattn/quant.hpp"

namespace sdattn {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'F', 'A', 'T', 'N'};

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    std::uint8_t u8() {
        if (pos + 1 > bytes.size()) throw FrameError("frame truncated");
        return bytes[pos++];
    }
    std::uint16_t u16() {
        return static_cast<std::uint16_t>(u8() | (static_cast<std::uint16_t>(u8()) << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
};

std::size_t dtype_payload_size(DtypeCode d, std::uint64_t count) {
    switch (d) {
        case DtypeCode::f64: return count * 8;
        case DtypeCode::f32: return count * 4;
        case DtypeCode::bf16:
        case DtypeCode::f16: return count * 2;
        default:
            if (is_quant(d))
                return (count * static_cast<std::uint64_t>(quant_bits(d)) + 7) / 8 + 8;
            throw FrameError("unknown dtype");
    }
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) c = table[(c ^ b) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

DtypeCode dtype_from_format(FloatFormat fmt) {
    switch (fmt) {
        case FloatFormat::f64: return DtypeCode::f64;
        case FloatFormat::f32: return DtypeCode::f32;
        case FloatFormat::bf16: return DtypeCode::bf16;
        case FloatFormat::f16: return DtypeCode::f16;
    }
    throw FrameError("bad float format");
}

DtypeCode quant_dtype(int bits) {
    if (bits < 2 || bits > 8) throw FrameError("quant bits must be in [2, 8]");
    return static_cast<DtypeCode>(16 + bits);
}

bool is_quant(DtypeCode d) {
    const auto v = static_cast<std::uint8_t>(d);
    return v >= 18 && v <= 24;
}

int quant_bits(DtypeCode d) { return static_cast<std::uint8_t>(d) - 16; }

std::uint64_t Frame::element_count() const {
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    const std::uint64_t count = f.element_count();
    if (f.payload.size() != dtype_payload_size(f.dtype, count))
        throw FrameError("encode: payload length inconsistent with dims and dtype");
    std::vector<std::uint8_t> out;
    out.reserve(encoded_size(f));
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(f.version);
    out.push_back(static_cast<std::uint8_t>(f.msg_type));
    put_u64(out, f.request_id);
    put_u16(out, f.layer);
    put_u16(out, f.head);
    put_u16(out, f.domain);
    out.push_back(static_cast<std::uint8_t>(f.dtype));
    put_u32(out, static_cast<std::uint32_t>(f.dims.size()));
    for (std::uint32_t d : f.dims) put_u32(out, d);
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    put_u32(out, crc32(out));
    return out;
}

std::size_t encoded_size(const Frame& f) {
    return 4 + 1 + 1 + 8 + 2 + 2 + 2 + 1 + 4 + 4 * f.dims.size() + f.payload.size() + 4;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 29) throw FrameError("frame too short");
    Reader r{bytes};
    for (std::uint8_t m : kMagic)
        if (r.u8() != m) throw FrameError("bad magic");
    Frame f;
    f.version = r.u8();
    f.msg_type = static_cast<MsgType>(r.u8());
    f.request_id = r.u64();
    f.layer = r.u16();
    f.head = r.u16();
    f.domain = r.u16();
    f.dtype = static_cast<DtypeCode>(r.u8());
    const std::uint32_t ndims = r.u32();
    if (r.pos + 4ull * ndims + 4 > bytes.size()) throw FrameError("frame truncated");
    f.dims.resize(ndims);
    for (auto& d : f.dims) d = r.u32();
    const std::size_t expect = dtype_payload_size(f.dtype, f.element_count());
    if (r.pos + expect + 4 != bytes.size())
        throw FrameError("payload length inconsistent with dims and dtype");
    f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                     bytes.end() - 4);
    const std::uint32_t want = crc32(bytes.first(bytes.size() - 4));
    Reader tail{bytes.subspan(bytes.size() - 4)};
    if (tail.u32() != want) throw FrameError("crc mismatch");
    return f;
}

std::vector<std::uint8_t> payload_from_values(std::span<const double> values, DtypeCode dtype) {
    std::vector<std::uint8_t> out;
    switch (dtype) {
        case DtypeCode::f64:
            out.reserve(values.size() * 8);
            for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
            return out;
        case DtypeCode::f32:
            out.reserve(values.size() * 4);
            for (double v : values)
                put_u32(out, std::bit_cast<std::uint32_t>(
                                 static_cast<float>(round_to_format(v, FloatFormat::f32))));
            return out;
        case DtypeCode::bf16:
            out.reserve(values.size() * 2);
            for (double v : values)
                put_u16(out, bf16_bits_from_double(round_to_format(v, FloatFormat::bf16)));
            return out;
        case DtypeCode::f16:
            out.reserve(values.size() * 2);
            for (double v : values)
                put_u16(out, f16_bits_from_double(round_to_format(v, FloatFormat::f16)));
            return out;
        default: {
            if (!is_quant(dtype)) throw FrameError("unknown dtype");
            const QTensor q = quantize_affine(values, quant_bits(dtype));
            out = q.codes;
            put_u32(out, std::bit_cast<std::uint32_t>(q.scale));
            put_u32(out, std::bit_cast<std::uint32_t>(q.zero_point));
            return out;
        }
    }
}

std::vector<double> values_from_payload(std::span<const std::uint8_t> payload,
                                        std::uint64_t count, DtypeCode dtype) {
    if (payload.size() != dtype_payload_size(dtype, count))
        throw FrameError("payload length inconsistent with dims and dtype");
    std::vector<double> out;
    out.reserve(count);
    Reader r{payload};
    switch (dtype) {
        case DtypeCode::f64:
            for (std::uint64_t i = 0; i < count; ++i)
                out.push_back(std::bit_cast<double>(r.u64()));
            return out;
        case DtypeCode::f32:
            for (std::uint64_t i = 0; i < count; ++i)
                out.push_back(static_cast<double>(std::bit_cast<float>(r.u32())));
            return out;
        case DtypeCode::bf16:
            for (std::uint64_t i = 0; i < count; ++i)
                out.push_back(double_from_bf16_bits(r.u16()));
            return out;
        case DtypeCode::f16:
            for (std::uint64_t i = 0; i < count; ++i)
                out.push_back(double_from_f16_bits(r.u16()));
            return out;
        default: {
            if (!is_quant(dtype)) throw FrameError("unknown dtype");
            QTensor q;
            q.bits = quant_bits(dtype);
            q.count = count;
            q.codes.assign(payload.begin(), payload.end() - 8);
            Reader tail{payload.subspan(payload.size() - 8)};
            q.scale = std::bit_cast<float>(tail.u32());
            q.zero_point = std::bit_cast<float>(tail.u32());
            return dequantize(q);
        }
    }
}

Frame make_tensor_frame(MsgType type, std::uint64_t request_id, std::uint16_t layer,
                        std::uint16_t head, std::uint16_t domain,
                        std::span<const Matrix> tensors, DtypeCode dtype) {
    if (tensors.empty()) throw FrameError("make_tensor_frame: no tensors");
    const std::size_t rows = tensors[0].rows;
    const std::size_t cols = tensors[0].cols;
    std::vector<double> flat;
    flat.reserve(tensors.size() * rows * cols);
    for (const Matrix& t : tensors) {
        if (t.rows != rows || t.cols != cols)
            throw FrameError("make_tensor_frame: tensor shapes differ");
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
    Frame f;
    f.msg_type = type;
    f.request_id = request_id;
    f.layer = layer;
    f.head = head;
    f.domain = domain;
    f.dtype = dtype;
    f.dims = {static_cast<std::uint32_t>(tensors.size()), static_cast<std::uint32_t>(rows),
              static_cast<std::uint32_t>(cols)};
    f.payload = payload_from_values(flat, dtype);
    return f;
}

std::vector<Matrix> tensors_from_frame(const Frame& f) {
    if (f.dims.size() != 3) throw FrameError("tensors_from_frame: rank-3 dims expected");
    const std::size_t n = f.dims[0], rows = f.dims[1], cols = f.dims[2];
    const std::vector<double> flat = values_from_payload(f.payload, f.element_count(), f.dtype);
    std::vector<Matrix> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Matrix m(rows, cols);
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(i * rows * cols),
                  flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * rows * cols),
                  m.data.begin());
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace sdattn
