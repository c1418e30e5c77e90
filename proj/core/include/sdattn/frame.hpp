#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdattn/float_format.hpp"
#include "sdattn/matrix.hpp"

namespace sdattn {

/// Wire message types. SCR_* carry scrambled tensors only; RETR_* carry
/// retrieval embeddings/scores; KEY_HINT announces a request's public
/// segment plan; CTRL is an empty-payload control marker.
enum class MsgType : std::uint8_t {
    key_hint = 1,
    scr_kv = 2,
    scr_q = 3,
    scr_shard = 4,
    retr_req = 5,
    retr_resp = 6,
    rerank_in = 7,
    rerank_out = 8,
    ctrl = 9,
};

/// Payload element encodings. quant bit-widths 2..8 map to 16+N.
enum class DtypeCode : std::uint8_t {
    f64 = 0,
    f32 = 1,
    bf16 = 2,
    f16 = 3,
    quant2 = 18,
    quant3 = 19,
    quant4 = 20,
    quant5 = 21,
    quant6 = 22,
    quant7 = 23,
    quant8 = 24,
};

DtypeCode dtype_from_format(FloatFormat fmt);
DtypeCode quant_dtype(int bits);
bool is_quant(DtypeCode d);
int quant_bits(DtypeCode d);

/// Bit-exact wire frame. Layout, little-endian throughout:
///   magic "FATN" | version u8 | msg_type u8 | request_id u64 | layer u16 |
///   head u16 | domain u16 | dtype u8 | dim_count u32 | dims u32 each |
///   payload bytes | crc32 u32
/// The CRC covers everything before it. Float payloads are raw values
/// row-major; quantN payloads are LSB-first packed codes followed by scale
/// and zero-point as two f32.
struct Frame {
    std::uint8_t version = 1;
    MsgType msg_type = MsgType::ctrl;
    std::uint64_t request_id = 0;
    std::uint16_t layer = 0;
    std::uint16_t head = 0;
    std::uint16_t domain = 0;
    DtypeCode dtype = DtypeCode::f64;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::uint64_t element_count() const;
    bool operator==(const Frame&) const = default;
};

struct FrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_frame(const Frame& f);
Frame decode_frame(std::span<const std::uint8_t> bytes);
std::size_t encoded_size(const Frame& f);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Value <-> payload conversion. Values are rounded to the dtype on the way
/// in (for quantN, affine min-max quantized); already-representable values
/// round-trip bitwise.
std::vector<std::uint8_t> payload_from_values(std::span<const double> values, DtypeCode dtype);
std::vector<double> values_from_payload(std::span<const std::uint8_t> payload,
                                        std::uint64_t count, DtypeCode dtype);

/// Convenience for [n_tensors, rows, cols] frames built from equally shaped
/// matrices (per-head tensors ride in one frame).
Frame make_tensor_frame(MsgType type, std::uint64_t request_id, std::uint16_t layer,
                        std::uint16_t head, std::uint16_t domain,
                        std::span<const Matrix> tensors, DtypeCode dtype);
std::vector<Matrix> tensors_from_frame(const Frame& f);

}  // namespace sdattn
