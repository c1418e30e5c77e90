#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sdattn/matrix.hpp"

namespace sdattn {

/// Attention mask. Causal carries the offset of the query block relative to
/// the key block in global positions: key j is visible to query i iff
/// j <= i + offset. Remote context segments are strictly earlier than any
/// query, so shards over them run mask-free; only the local segment needs
/// the causal form.
struct AttentionMask {
    enum class Kind : std::uint8_t { none, causal, custom };
    Kind kind = Kind::none;
    std::int64_t causal_offset = 0;
    Matrix allow;  // custom only: L_Q x L_K, nonzero = visible

    static AttentionMask none() { return {}; }
    static AttentionMask causal(std::int64_t offset) {
        AttentionMask m;
        m.kind = Kind::causal;
        m.causal_offset = offset;
        return m;
    }
    static AttentionMask custom(Matrix allow);

    bool allows(std::size_t qi, std::size_t kj) const;
};

/// One node's partial attention result: locally normalized output plus the
/// stable statistics needed for the exact global merge. For row i with
/// logits z over this shard's keys: row_max = max z, exp_sum = sum exp(z -
/// row_max). A fully masked row is marked by exp_sum = 0.
struct ShardStats {
    std::vector<double> row_max;
    std::vector<double> exp_sum;
};

struct AttentionShard {
    Matrix output;  // L_Q x d, locally normalized
    ShardStats stats;
};

/// Monolithic softmax(q k^T / sqrt(d)) v with masking. Throws if any query
/// row has no visible key.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionMask& mask,
                 std::size_t head_dim);

AttentionShard shard_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               const AttentionMask& mask, std::size_t head_dim);

/// Exact global recombination of shard outputs via a running-max merge.
/// Carrying (row_max, exp_sum) instead of raw accumulated weights keeps
/// exp() arguments bounded, so shards with logits offset by +-1000 merge
/// without overflow. Throws on an empty list or a row masked in every
/// shard.
Matrix merge_shards(const std::vector<AttentionShard>& shards);

}  // namespace sdattn
