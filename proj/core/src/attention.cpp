#include "sdattn/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdattn {

AttentionMask AttentionMask::custom(Matrix allow) {
    AttentionMask m;
    m.kind = Kind::custom;
    m.allow = std::move(allow);
    return m;
}

bool AttentionMask::allows(std::size_t qi, std::size_t kj) const {
    switch (kind) {
        case Kind::none:
            return true;
        case Kind::causal:
            return static_cast<std::int64_t>(kj) <= static_cast<std::int64_t>(qi) + causal_offset;
        case Kind::custom:
            return allow.at(qi, kj) != 0.0;
    }
    return false;
}

namespace {

void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionMask& mask,
                  std::size_t head_dim) {
    if (q.cols != head_dim || k.cols != head_dim)
        throw std::invalid_argument("attention: q/k width must equal head_dim");
    if (v.rows != k.rows) throw std::invalid_argument("attention: v rows must equal k rows");
    if (mask.kind == AttentionMask::Kind::custom &&
        (mask.allow.rows != q.rows || mask.allow.cols != k.rows))
        throw std::invalid_argument("attention: custom mask shape mismatch");
}

}  // namespace

AttentionShard shard_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               const AttentionMask& mask, std::size_t head_dim) {
    check_shapes(q, k, v, mask, head_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    AttentionShard shard;
    shard.output = Matrix(q.rows, v.cols);
    shard.stats.row_max.assign(q.rows, -std::numeric_limits<double>::infinity());
    shard.stats.exp_sum.assign(q.rows, 0.0);

    std::vector<double> logits(k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        auto qi = q.row(i);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k.rows; ++j) {
            if (!mask.allows(i, j)) {
                logits[j] = -std::numeric_limits<double>::infinity();
                continue;
            }
            logits[j] = dot(qi, k.row(j)) * scale;
            if (logits[j] > m) m = logits[j];
        }
        if (!std::isfinite(m)) continue;  // fully masked; exp_sum stays 0 for merge to handle
        double s = 0.0;
        auto orow = shard.output.row(i);
        for (std::size_t j = 0; j < k.rows; ++j) {
            if (logits[j] == -std::numeric_limits<double>::infinity()) continue;
            const double w = std::exp(logits[j] - m);
            s += w;
            auto vrow = v.row(j);
            for (std::size_t c = 0; c < v.cols; ++c) orow[c] += w * vrow[c];
        }
        for (std::size_t c = 0; c < v.cols; ++c) orow[c] /= s;
        shard.stats.row_max[i] = m;
        shard.stats.exp_sum[i] = s;
    }
    return shard;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionMask& mask,
                 std::size_t head_dim) {
    AttentionShard shard = shard_attention(q, k, v, mask, head_dim);
    for (std::size_t i = 0; i < q.rows; ++i)
        if (shard.stats.exp_sum[i] == 0.0)
            throw std::invalid_argument("attention: query row has no visible key");
    return std::move(shard.output);
}

Matrix merge_shards(const std::vector<AttentionShard>& shards) {
    if (shards.empty()) throw std::invalid_argument("merge_shards: empty shard list");
    const std::size_t rows = shards[0].output.rows;
    const std::size_t cols = shards[0].output.cols;
    for (const auto& s : shards)
        if (s.output.rows != rows || s.output.cols != cols)
            throw std::invalid_argument("merge_shards: shard shape mismatch");

    if (shards.size() == 1) {
        for (double s : shards[0].stats.exp_sum)
            if (s == 0.0) throw std::invalid_argument("merge_shards: row masked in every shard");
        return shards[0].output;
    }

    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        // Running max across shards keeps every exp() argument <= 0.
        double m_star = -std::numeric_limits<double>::infinity();
        for (const auto& s : shards)
            if (s.stats.exp_sum[i] > 0.0 && s.stats.row_max[i] > m_star) m_star = s.stats.row_max[i];
        if (!std::isfinite(m_star))
            throw std::invalid_argument("merge_shards: row masked in every shard");
        double denom = 0.0;
        auto orow = out.row(i);
        for (const auto& s : shards) {
            if (s.stats.exp_sum[i] == 0.0) continue;
            const double w = s.stats.exp_sum[i] * std::exp(s.stats.row_max[i] - m_star);
            denom += w;
            auto srow = s.output.row(i);
            for (std::size_t c = 0; c < cols; ++c) orow[c] += w * srow[c];
        }
        for (std::size_t c = 0; c < cols; ++c) orow[c] /= denom;
    }
    return out;
}

}  // namespace sdattn
