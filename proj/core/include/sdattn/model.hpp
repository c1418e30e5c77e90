#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sdattn/attention.hpp"
#include "sdattn/float_format.hpp"
#include "sdattn/matrix.hpp"

namespace sdattn {

// Reserved token ids shared by both architectures.
constexpr int kTokCls = 0;
constexpr int kTokSep = 1;
constexpr int kTokEos = 2;
constexpr int kTokPad = 3;

enum class Arch : std::uint8_t { decoder, encoder };

struct ModelConfig {
    std::size_t vocab_size = 64;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;
    std::size_t n_layers = 2;
    double ffn_mult = 4.0;
    Arch arch = Arch::decoder;
    std::uint64_t seed = 1;
    // Additive sinusoidal position embedding, applied at the token-embedding
    // stage (before anything crosses a node boundary). The reranker needs it
    // so scores depend on token order; the decoder gets order from causality
    // alone and keeps it off by default.
    bool pos_embedding = false;

    void validate() const;
};

struct LayerWeights {
    std::vector<Matrix> w_q, w_k, w_v;  // per head, d_model x head_dim
    Matrix w_o;                         // d_model x d_model
    Matrix ffn_w1, ffn_w2;
    std::vector<double> norm1, norm2;  // pre-norm scales
};

struct Model {
    ModelConfig cfg;
    Matrix embedding;  // vocab x d_model; unembedding is tied (E^T)
    std::vector<LayerWeights> layers;
    std::vector<double> score_w;  // encoder relevance head over [CLS]
    double score_b = 0.0;
};

/// All weights deterministic from cfg.seed; same config twice gives
/// bitwise-identical weights.
Model init_model(const ModelConfig& cfg);

/// Per-layer K/V for a contiguous token span, immutable once computed.
struct KVCacheSegment {
    std::size_t first_pos = 0;
    int owner = -1;
    // [layer][head] -> L x head_dim
    std::vector<std::vector<Matrix>> k, v;

    std::size_t length() const {
        return k.empty() || k[0].empty() ? 0 : k[0][0].rows;
    }
};

/// One head's attention job handed to a pluggable provider. The provider
/// owns the decision of how to cover `prior` (monolithic concat, local
/// shard merge, or the full scrambled remote protocol) and returns the
/// merged L x head_dim output for the current span.
struct AttnRequest {
    std::size_t layer = 0;
    std::size_t head = 0;
    const Matrix* q = nullptr;  // current span projections for this head
    const Matrix* k = nullptr;
    const Matrix* v = nullptr;
    std::size_t q_first_pos = 0;
    bool causal = true;
    std::span<const KVCacheSegment* const> prior;
};
using AttnFn = std::function<Matrix(const AttnRequest&)>;

Matrix rms_norm(const Matrix& h, const std::vector<double>& scale);
Matrix gelu(const Matrix& m);

struct HeadProjections {
    std::vector<Matrix> q, k, v;  // per head
};
HeadProjections project_qkv(const Model& m, const Matrix& h_normed, std::size_t layer);

/// Output projection + residual, then pre-norm FFN + residual.
Matrix finish_layer(const Model& m, const Matrix& h_in, const Matrix& attn_concat,
                    std::size_t layer);

Matrix concat_heads(const std::vector<Matrix>& per_head);

/// Token embedding for a span starting at a global position.
Matrix embed_tokens(const Model& m, std::span<const int> tokens, std::size_t first_pos);

/// Unembedding logits (tied weights).
Matrix logits(const Model& m, const Matrix& h);

struct LayerOutput {
    Matrix h_next;
    std::vector<Matrix> new_k, new_v;  // per head
};

/// One full layer over the current span. Cache segments must lie strictly
/// before the span. causal=false gives the encoder's bidirectional pass.
LayerOutput layer_forward(const Model& m, const Matrix& h,
                          std::span<const KVCacheSegment* const> cache, std::size_t layer,
                          const AttnFn& attn, std::size_t first_pos, bool causal);

/// Runs the full stack over one span against the existing cache, appending
/// the span's KV as a new segment. Returns the final hidden states.
Matrix forward_span(const Model& m, std::span<const int> tokens, std::size_t first_pos,
                    std::vector<KVCacheSegment>& cache, const AttnFn& attn, bool causal);

/// Greedy decoding: argmax, stops at EOS or max_new tokens. The prompt is
/// processed as a single span; each generated token as a 1-row span.
std::vector<int> greedy_decode(const Model& m, std::span<const int> prompt, std::size_t max_new,
                               const AttnFn& attn);

/// Relevance score of (query, doc) through the encoder: input is
/// CLS + query + SEP + doc + SEP, bidirectional attention at every layer,
/// linear head over the final CLS state.
double rerank_score(const Model& m, std::span<const int> query, std::span<const int> doc,
                    const AttnFn& attn);

std::vector<int> rerank_input(std::span<const int> query, std::span<const int> doc);

/// Reference provider: concatenates all cached K/V with the current span
/// and runs monolithic attention.
AttnFn centralized_attn();

/// Shard per cache segment plus the local span, merged exactly.
AttnFn sharded_attn();

/// In-process version of the scrambled protocol: every prior segment is
/// encrypted, attended by a keyless code path, and decrypted, then merged
/// with the local shard. wire_fmt emulates the transmission precision.
struct ScrambledAttnOptions {
    std::uint64_t shared_seed = 7;
    double mag_lo = 0.125;
    double mag_hi = 8.0;
    FloatFormat wire_fmt = FloatFormat::f64;
    int quant_bits = 0;  // > 0: affine-quantize wire tensors (stats ride at f32)
    int scrambler_mode = 0;  // 0 = s1 and s2, 1 = s1 only
};
AttnFn scrambled_attn(const ScrambledAttnOptions& opt);

}  // namespace sdattn
