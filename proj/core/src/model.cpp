#include "sdattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

#include "sdattn/fwht.hpp"
#include "sdattn/linalg.hpp"
#include "sdattn/quant.hpp"
#include "sdattn/rng.hpp"
#include "sdattn/scrambler.hpp"

namespace sdattn {

void ModelConfig::validate() const {
    if (d_model != n_heads * head_dim)
        throw std::invalid_argument("ModelConfig: d_model must equal n_heads * head_dim");
    if (!is_power_of_two(head_dim))
        throw std::invalid_argument("ModelConfig: head_dim must be a power of two");
    if (n_layers < 1) throw std::invalid_argument("ModelConfig: n_layers must be >= 1");
    if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size must be >= 4");
    if (ffn_mult <= 0.0) throw std::invalid_argument("ModelConfig: ffn_mult must be positive");
}

namespace {

Matrix gaussian_matrix(std::size_t r, std::size_t c, double scale, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.next_gaussian() * scale;
    return m;
}

void calibrate_score_head(Model& m, RngStream& rng);

}  // namespace

Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    RngStream rng(cfg.seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    m.embedding = gaussian_matrix(cfg.vocab_size, cfg.d_model, scale, rng);
    const auto ffn_dim = static_cast<std::size_t>(cfg.ffn_mult * static_cast<double>(cfg.d_model));
    m.layers.resize(cfg.n_layers);
    for (auto& lw : m.layers) {
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            lw.w_q.push_back(gaussian_matrix(cfg.d_model, cfg.head_dim, scale, rng));
            lw.w_k.push_back(gaussian_matrix(cfg.d_model, cfg.head_dim, scale, rng));
            lw.w_v.push_back(gaussian_matrix(cfg.d_model, cfg.head_dim, scale, rng));
        }
        lw.w_o = gaussian_matrix(cfg.d_model, cfg.d_model, scale, rng);
        lw.ffn_w1 = gaussian_matrix(cfg.d_model, ffn_dim, scale, rng);
        lw.ffn_w2 = gaussian_matrix(ffn_dim, cfg.d_model, scale, rng);
        lw.norm1.assign(cfg.d_model, 1.0);
        lw.norm2.assign(cfg.d_model, 1.0);
    }
    m.score_w.resize(cfg.d_model);
    for (double& v : m.score_w) v = rng.next_gaussian() * scale;
    m.score_b = rng.next_gaussian();
    if (cfg.arch == Arch::encoder) calibrate_score_head(m, rng);
    return m;
}

namespace {

// A relevance head that actually responds to document content: point it at
// the principal direction of [CLS] variation over a seeded probe set. A
// random direction would only pick up ~1/sqrt(d_model) of the content
// signal, leaving toy scores in a near-tie.
void calibrate_score_head(Model& m, RngStream& rng) {
    const std::size_t probes = 24;
    const std::vector<int> query = [&] {
        std::vector<int> q(4);
        for (auto& t : q) t = 4 + static_cast<int>(rng.next_below(m.cfg.vocab_size - 4));
        return q;
    }();
    Matrix cls(probes, m.cfg.d_model);
    for (std::size_t p = 0; p < probes; ++p) {
        std::vector<int> doc(6);
        for (auto& t : doc) t = 4 + static_cast<int>(rng.next_below(m.cfg.vocab_size - 4));
        const std::vector<int> ids = rerank_input(query, doc);
        std::vector<KVCacheSegment> cache;
        const Matrix h = forward_span(m, ids, 0, cache, centralized_attn(), /*causal=*/false);
        std::copy(h.row(0).begin(), h.row(0).end(), cls.row(p).begin());
    }
    std::vector<double> mean(m.cfg.d_model, 0.0);
    for (std::size_t p = 0; p < probes; ++p)
        for (std::size_t c = 0; c < m.cfg.d_model; ++c) mean[c] += cls.at(p, c);
    for (double& v : mean) v /= static_cast<double>(probes);
    Matrix cov(m.cfg.d_model, m.cfg.d_model);
    for (std::size_t p = 0; p < probes; ++p)
        for (std::size_t a = 0; a < m.cfg.d_model; ++a)
            for (std::size_t b = 0; b < m.cfg.d_model; ++b)
                cov.at(a, b) += (cls.at(p, a) - mean[a]) * (cls.at(p, b) - mean[b]);
    const EigenSym eig = jacobi_eigen_sym(cov);
    for (std::size_t c = 0; c < m.cfg.d_model; ++c) m.score_w[c] = eig.vectors.at(c, 0);
    m.score_b = -dot(mean, m.score_w);
}

}  // namespace

Matrix rms_norm(const Matrix& h, const std::vector<double>& scale) {
    Matrix out(h.rows, h.cols);
    for (std::size_t i = 0; i < h.rows; ++i) {
        auto src = h.row(i);
        double ms = 0.0;
        for (double v : src) ms += v * v;
        ms = 1.0 / std::sqrt(ms / static_cast<double>(h.cols) + 1e-6);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < h.cols; ++j) dst[j] = src[j] * ms * scale[j];
    }
    return out;
}

Matrix gelu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    return out;
}

HeadProjections project_qkv(const Model& m, const Matrix& h_normed, std::size_t layer) {
    const LayerWeights& lw = m.layers[layer];
    HeadProjections p;
    for (std::size_t h = 0; h < m.cfg.n_heads; ++h) {
        p.q.push_back(matmul(h_normed, lw.w_q[h]));
        p.k.push_back(matmul(h_normed, lw.w_k[h]));
        p.v.push_back(matmul(h_normed, lw.w_v[h]));
    }
    return p;
}

Matrix concat_heads(const std::vector<Matrix>& per_head) {
    const std::size_t rows = per_head[0].rows;
    const std::size_t d = per_head[0].cols;
    Matrix out(rows, d * per_head.size());
    for (std::size_t h = 0; h < per_head.size(); ++h)
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(per_head[h].row(i).begin(), per_head[h].row(i).end(),
                      out.row(i).begin() + static_cast<std::ptrdiff_t>(h * d));
    return out;
}

Matrix finish_layer(const Model& m, const Matrix& h_in, const Matrix& attn_concat,
                    std::size_t layer) {
    const LayerWeights& lw = m.layers[layer];
    Matrix h1 = h_in + matmul(attn_concat, lw.w_o);
    Matrix y = rms_norm(h1, lw.norm2);
    return h1 + matmul(gelu(matmul(y, lw.ffn_w1)), lw.ffn_w2);
}

Matrix embed_tokens(const Model& m, std::span<const int> tokens, std::size_t first_pos) {
    Matrix out(tokens.size(), m.cfg.d_model);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int t = tokens[i];
        if (t < 0 || static_cast<std::size_t>(t) >= m.cfg.vocab_size)
            throw std::invalid_argument("embed_tokens: token id out of range");
        auto dst = out.row(i);
        auto src = m.embedding.row(static_cast<std::size_t>(t));
        std::copy(src.begin(), src.end(), dst.begin());
        if (m.cfg.pos_embedding) {
            // Positional terms live at the token-embedding scale so content
            // features are not drowned out.
            const double amp = 1.0 / std::sqrt(static_cast<double>(m.cfg.d_model));
            const auto pos = static_cast<double>(first_pos + i);
            for (std::size_t j = 0; j + 1 < m.cfg.d_model; j += 2) {
                const double omega =
                    std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(m.cfg.d_model));
                dst[j] += amp * std::sin(pos * omega);
                dst[j + 1] += amp * std::cos(pos * omega);
            }
        }
    }
    return out;
}

Matrix logits(const Model& m, const Matrix& h) { return matmul(h, transpose(m.embedding)); }

LayerOutput layer_forward(const Model& m, const Matrix& h,
                          std::span<const KVCacheSegment* const> cache, std::size_t layer,
                          const AttnFn& attn, std::size_t first_pos, bool causal) {
    for (const auto* seg : cache)
        if (seg->first_pos + seg->length() > first_pos)
            throw std::invalid_argument("layer_forward: cache segment overlaps current span");
    Matrix x = rms_norm(h, m.layers[layer].norm1);
    HeadProjections p = project_qkv(m, x, layer);
    std::vector<Matrix> head_out(m.cfg.n_heads);
    for (std::size_t hd = 0; hd < m.cfg.n_heads; ++hd) {
        AttnRequest req;
        req.layer = layer;
        req.head = hd;
        req.q = &p.q[hd];
        req.k = &p.k[hd];
        req.v = &p.v[hd];
        req.q_first_pos = first_pos;
        req.causal = causal;
        req.prior = cache;
        head_out[hd] = attn(req);
    }
    LayerOutput out;
    out.h_next = finish_layer(m, h, concat_heads(head_out), layer);
    out.new_k = std::move(p.k);
    out.new_v = std::move(p.v);
    return out;
}

Matrix forward_span(const Model& m, std::span<const int> tokens, std::size_t first_pos,
                    std::vector<KVCacheSegment>& cache, const AttnFn& attn, bool causal) {
    std::vector<const KVCacheSegment*> prior;
    prior.reserve(cache.size());
    for (const auto& seg : cache) prior.push_back(&seg);
    KVCacheSegment seg;
    seg.first_pos = first_pos;
    seg.k.resize(m.cfg.n_layers);
    seg.v.resize(m.cfg.n_layers);
    Matrix h = embed_tokens(m, tokens, first_pos);
    for (std::size_t l = 0; l < m.cfg.n_layers; ++l) {
        LayerOutput lo = layer_forward(m, h, prior, l, attn, first_pos, causal);
        h = std::move(lo.h_next);
        seg.k[l] = std::move(lo.new_k);
        seg.v[l] = std::move(lo.new_v);
    }
    cache.push_back(std::move(seg));
    return h;
}

namespace {

int argmax_token(std::span<const double> row) {
    int best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
    return best;
}

}  // namespace

std::vector<int> greedy_decode(const Model& m, std::span<const int> prompt, std::size_t max_new,
                               const AttnFn& attn) {
    if (m.cfg.arch != Arch::decoder) throw std::invalid_argument("greedy_decode: decoder arch required");
    if (prompt.empty()) throw std::invalid_argument("greedy_decode: prompt must be non-empty");
    std::vector<int> out;
    if (max_new == 0) return out;
    std::vector<KVCacheSegment> cache;
    Matrix h = forward_span(m, prompt, 0, cache, attn, /*causal=*/true);
    int tok = argmax_token(logits(m, h).row(h.rows - 1));
    std::size_t pos = prompt.size();
    for (std::size_t i = 0; i < max_new; ++i) {
        out.push_back(tok);
        if (tok == kTokEos) break;
        if (i + 1 == max_new) break;
        const int cur = tok;
        Matrix hh = forward_span(m, std::span<const int>(&cur, 1), pos, cache, attn, true);
        tok = argmax_token(logits(m, hh).row(0));
        ++pos;
    }
    return out;
}

std::vector<int> rerank_input(std::span<const int> query, std::span<const int> doc) {
    std::vector<int> ids;
    ids.reserve(query.size() + doc.size() + 3);
    ids.push_back(kTokCls);
    ids.insert(ids.end(), query.begin(), query.end());
    ids.push_back(kTokSep);
    ids.insert(ids.end(), doc.begin(), doc.end());
    ids.push_back(kTokSep);
    return ids;
}

double rerank_score(const Model& m, std::span<const int> query, std::span<const int> doc,
                    const AttnFn& attn) {
    if (m.cfg.arch != Arch::encoder) throw std::invalid_argument("rerank_score: encoder arch required");
    if (query.empty() || doc.empty())
        throw std::invalid_argument("rerank_score: query and doc must be non-empty");
    const std::vector<int> ids = rerank_input(query, doc);
    std::vector<KVCacheSegment> cache;
    Matrix h = forward_span(m, ids, 0, cache, attn, /*causal=*/false);
    return dot(h.row(0), m.score_w) + m.score_b;
}

namespace {

AttentionMask span_mask(const AttnRequest& req, std::size_t k_first_pos) {
    if (!req.causal) return AttentionMask::none();
    return AttentionMask::causal(static_cast<std::int64_t>(req.q_first_pos) -
                                 static_cast<std::int64_t>(k_first_pos));
}

Matrix concat_rows(const std::vector<const Matrix*>& parts) {
    std::size_t rows = 0;
    for (const auto* p : parts) rows += p->rows;
    Matrix out(rows, parts[0]->cols);
    std::size_t r = 0;
    for (const auto* p : parts) {
        std::copy(p->data.begin(), p->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * out.cols));
        r += p->rows;
    }
    return out;
}

}  // namespace

AttnFn centralized_attn() {
    return [](const AttnRequest& req) {
        std::vector<const Matrix*> ks, vs;
        std::size_t k_first = req.q_first_pos;
        for (const auto* seg : req.prior) {
            ks.push_back(&seg->k[req.layer][req.head]);
            vs.push_back(&seg->v[req.layer][req.head]);
            k_first = std::min(k_first, seg->first_pos);
        }
        ks.push_back(req.k);
        vs.push_back(req.v);
        const Matrix k = concat_rows(ks);
        const Matrix v = concat_rows(vs);
        return attention(*req.q, k, v, span_mask(req, k_first), req.q->cols);
    };
}

AttnFn sharded_attn() {
    return [](const AttnRequest& req) {
        std::vector<AttentionShard> shards;
        for (const auto* seg : req.prior)
            shards.push_back(shard_attention(*req.q, seg->k[req.layer][req.head],
                                             seg->v[req.layer][req.head], AttentionMask::none(),
                                             req.q->cols));
        shards.push_back(
            shard_attention(*req.q, *req.k, *req.v, span_mask(req, req.q_first_pos), req.q->cols));
        return merge_shards(shards);
    };
}

namespace {

// Emulates the wire: float rounding, or affine quantization when bits > 0.
Matrix wire_round(const Matrix& m, const ScrambledAttnOptions& opt) {
    if (opt.quant_bits > 0) return dequantize(quantize_affine(m, opt.quant_bits), m.rows, m.cols);
    return round_to_format(m, opt.wire_fmt);
}

double wire_round_stat(double v, const ScrambledAttnOptions& opt) {
    // Normalization scalars ride at f32 when the feature tensors are
    // quantized, matching the frame layout.
    if (opt.quant_bits > 0) return round_to_format(v, FloatFormat::f32);
    return round_to_format(v, opt.wire_fmt);
}

}  // namespace

AttnFn scrambled_attn(const ScrambledAttnOptions& opt) {
    // Keysets are negotiated lazily per layer and reused across calls, the
    // way one compute domain holds them for a whole request.
    auto keysets = std::make_shared<std::map<std::uint64_t, ScramblerKeySet>>();
    return [opt, keysets](const AttnRequest& req) {
        const std::size_t d = req.q->cols;
        std::vector<AttentionShard> shards;
        for (const auto* seg : req.prior) {
            auto it = keysets->find(req.layer);
            if (it == keysets->end() || it->second.n_heads() <= req.head) {
                // Heads arrive one call at a time; per-head derivation is
                // independent, so renegotiating with more heads reproduces
                // the earlier ones bit for bit.
                KeySetSpec spec;
                spec.request_id = 1;
                spec.layer = static_cast<std::uint32_t>(req.layer);
                spec.l_q = 1;  // live token perms are derived per span below
                spec.l_k = 1;
                spec.n_heads = req.head + 1;
                spec.head_dim = d;
                spec.mag_lo = opt.mag_lo;
                spec.mag_hi = opt.mag_hi;
                spec.mode = opt.scrambler_mode == 1 ? ScramblerMode::s1_only
                                                    : ScramblerMode::s1_and_s2;
                (*keysets)[req.layer] = negotiate_keyset(opt.shared_seed, spec);
                it = keysets->find(req.layer);
            }
            ScramblerKeySet theta = it->second;
            theta.p_q = theta.span_perm(0, req.q_first_pos, req.q->rows);
            theta.p_kv = theta.span_perm(1, seg->first_pos, seg->length());

            ScrambledTriple t =
                enc_qkv(*req.q, seg->k[req.layer][req.head], seg->v[req.layer][req.head], theta,
                        req.head);
            t.q_s = wire_round(t.q_s, opt);
            t.k_s = wire_round(t.k_s, opt);
            t.v_s = wire_round(t.v_s, opt);

            AttentionShard scr = scrambled_shard_attention(t, AttentionMask::none(), d);
            scr.output = wire_round(scr.output, opt);
            for (double& v : scr.stats.row_max) v = wire_round_stat(v, opt);
            for (double& v : scr.stats.exp_sum) v = wire_round_stat(v, opt);
            shards.push_back(dec_output(scr.output, scr.stats, theta, req.head));
        }
        shards.push_back(
            shard_attention(*req.q, *req.k, *req.v, span_mask(req, req.q_first_pos), d));
        return merge_shards(shards);
    };
}

}  // namespace sdattn
