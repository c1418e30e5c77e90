#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdattn/experiments.hpp"
#include "sdattn/model.hpp"
#include "sdattn/rng.hpp"

using namespace sdattn;

namespace {

ModelConfig small_decoder(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.d_model = 64;
    cfg.n_heads = 4;
    cfg.head_dim = 16;
    cfg.n_layers = 2;
    cfg.seed = seed;
    return cfg;
}

std::vector<int> random_ids(std::size_t n, std::size_t vocab, RngStream& rng) {
    std::vector<int> out(n);
    for (auto& t : out) t = 4 + static_cast<int>(rng.next_below(vocab - 4));
    return out;
}

std::uint64_t hash_segment(const KVCacheSegment& seg) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& per_layer : {seg.k, seg.v})
        for (const auto& heads : per_layer)
            for (const Matrix& m : heads)
                for (double v : m.data) mix(v);
    return h;
}

}  // namespace

TEST_CASE("init_model determinism and validation") {
    const Model a = init_model(small_decoder(5));
    const Model b = init_model(small_decoder(5));
    CHECK(a.embedding.data == b.embedding.data);
    CHECK(a.layers[1].ffn_w1.data == b.layers[1].ffn_w1.data);

    ModelConfig bad = small_decoder(1);
    bad.d_model = 60;
    CHECK_THROWS_AS(init_model(bad), std::invalid_argument);
    bad = small_decoder(1);
    bad.head_dim = 12;
    CHECK_THROWS_AS(init_model(bad), std::invalid_argument);
    bad = small_decoder(1);
    bad.vocab_size = 3;
    CHECK_THROWS_AS(init_model(bad), std::invalid_argument);
}

TEST_CASE("forward smoke and single-token degenerate case") {
    const Model m = init_model(small_decoder(7));
    std::vector<KVCacheSegment> cache;
    const std::vector<int> one{5};
    const Matrix h = forward_span(m, one, 0, cache, centralized_attn(), true);
    CHECK(h.rows == 1);
    CHECK(h.all_finite());
    CHECK(cache.size() == 1);
    CHECK(cache[0].length() == 1);
}

TEST_CASE("position overlap between cache and span is rejected") {
    const Model m = init_model(small_decoder(8));
    std::vector<KVCacheSegment> cache;
    RngStream rng(1);
    const std::vector<int> ids = random_ids(4, 64, rng);
    forward_span(m, ids, 0, cache, centralized_attn(), true);
    std::vector<const KVCacheSegment*> prior{&cache[0]};
    const Matrix h = embed_tokens(m, ids, 2);  // overlaps positions 2..3
    CHECK_THROWS_AS(
        layer_forward(m, h, prior, 0, centralized_attn(), 2, true), std::invalid_argument);
}

TEST_CASE("sharded provider matches centralized across a cache split") {
    const Model m = init_model(small_decoder(9));
    RngStream rng(2);
    const std::vector<int> part1 = random_ids(10, 64, rng);
    const std::vector<int> part2 = random_ids(6, 64, rng);
    const std::vector<int> query = random_ids(4, 64, rng);

    auto run = [&](const AttnFn& attn) {
        std::vector<KVCacheSegment> cache;
        forward_span(m, part1, 0, cache, attn, true);
        forward_span(m, part2, part1.size(), cache, attn, true);
        return forward_span(m, query, part1.size() + part2.size(), cache, attn, true);
    };
    const Matrix want = run(centralized_attn());
    const Matrix got = run(sharded_attn());
    CHECK(max_abs_diff(got, want) < 1e-9);

    ScrambledAttnOptions opt;
    const Matrix scr = run(scrambled_attn(opt));
    CHECK(max_abs_diff(scr, want) < 1e-8);
}

TEST_CASE("greedy decode: centralized and scrambled produce identical tokens") {
    const Model m = init_model(small_decoder(10));
    RngStream rng(3);
    const std::vector<int> prompt = random_ids(24, 64, rng);

    CHECK(greedy_decode(m, prompt, 0, centralized_attn()).empty());

    const std::vector<int> central = greedy_decode(m, prompt, 64, centralized_attn());
    const std::vector<int> again = greedy_decode(m, prompt, 64, centralized_attn());
    CHECK(central == again);

    ScrambledAttnOptions opt;
    const std::vector<int> scrambled = greedy_decode(m, prompt, 64, scrambled_attn(opt));
    CHECK(central == scrambled);

    const std::vector<int> sharded = greedy_decode(m, prompt, 64, sharded_attn());
    CHECK(central == sharded);
}

TEST_CASE("decode trace exposes hidden rows") {
    const Model m = init_model(small_decoder(11));
    RngStream rng(4);
    const std::vector<int> prompt = random_ids(8, 64, rng);
    const exp::DecodeTrace tr = exp::greedy_decode_trace(m, prompt, 12, centralized_attn());
    CHECK(tr.tokens.size() == tr.hiddens.size());
    CHECK(tr.tokens.size() <= 12);
    CHECK(tr.hiddens[0].size() == m.cfg.d_model);
}

TEST_CASE("rerank scores: determinism, protocol equivalence, order sensitivity") {
    ModelConfig cfg = small_decoder(12);
    cfg.arch = Arch::encoder;
    cfg.pos_embedding = true;
    const Model m = init_model(cfg);
    RngStream rng(5);
    const std::vector<int> query = random_ids(6, 64, rng);
    const std::vector<int> doc = random_ids(9, 64, rng);

    const double s1 = rerank_score(m, query, doc, centralized_attn());
    const double s2 = rerank_score(m, query, doc, centralized_attn());
    CHECK(s1 == s2);

    CHECK_THROWS_AS(rerank_score(m, {}, doc, centralized_attn()), std::invalid_argument);

    // Shuffling doc tokens generally changes the score.
    int changed = 0;
    for (int t = 0; t < 5; ++t) {
        std::vector<int> shuffled = doc;
        const Permutation p = random_permutation(shuffled.size(), rng);
        std::vector<int> out(shuffled.size());
        for (std::size_t i = 0; i < shuffled.size(); ++i) out[p.forward[i]] = shuffled[i];
        if (out == doc) continue;
        if (rerank_score(m, query, out, centralized_attn()) != s1) ++changed;
    }
    CHECK(changed >= 4);
}

TEST_CASE("kv cache segments stay bit-identical through later prefills") {
    const Model m = init_model(small_decoder(13));
    RngStream rng(6);
    const std::vector<int> part1 = random_ids(12, 64, rng);
    const std::vector<int> part2 = random_ids(8, 64, rng);
    std::vector<KVCacheSegment> cache;
    forward_span(m, part1, 0, cache, sharded_attn(), true);
    const std::uint64_t before = hash_segment(cache[0]);
    forward_span(m, part2, part1.size(), cache, sharded_attn(), true);
    const std::vector<int> one{9};
    forward_span(m, one, part1.size() + part2.size(), cache, sharded_attn(), true);
    CHECK(hash_segment(cache[0]) == before);
}

TEST_CASE("forward activations stay finite across random configs") {
    RngStream rng(14);
    for (int trial = 0; trial < 1000; ++trial) {
        ModelConfig cfg;
        cfg.vocab_size = 8 + rng.next_below(56);
        cfg.head_dim = 1u << (2 + rng.next_below(3));  // 4, 8, 16
        cfg.n_heads = 1 + rng.next_below(3);
        cfg.d_model = cfg.n_heads * cfg.head_dim;
        cfg.n_layers = 1 + rng.next_below(2);
        cfg.ffn_mult = 2.0;
        cfg.seed = rng.next_u64();
        cfg.pos_embedding = (trial % 2) == 0;
        const Model m = init_model(cfg);
        std::vector<KVCacheSegment> cache;
        std::vector<int> ids = random_ids(4, cfg.vocab_size, rng);
        const Matrix h = forward_span(m, ids, 0, cache, centralized_attn(), true);
        CHECK(h.all_finite());
    }
}
