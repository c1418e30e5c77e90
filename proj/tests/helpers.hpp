#pragma once

// Shared builders for federated-request test setups.

#include <vector>

#include "sdattn/protocol.hpp"
#include "sdattn/rng.hpp"

namespace test_helpers {

using namespace sdattn;

struct SpecOptions {
    std::uint64_t seed = 1;
    std::size_t n_nodes = 3;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t head_dim = 16;
    std::size_t vocab = 64;
    std::vector<std::pair<int, std::size_t>> docs;  // (owner, length), retrieval corpus
    std::size_t query_len = 8;
    std::size_t max_new = 8;
    std::size_t top_k = 4;
    std::size_t top_m = 2;
    FloatFormat wire = FloatFormat::f64;
    std::vector<fed::PinnedSegment> pinned;
};

inline std::vector<int> ids(std::uint64_t seed, std::size_t n, std::size_t vocab) {
    RngStream rng(seed);
    std::vector<int> out(n);
    for (auto& t : out) t = 4 + static_cast<int>(rng.next_below(vocab - 4));
    return out;
}

inline fed::RequestSpec make_spec(const SpecOptions& o) {
    fed::RequestSpec spec;
    spec.request_id = 1;
    spec.master_seed = o.seed;
    spec.gen_model.vocab_size = o.vocab;
    spec.gen_model.n_heads = o.n_heads;
    spec.gen_model.head_dim = o.head_dim;
    spec.gen_model.d_model = o.n_heads * o.head_dim;
    spec.gen_model.n_layers = o.n_layers;
    spec.gen_model.seed = derive_seed(o.seed, {0x67656Eull});
    spec.rr_model = spec.gen_model;
    spec.rr_model.arch = Arch::encoder;
    spec.rr_model.pos_embedding = true;
    spec.rr_model.seed = derive_seed(o.seed, {0x7272ull});
    spec.scrambler.wire = o.wire;
    spec.workload.query = ids(derive_seed(o.seed, {0x71ull}), o.query_len, o.vocab);
    spec.workload.max_new = o.max_new;
    spec.workload.top_k = o.top_k;
    spec.workload.top_m = o.top_m;
    spec.workload.pinned = o.pinned;
    for (std::size_t n = 0; n < o.n_nodes; ++n)
        spec.nodes.push_back({static_cast<int>(n), n == 0, {}});
    std::size_t next_doc = 0;
    for (const auto& [owner, len] : o.docs) {
        TokenDoc doc;
        doc.doc_id = 100 + next_doc++;
        doc.owner = owner;
        doc.tokens = ids(derive_seed(o.seed, {0x64ull, doc.doc_id}), len, o.vocab);
        for (fed::NodeSetup& node : spec.nodes)
            if (node.id == owner) node.corpus.push_back(doc);
    }
    return spec;
}

}  // namespace test_helpers
