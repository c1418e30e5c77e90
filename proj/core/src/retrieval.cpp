#include "sdattn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdattn/rng.hpp"

namespace sdattn {

ToyEmbedder::ToyEmbedder(std::size_t vocab_size, std::size_t embed_dim, std::uint64_t seed) {
    RngStream rng(seed);
    proj_ = Matrix(vocab_size, embed_dim);
    for (double& v : proj_.data) v = rng.next_gaussian();
}

std::vector<double> ToyEmbedder::embed(std::span<const int> tokens) const {
    std::vector<double> hist(proj_.rows, 0.0);
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= proj_.rows)
            throw std::invalid_argument("embed: token id out of range");
        hist[static_cast<std::size_t>(t)] += 1.0;
    }
    std::vector<double> out(proj_.cols, 0.0);
    for (std::size_t v = 0; v < proj_.rows; ++v) {
        if (hist[v] == 0.0) continue;
        auto row = proj_.row(v);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += hist[v] * row[j];
    }
    const double n = l2_norm(out);
    if (n > 0.0)
        for (double& v : out) v /= n;
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::vector<CandidateDoc> retrieve_local(std::span<const double> query_vec,
                                         std::span<const TokenDoc> corpus, std::size_t k,
                                         const ToyEmbedder& embedder) {
    if (k < 1) throw std::invalid_argument("retrieve_local: k must be >= 1");
    std::vector<CandidateDoc> all;
    all.reserve(corpus.size());
    for (const TokenDoc& doc : corpus) {
        const std::vector<double> e = embedder.embed(doc.tokens);
        all.push_back({doc.doc_id, doc.owner, cosine_similarity(query_vec, e), std::nullopt});
    }
    std::sort(all.begin(), all.end(), [](const CandidateDoc& a, const CandidateDoc& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.doc_id < b.doc_id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

std::vector<CandidateDoc> aggregate_candidates(
    const std::vector<std::vector<CandidateDoc>>& per_node, std::size_t k_global) {
    std::vector<CandidateDoc> all;
    for (const auto& list : per_node) all.insert(all.end(), list.begin(), list.end());
    std::sort(all.begin(), all.end(), [](const CandidateDoc& a, const CandidateDoc& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.owner != b.owner) return a.owner < b.owner;
        return a.doc_id < b.doc_id;
    });
    if (all.size() > k_global) all.resize(k_global);
    return all;
}

}  // namespace sdattn
