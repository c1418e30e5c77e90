#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sdattn/matrix.hpp"

namespace sdattn {

struct TokenDoc {
    std::uint64_t doc_id = 0;
    int owner = -1;
    std::vector<int> tokens;
};

struct CandidateDoc {
    std::uint64_t doc_id = 0;
    int owner = -1;
    double similarity = 0.0;
    std::optional<double> rerank_score;
};

/// Toy retrieval embeddings: a seeded random projection of the token-id
/// histogram, L2-normalized. Shared by every node (the embedding model is
/// public); only the top-k cosine math is what the pipeline exercises.
class ToyEmbedder {
  public:
    ToyEmbedder(std::size_t vocab_size, std::size_t embed_dim, std::uint64_t seed);

    std::vector<double> embed(std::span<const int> tokens) const;
    std::size_t dim() const { return proj_.cols; }

  private:
    Matrix proj_;  // vocab x embed_dim
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Top-k by cosine over the local corpus; ties break by doc id ascending.
std::vector<CandidateDoc> retrieve_local(std::span<const double> query_vec,
                                         std::span<const TokenDoc> corpus, std::size_t k,
                                         const ToyEmbedder& embedder);

/// Global top-k merge with the deterministic tie-break
/// (similarity desc, node id asc, doc id asc).
std::vector<CandidateDoc> aggregate_candidates(
    const std::vector<std::vector<CandidateDoc>>& per_node, std::size_t k_global);

}  // namespace sdattn
