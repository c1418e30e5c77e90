#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "sdattn/model.hpp"
#include "sdattn/netsim.hpp"
#include "sdattn/retrieval.hpp"
#include "sdattn/roles.hpp"
#include "sdattn/scrambler.hpp"

namespace sdattn::fed {

struct ScramblerConfig {
    double mag_lo = 0.125;
    double mag_hi = 8.0;
    ScramblerMode mode = ScramblerMode::s1_and_s2;
    FloatFormat wire = FloatFormat::bf16;
    std::optional<int> gen_quant_bits;     // quantize generation-phase wire tensors
    std::optional<int> rerank_quant_bits;  // quantize rerank-phase wire tensors
};

/// Preset-style pinned context span (fixed-length workloads): the segment's
/// tokens are synthesized deterministically from the master seed by its
/// owner, bypassing document selection the way fixed-length throughput
/// runs do.
struct PinnedSegment {
    int owner = -1;
    std::size_t length = 0;
};

struct Workload {
    std::vector<int> query;
    std::size_t max_new = 32;
    std::size_t top_k = 10;
    std::size_t top_m = 4;
    std::vector<PinnedSegment> pinned;  // non-empty: use these spans verbatim
};

struct NodeSetup {
    int id = -1;
    bool coordinator = false;
    std::vector<TokenDoc> corpus;
};

struct RequestSpec {
    std::uint64_t request_id = 1;
    std::uint64_t master_seed = 1;
    ModelConfig gen_model;
    ModelConfig rr_model;
    ScramblerConfig scrambler;
    Workload workload;
    std::vector<NodeSetup> nodes;
    std::size_t embed_dim = 32;
    bool sabotage_dec = false;  // negative-control hook: decode with a wrong key set

    int coordinator_id() const;
    std::vector<int> node_ids() const;
    /// Shared key-negotiation seed, modeled as delivered out of band to the
    /// request's non-compute participants.
    std::uint64_t shared_seed() const;
};

/// Who derived which domain's key set; the role-safety audit checks that no
/// domain's compute node appears among its key holders.
struct KeyLedger {
    std::set<std::pair<int, std::uint16_t>> holders;  // (node, domain)

    void record(int node, std::uint16_t domain) { holders.insert({node, domain}); }
    bool holds(int node, std::uint16_t domain) const { return holders.count({node, domain}) > 0; }
};

struct RerankTask {
    std::size_t pair_idx = 0;
    std::uint64_t doc_id = 0;
    int owner = -1;
    int compute_node = -1;
    std::uint16_t domain = 0;
};

struct RequestResult {
    std::vector<int> answer;
    RunMetrics metrics;
    SegmentMap segmap;
    RolePlan plan;
    std::vector<CandidateDoc> reranked;  // top-k with scores, rank order
    std::vector<RerankTask> rerank_tasks;
    KeyLedger ledger;
    std::vector<TraceEntry> trace;
    /// Harness-side concatenation of all segment tokens (for oracle
    /// comparison only; never crosses the simulated wire).
    std::vector<int> full_input_tokens;
    /// Final-layer hidden row per decoded token, for deviation checks.
    std::vector<std::vector<double>> decode_hiddens;
};

/// Executes the whole lifecycle (retrieval, rerank, prefill, decode) over
/// the simulated network and returns the answer plus metrics and audit
/// material.
RequestResult run_request(const RequestSpec& spec, const NetConfig& net);

/// Trace-level audits for the acceptance gate. Empty result = pass.
std::vector<std::string> audit_role_safety(const RequestResult& result);
std::vector<std::string> audit_plaintext_isolation(const RequestResult& result);

/// Deterministic synthetic tokens for pinned segments; owners regenerate
/// their own spans locally from the public seed.
std::vector<int> pinned_segment_tokens(std::uint64_t master_seed, std::uint64_t request_id,
                                       std::size_t seg_idx, std::size_t length,
                                       std::size_t vocab_size);

/// Closed-form communication predictions for a finished run; the acceptance
/// suite compares these against measured counters, exactly.
struct CommPrediction {
    std::uint64_t rounds_retrieval = 0;
    std::uint64_t rounds_rerank = 0;
    std::uint64_t rounds_prefill = 0;        // context segments
    std::uint64_t rounds_query_prefill = 0;  // final segment
    std::uint64_t rounds_decode = 0;
    std::uint64_t traffic_bytes_total = 0;
    std::map<Phase, std::uint64_t> traffic_by_phase;

    std::uint64_t rounds_total() const {
        return rounds_retrieval + rounds_rerank + rounds_prefill + rounds_query_prefill +
               rounds_decode;
    }
};
CommPrediction predict_comm(const RequestSpec& spec, const RequestResult& result);

}  // namespace sdattn::fed
