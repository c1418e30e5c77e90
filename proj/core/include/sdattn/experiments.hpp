#pragma once

#include <string>
#include <vector>

#include "sdattn/config.hpp"
#include "sdattn/model.hpp"
#include "sdattn/probes.hpp"

namespace sdattn::exp {

/// Greedy decode that also records the final-layer hidden row per emitted
/// token, for cross-implementation deviation checks.
struct DecodeTrace {
    std::vector<int> tokens;
    std::vector<std::vector<double>> hiddens;
};
DecodeTrace greedy_decode_trace(const Model& m, std::span<const int> prompt, std::size_t max_new,
                                const AttnFn& attn);

/// Exactness oracle: the full federated run against centralized greedy
/// decoding of the identical input.
struct VerifyReport {
    bool token_match = false;
    double max_hidden_dev = 0.0;
    int first_divergence = -1;  // decode step index, -1 when none
    std::vector<int> expected;
    std::vector<int> actual;
    RunMetrics metrics;
    std::vector<std::string> audit_failures;
};
VerifyReport run_verify(const RunConfig& cfg);

/// Relative attention-output error of the scrambled path under a low-
/// precision wire, structured construction vs a dense random matrix.
/// rel_err is the median over the seed draws.
struct StabilityRow {
    std::string variant;  // "structured" or "dense_random"
    std::size_t seq = 0;
    double rel_err = 0.0;
};
std::vector<StabilityRow> stability_experiment(const StabilityParams& params, FloatFormat wire,
                                               std::uint64_t seed);

/// Rerank ordering agreement vs the f32 reference at each bit width.
struct RerankSweepRow {
    int bits = 0;
    double acc1 = 0.0;       // top-1 agreement rate
    double acc3 = 0.0;       // mean top-3 overlap
    double l1_dev = 0.0;     // mean |score - reference score|
    double rank_edit = 0.0;  // mean edit distance between orderings
};
std::vector<RerankSweepRow> rerank_quant_sweep(const ModelConfig& rr_model,
                                               const QuantParams& params,
                                               const fed::ScramblerConfig& scram,
                                               std::uint64_t seed);

/// Decode under 8-bit wire quantization, full scrambling vs the
/// post-Hadamard-scaling-removed relaxation, against the f64 unquantized
/// reference.
struct AblationRow {
    std::string mode;  // "s1_and_s2" or "s1_only"
    double token_agreement = 0.0;
    double mean_logit_dev = 0.0;
};
std::vector<AblationRow> decode_quant_ablation(const ModelConfig& gen_model, int bits,
                                               std::size_t seeds, double mag_lo, double mag_hi,
                                               std::uint64_t seed);

/// Privacy probe harness rows (CSV-shaped).
struct ProbeRow {
    std::string probe;
    std::string generator;
    std::string params;
    std::uint64_t seed = 0;
    double score = 0.0;
};
std::vector<ProbeRow> run_probe_suite(const ProbeParams& params, double mag_lo, double mag_hi,
                                      std::uint64_t seed);

std::string probe_rows_csv(const std::vector<ProbeRow>& rows);
std::string stability_rows_csv(const std::vector<StabilityRow>& rows);
std::string rerank_rows_csv(const std::vector<RerankSweepRow>& rows);
std::string ablation_rows_csv(const std::vector<AblationRow>& rows);

/// Run artifacts: metrics JSON (ttft_s, decode_latencies_s, decode_tps,
/// traffic_bytes, comm_rounds), answer ids, length-prefixed frame trace and
/// a manifest; all written atomically under out_dir.
void write_run_artifacts(const std::string& out_dir, const fed::RequestResult& result,
                         const std::string& config_text);
std::string metrics_json(const RunMetrics& m);
std::vector<std::uint8_t> trace_bytes(const std::vector<TraceEntry>& trace);

}  // namespace sdattn::exp
