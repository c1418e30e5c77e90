#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "sdattn/frame.hpp"

namespace sdattn {

/// Simulated time in integer nanoseconds; integer arithmetic keeps latency
/// algebra exact (doubling a link latency shifts per-token decode latency
/// by exactly n_layers * delta-RTT, with no float fuzz).
using SimTime = std::uint64_t;

struct LinkConfig {
    SimTime latency_ns = 0;
    std::optional<std::uint64_t> bandwidth_bps;  // absent = unlimited

    SimTime tx_time_ns(std::size_t bytes) const;
};

/// Optional synthetic per-node compute cost: c0 + c1 * flops, default zero.
struct ComputeModel {
    double c0_ns = 0.0;
    double c1_ns_per_flop = 0.0;

    SimTime cost_ns(double flops) const;
};

struct NetConfig {
    LinkConfig default_link;
    std::map<std::pair<int, int>, LinkConfig> link_overrides;  // directed (src, dst)
    std::map<int, ComputeModel> compute;

    const LinkConfig& link(int src, int dst) const;
};

enum class Phase : std::uint8_t { retrieval, rerank, prefill, query_prefill, decode, other };
std::string to_string(Phase p);

struct PhaseCounters {
    std::uint64_t traffic_bytes = 0;
    std::uint64_t frames = 0;
    std::uint64_t rounds = 0;
};

/// Table-2-shaped run metrics: simulated TTFT, per-token decode latency,
/// exact traffic bytes and awaited-response round counts.
struct RunMetrics {
    SimTime ttft_ns = 0;
    std::vector<SimTime> decode_latencies_ns;
    std::uint64_t traffic_bytes = 0;
    std::uint64_t comm_rounds = 0;
    std::map<Phase, PhaseCounters> by_phase;

    double ttft_s() const { return static_cast<double>(ttft_ns) * 1e-9; }
    /// (tokens - 1) / span for >= 2 tokens, else 0.
    double decode_tps() const;
};

/// One frame in flight or a scheduled callback.
struct TraceEntry {
    SimTime send_time = 0;
    SimTime deliver_time = 0;
    int src = -1;
    int dst = -1;
    std::vector<std::uint8_t> bytes;  // encoded frame
};

class Simulator;

class NodeHandler {
  public:
    virtual ~NodeHandler() = default;
    virtual void on_frame(Simulator& sim, int src, const Frame& frame) = 0;
};

/// Deterministic discrete-event transport: events fire in (time, seq)
/// order; per-directed-link transmissions serialize (store-and-forward), so
/// queued bulk transfers ride out communication idle periods naturally.
class Simulator {
  public:
    explicit Simulator(NetConfig cfg) : cfg_(std::move(cfg)) {}

    void add_node(int id, NodeHandler* handler);

    /// Encodes, accounts and schedules the frame. Returns delivery time.
    SimTime send(int src, int dst, const Frame& frame, Phase phase);

    /// Schedules a plain callback at now + delay on a node's timeline.
    void call_at(SimTime t, std::function<void(Simulator&)> fn);

    /// Adds synthetic compute time to a node's availability clock.
    void advance_compute(int node, double flops);

    /// Node availability: events for a node run no earlier than this.
    SimTime node_free(int node) const;
    void set_node_free(int node, SimTime t);

    void run();

    SimTime now() const { return now_; }
    const NetConfig& config() const { return cfg_; }

    /// Round accounting is owned by the protocol layer: one awaited
    /// request->response exchange, counted at the awaiter when the response
    /// completes.
    void count_round(Phase phase);

    RunMetrics& metrics() { return metrics_; }
    const RunMetrics& metrics() const { return metrics_; }
    const std::vector<TraceEntry>& trace() const { return trace_; }

    std::uint64_t bytes_received() const { return bytes_received_; }

  private:
    struct Event {
        SimTime t = 0;
        std::uint64_t seq = 0;
        int src = -1;
        int dst = -1;  // -1: plain callback
        std::vector<std::uint8_t> bytes;
        std::function<void(Simulator&)> fn;
    };
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            return a.t != b.t ? a.t > b.t : a.seq > b.seq;
        }
    };

    NetConfig cfg_;
    std::map<int, NodeHandler*> nodes_;
    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::map<std::pair<int, int>, SimTime> link_free_;
    std::map<int, SimTime> node_free_;
    std::vector<TraceEntry> trace_;
    RunMetrics metrics_;
    SimTime now_ = 0;
    std::uint64_t seq_ = 0;
    std::uint64_t bytes_received_ = 0;
    Phase current_phase_ = Phase::other;

  public:
    void set_phase(Phase p) { current_phase_ = p; }
    Phase phase() const { return current_phase_; }
};

}  // namespace sdattn
