#include "sdattn/netsim.hpp"

#include <cmath>
#include <stdexcept>

namespace sdattn {

SimTime LinkConfig::tx_time_ns(std::size_t bytes) const {
    if (!bandwidth_bps) return 0;
    if (*bandwidth_bps == 0) throw std::invalid_argument("LinkConfig: bandwidth must be > 0");
    // ceil(bits * 1e9 / bw); u128 intermediate avoids overflow for large frames.
    const unsigned __int128 num =
        static_cast<unsigned __int128>(bytes) * 8u * 1000000000ull + (*bandwidth_bps - 1);
    return static_cast<SimTime>(num / *bandwidth_bps);
}

SimTime ComputeModel::cost_ns(double flops) const {
    const double ns = c0_ns + c1_ns_per_flop * flops;
    return ns <= 0.0 ? 0 : static_cast<SimTime>(std::llround(ns));
}

const LinkConfig& NetConfig::link(int src, int dst) const {
    auto it = link_overrides.find({src, dst});
    return it == link_overrides.end() ? default_link : it->second;
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::retrieval: return "retrieval";
        case Phase::rerank: return "rerank";
        case Phase::prefill: return "prefill";
        case Phase::query_prefill: return "query_prefill";
        case Phase::decode: return "decode";
        case Phase::other: return "other";
    }
    return "?";
}

double RunMetrics::decode_tps() const {
    if (decode_latencies_ns.size() < 2) return 0.0;
    SimTime span = 0;
    for (std::size_t i = 1; i < decode_latencies_ns.size(); ++i) span += decode_latencies_ns[i];
    if (span == 0) return 0.0;
    return static_cast<double>(decode_latencies_ns.size() - 1) / (static_cast<double>(span) * 1e-9);
}

void Simulator::add_node(int id, NodeHandler* handler) { nodes_[id] = handler; }

SimTime Simulator::send(int src, int dst, const Frame& frame, Phase phase) {
    if (!nodes_.count(dst)) throw std::invalid_argument("send: unknown destination node");
    const LinkConfig& link = cfg_.link(src, dst);
    std::vector<std::uint8_t> bytes = encode_frame(frame);

    auto& free_at = link_free_[{src, dst}];
    const SimTime start = std::max({now_, free_at, node_free(src)});
    const SimTime tx_end = start + link.tx_time_ns(bytes.size());
    free_at = tx_end;
    const SimTime deliver = tx_end + link.latency_ns;

    metrics_.traffic_bytes += bytes.size();
    auto& pc = metrics_.by_phase[phase];
    pc.traffic_bytes += bytes.size();
    pc.frames += 1;

    trace_.push_back(TraceEntry{start, deliver, src, dst, bytes});

    Event ev;
    ev.t = deliver;
    ev.seq = seq_++;
    ev.src = src;
    ev.dst = dst;
    ev.bytes = std::move(bytes);
    queue_.push(std::move(ev));
    return deliver;
}

void Simulator::call_at(SimTime t, std::function<void(Simulator&)> fn) {
    Event ev;
    ev.t = std::max(t, now_);
    ev.seq = seq_++;
    ev.fn = std::move(fn);
    queue_.push(std::move(ev));
}

void Simulator::advance_compute(int node, double flops) {
    auto it = cfg_.compute.find(node);
    if (it == cfg_.compute.end()) return;
    const SimTime cost = it->second.cost_ns(flops);
    node_free_[node] = std::max(node_free(node), now_) + cost;
}

SimTime Simulator::node_free(int node) const {
    auto it = node_free_.find(node);
    return it == node_free_.end() ? 0 : it->second;
}

void Simulator::set_node_free(int node, SimTime t) { node_free_[node] = t; }

void Simulator::count_round(Phase phase) {
    metrics_.comm_rounds += 1;
    metrics_.by_phase[phase].rounds += 1;
}

void Simulator::run() {
    while (!queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        if (ev.dst >= 0 && node_free(ev.dst) > ev.t) {
            // Receiver busy with modeled compute; redeliver when it frees up
            // instead of warping the global clock.
            ev.t = node_free(ev.dst);
            ev.seq = seq_++;
            queue_.push(std::move(ev));
            continue;
        }
        now_ = std::max(now_, ev.t);
        if (ev.dst < 0) {
            ev.fn(*this);
            continue;
        }
        bytes_received_ += ev.bytes.size();
        const Frame f = decode_frame(ev.bytes);
        nodes_.at(ev.dst)->on_frame(*this, ev.src, f);
    }
}

}  // namespace sdattn
