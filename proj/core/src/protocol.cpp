#include "sdattn/protocol.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <stdexcept>

#include "sdattn/rng.hpp"

namespace sdattn::fed {

namespace {

constexpr std::uint16_t kHeadAll = 0xFFFF;
constexpr std::uint16_t kHeadStats = 0xFFFE;
constexpr std::uint16_t kRerankDomainBase = 100;

enum CtrlOp : std::uint16_t { kCtrlPrefillGo = 0, kCtrlPrefillDone = 1 };

// KEY_HINT payload record tags.
enum PlanRec : int {
    kRecHeader = 0,
    kRecSegment = 1,
    kRecDomain = 2,
    kRecDomainSeg = 3,
    kRecRoute = 4,
    kRecSegDoc = 5,
    kRecSegPinned = 6,
    kRecRerankTask = 7,
};

struct PlanWire {
    SegmentMap segmap;
    RolePlan plan;
    std::map<std::size_t, std::vector<std::uint64_t>> seg_docs;
    std::set<std::size_t> pinned;
};

Matrix plan_to_matrix(const PlanWire& pw) {
    std::vector<std::array<double, 6>> rows;
    rows.push_back({kRecHeader, static_cast<double>(pw.segmap.segments.size()),
                    static_cast<double>(pw.segmap.coordinator),
                    static_cast<double>(pw.plan.domains.size()), 0, 0});
    for (std::size_t i = 0; i < pw.segmap.segments.size(); ++i) {
        const Segment& s = pw.segmap.segments[i];
        rows.push_back({kRecSegment, static_cast<double>(i), static_cast<double>(s.first_pos),
                        static_cast<double>(s.length), static_cast<double>(s.owner), 0});
    }
    for (const DomainPlan& d : pw.plan.domains) {
        rows.push_back({kRecDomain, static_cast<double>(d.id),
                        static_cast<double>(d.compute_node), 0, 0, 0});
        for (std::size_t seg : d.segments)
            rows.push_back({kRecDomainSeg, static_cast<double>(d.id), static_cast<double>(seg), 0,
                            0, 0});
    }
    for (const auto& [key, dom] : pw.plan.route)
        rows.push_back({kRecRoute, static_cast<double>(key.first),
                        static_cast<double>(key.second), static_cast<double>(dom), 0, 0});
    for (const auto& [seg, docs] : pw.seg_docs)
        for (std::uint64_t id : docs)
            rows.push_back({kRecSegDoc, static_cast<double>(seg), static_cast<double>(id), 0, 0, 0});
    for (std::size_t seg : pw.pinned)
        rows.push_back({kRecSegPinned, static_cast<double>(seg), 1, 0, 0, 0});

    Matrix m(rows.size(), 6);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < 6; ++j) m.at(i, j) = rows[i][j];
    return m;
}

PlanWire plan_from_matrix(const Matrix& m) {
    PlanWire pw;
    std::map<std::uint16_t, DomainPlan> domains;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const auto tag = static_cast<int>(m.at(i, 0));
        switch (tag) {
            case kRecHeader:
                pw.segmap.segments.resize(static_cast<std::size_t>(m.at(i, 1)));
                pw.segmap.coordinator = static_cast<int>(m.at(i, 2));
                pw.plan.coordinator = pw.segmap.coordinator;
                break;
            case kRecSegment: {
                Segment& s = pw.segmap.segments[static_cast<std::size_t>(m.at(i, 1))];
                s.first_pos = static_cast<std::size_t>(m.at(i, 2));
                s.length = static_cast<std::size_t>(m.at(i, 3));
                s.owner = static_cast<int>(m.at(i, 4));
                break;
            }
            case kRecDomain: {
                DomainPlan d;
                d.id = static_cast<std::uint16_t>(m.at(i, 1));
                d.compute_node = static_cast<int>(m.at(i, 2));
                domains[d.id] = d;
                break;
            }
            case kRecDomainSeg:
                domains[static_cast<std::uint16_t>(m.at(i, 1))].segments.push_back(
                    static_cast<std::size_t>(m.at(i, 2)));
                break;
            case kRecRoute:
                pw.plan.route[{static_cast<int>(m.at(i, 1)),
                               static_cast<std::size_t>(m.at(i, 2))}] =
                    static_cast<std::uint16_t>(m.at(i, 3));
                break;
            case kRecSegDoc:
                pw.seg_docs[static_cast<std::size_t>(m.at(i, 1))].push_back(
                    static_cast<std::uint64_t>(m.at(i, 2)));
                break;
            case kRecSegPinned:
                pw.pinned.insert(static_cast<std::size_t>(m.at(i, 1)));
                break;
            default:
                throw std::invalid_argument("plan_from_matrix: unknown record");
        }
    }
    for (auto& entry : domains) pw.plan.domains.push_back(entry.second);
    return pw;
}

double flops_attention(std::size_t lq, std::size_t lk, std::size_t d) {
    return 2.0 * static_cast<double>(lq) * static_cast<double>(lk) * (static_cast<double>(d) + 2.0);
}

double flops_layer_local(const ModelConfig& cfg, std::size_t rows) {
    const double dm = static_cast<double>(cfg.d_model);
    return static_cast<double>(rows) * dm * dm * (4.0 + 2.0 * cfg.ffn_mult) * 2.0;
}

}  // namespace

int RequestSpec::coordinator_id() const {
    for (const NodeSetup& n : nodes)
        if (n.coordinator) return n.id;
    throw std::invalid_argument("RequestSpec: exactly one coordinator required");
}

std::vector<int> RequestSpec::node_ids() const {
    std::vector<int> ids;
    for (const NodeSetup& n : nodes) ids.push_back(n.id);
    return ids;
}

std::uint64_t RequestSpec::shared_seed() const {
    return derive_seed(master_seed, {request_id, 0x7365656Bull});
}

std::vector<int> pinned_segment_tokens(std::uint64_t master_seed, std::uint64_t request_id,
                                       std::size_t seg_idx, std::size_t length,
                                       std::size_t vocab_size) {
    RngStream rng(derive_seed(master_seed, {request_id, 0x706E6564ull, seg_idx}));
    std::vector<int> out(length);
    for (auto& t : out) t = 4 + static_cast<int>(rng.next_below(vocab_size - 4));
    return out;
}

namespace {

class FedNode : public NodeHandler {
  public:
    FedNode(const RequestSpec& spec, int id, KeyLedger* ledger, RequestResult* result)
        : spec_(spec),
          id_(id),
          coord_(id == spec.coordinator_id()),
          gen_(init_model(spec.gen_model)),
          rr_(init_model(spec.rr_model)),
          embedder_(spec.gen_model.vocab_size, spec.embed_dim,
                    derive_seed(spec.master_seed, {0x656D6264ull})),
          ledger_(ledger),
          result_(result) {
        for (const NodeSetup& n : spec.nodes)
            if (n.id == id) corpus_ = n.corpus;
        for (const TokenDoc& d : corpus_) docs_by_id_[d.doc_id] = &d;
        gen_dtype_ = spec.scrambler.gen_quant_bits
                         ? quant_dtype(*spec.scrambler.gen_quant_bits)
                         : dtype_from_format(spec.scrambler.wire);
        rr_dtype_ = spec.scrambler.rerank_quant_bits
                        ? quant_dtype(*spec.scrambler.rerank_quant_bits)
                        : dtype_from_format(spec.scrambler.wire);
        stats_dtype_ = is_quant(gen_dtype_) ? DtypeCode::f32 : gen_dtype_;
    }

    void on_frame(Simulator& sim, int src, const Frame& f) override;
    void start_request(Simulator& sim);

    const std::map<std::size_t, std::vector<int>>& seg_tokens() const { return seg_tokens_; }

  private:
    // ------------------------------------------------------------------ setup
    const RequestSpec& spec_;
    int id_;
    bool coord_;
    Model gen_, rr_;
    ToyEmbedder embedder_;
    KeyLedger* ledger_;
    RequestResult* result_;
    std::vector<TokenDoc> corpus_;
    std::map<std::uint64_t, const TokenDoc*> docs_by_id_;
    DtypeCode gen_dtype_, rr_dtype_, stats_dtype_;

    // ------------------------------------------------------------------ plan
    SegmentMap segmap_;
    RolePlan plan_;
    bool plan_ready_ = false;
    std::map<std::size_t, std::vector<int>> seg_tokens_;  // own segments only

    void adopt_plan(const PlanWire& pw);

    // ------------------------------------------------------------------ keys
    std::map<std::pair<std::uint16_t, std::uint32_t>, ScramblerKeySet> theta_cache_;

    const ScramblerKeySet& theta(std::uint16_t domain, std::uint32_t layer, bool rerank) {
        const auto key = std::make_pair(domain, layer);
        auto it = theta_cache_.find(key);
        if (it != theta_cache_.end()) return it->second;
        if (plan_ready_ && domain < kRerankDomainBase && plan_.compute_of(domain) == id_)
            throw std::runtime_error("role violation: compute node deriving its own domain key");
        ledger_->record(id_, domain);
        const ModelConfig& mc = rerank ? spec_.rr_model : spec_.gen_model;
        KeySetSpec ks;
        ks.request_id = spec_.request_id;
        ks.layer = layer;
        ks.domain = domain;
        ks.n_heads = mc.n_heads;
        ks.head_dim = mc.head_dim;
        ks.mag_lo = spec_.scrambler.mag_lo;
        ks.mag_hi = spec_.scrambler.mag_hi;
        ks.mode = spec_.scrambler.mode;
        return theta_cache_.emplace(key, negotiate_keyset(spec_.shared_seed(), ks)).first->second;
    }

    // Wrong-key variant for the verify negative control.
    ScramblerKeySet sabotaged_theta(std::uint16_t domain, std::uint32_t layer) {
        KeySetSpec ks;
        ks.request_id = spec_.request_id;
        ks.layer = layer;
        ks.domain = domain;
        ks.n_heads = spec_.gen_model.n_heads;
        ks.head_dim = spec_.gen_model.head_dim;
        ks.mag_lo = spec_.scrambler.mag_lo;
        ks.mag_hi = spec_.scrambler.mag_hi;
        ks.mode = spec_.scrambler.mode;
        return negotiate_keyset(spec_.shared_seed() ^ 0xDEADBEEFull, ks);
    }

    // -------------------------------------------------------- inquirer spans
    struct ShardResp {
        std::vector<Matrix> o, stats;
        bool have_o = false, have_stats = false;
        bool complete() const { return have_o && have_stats; }
    };
    struct SpanRun {
        bool active = false;
        std::size_t seg_idx = SIZE_MAX;  // SIZE_MAX while decoding
        std::size_t scope = 0;           // prior segments are those below this index
        Phase phase = Phase::other;
        bool causal = true;
        std::size_t first_pos = 0;
        Matrix h;
        std::uint32_t layer = 0;
        HeadProjections proj;
        std::vector<std::uint16_t> remote;
        std::map<std::uint16_t, ShardResp> pending;
        KVCacheSegment building;
        std::function<void(Simulator&, const Matrix&)> done;
    };
    SpanRun span_;
    std::map<std::size_t, KVCacheSegment> own_kv_;  // by segment index
    KVCacheSegment gen_kv_;                         // coordinator: generated tokens

    void begin_span(Simulator& sim, std::size_t seg_idx, std::size_t scope,
                    std::span<const int> tokens, std::size_t first_pos, Phase phase, bool causal,
                    std::function<void(Simulator&, const Matrix&)> done);
    void span_send_layer(Simulator& sim);
    void span_finish_layer(Simulator& sim);
    void on_shard_piece(Simulator& sim, const Frame& f);

    std::vector<const KVCacheSegment*> local_prior_segments() const;

    // --------------------------------------------------------- context owner
    void ship_segment_kv(Simulator& sim, std::size_t seg_idx);

    // ---------------------------------------------------------- compute node
    struct DomainStore {
        // segment -> layer -> per-head K' / V'
        std::map<std::size_t, std::map<std::uint32_t, std::vector<Matrix>>> k, v;
    };
    std::map<std::uint16_t, DomainStore> store_;
    std::deque<std::pair<int, Frame>> q_backlog_;

    void on_scr_kv(Simulator& sim, const Frame& f);
    bool try_serve_q(Simulator& sim, int src, const Frame& f);
    void drain_backlog(Simulator& sim);

    // -------------------------------------------------------------- retrieval
    std::size_t retr_pending_ = 0;
    std::vector<std::vector<CandidateDoc>> retr_lists_;
    std::vector<double> query_embedding_;

    // ----------------------------------------------------------------- rerank
    std::vector<CandidateDoc> candidates_;
    std::size_t rr_next_ = 0;
    std::size_t rr_pair_count_ = 0;
    struct RerankParty {
        bool active = false;
        std::uint16_t domain = 0;
        int compute_node = -1;
        Matrix h;
        std::uint32_t layer = 0;
        std::size_t first_pos = 0;
        std::size_t rows = 0;
        std::function<void(Simulator&, const Matrix&)> done;
    };
    RerankParty rrp_;
    // compute side: (domain, layer) -> src -> (qkv tensors, first_pos from announce-free ordering)
    struct RerankInputs {
        std::map<int, std::vector<Matrix>> by_src;  // per head [rows, 3d]
    };
    std::map<std::pair<std::uint16_t, std::uint32_t>, RerankInputs> rr_inputs_;

    void rr_party_begin(Simulator& sim, std::uint16_t domain, int compute_node,
                        std::span<const int> tokens, std::size_t first_pos,
                        std::function<void(Simulator&, const Matrix&)> done);
    void rr_party_send(Simulator& sim);
    void rr_party_recv(Simulator& sim, const Frame& f);
    void rr_compute_try(Simulator& sim, std::uint16_t domain, std::uint32_t layer);
    void start_next_candidate(Simulator& sim);
    void finish_rerank(Simulator& sim);

    // ------------------------------------------------------------ coordinator
    void start_retrieval(Simulator& sim);
    void on_retr_resp(Simulator& sim, int src, const Frame& f);
    void build_segments_and_plan(Simulator& sim);
    void sequence_prefill(Simulator& sim, std::size_t seg_idx);
    void start_query_prefill(Simulator& sim);
    void start_decode(Simulator& sim);
    void decode_step(Simulator& sim, int input_token);
    void finish_request(Simulator& sim);

    std::vector<int> answer_;
    SimTime last_token_t_ = 0;
    std::size_t decode_steps_ = 0;
    std::size_t ctx_total_ = 0;
};

// ---------------------------------------------------------------------------
// frame dispatch

void FedNode::on_frame(Simulator& sim, int src, const Frame& f) {
    switch (f.msg_type) {
        case MsgType::retr_req: {
            sim.advance_compute(id_, 1.0);
            const std::vector<double> qv = tensors_from_frame(f)[0].data;
            const auto k = static_cast<std::size_t>(f.layer);
            std::vector<CandidateDoc> top = retrieve_local(qv, corpus_, std::max<std::size_t>(k, 1),
                                                           embedder_);
            Matrix resp(top.size(), 2);
            for (std::size_t i = 0; i < top.size(); ++i) {
                resp.at(i, 0) = static_cast<double>(top[i].doc_id);
                resp.at(i, 1) = top[i].similarity;
            }
            Frame out = make_tensor_frame(MsgType::retr_resp, spec_.request_id, 0, kHeadAll, 0,
                                          std::span<const Matrix>(&resp, 1), DtypeCode::f64);
            sim.send(id_, src, out, Phase::retrieval);
            return;
        }
        case MsgType::retr_resp:
            on_retr_resp(sim, src, f);
            return;
        case MsgType::key_hint: {
            const Matrix m = tensors_from_frame(f)[0];
            if (m.rows == 1 && static_cast<int>(m.at(0, 0)) == kRecRerankTask) {
                // (pair-domain rerank announce lands on the doc owner)
                const auto doc_id = static_cast<std::uint64_t>(m.at(0, 2));
                const auto query_len = static_cast<std::size_t>(m.at(0, 3));
                const auto compute_node = static_cast<int>(m.at(0, 4));
                auto it = docs_by_id_.find(doc_id);
                if (it == docs_by_id_.end())
                    throw std::runtime_error("rerank task for unknown doc");
                std::vector<int> tokens = it->second->tokens;
                tokens.push_back(kTokSep);
                rr_party_begin(sim, f.domain, compute_node, tokens, query_len + 2,
                               [](Simulator&, const Matrix&) {});
                return;
            }
            adopt_plan(plan_from_matrix(m));
            drain_backlog(sim);
            return;
        }
        case MsgType::ctrl:
            if (f.layer == kCtrlPrefillGo) {
                const std::size_t seg = f.head;
                begin_span(sim, seg, seg, seg_tokens_.at(seg), segmap_.segments[seg].first_pos,
                           Phase::prefill, /*causal=*/true,
                           [this, seg](Simulator& s, const Matrix&) {
                               ship_segment_kv(s, seg);
                               Frame done;
                               done.msg_type = MsgType::ctrl;
                               done.request_id = spec_.request_id;
                               done.layer = kCtrlPrefillDone;
                               done.head = static_cast<std::uint16_t>(seg);
                               s.send(id_, segmap_.coordinator, done, Phase::prefill);
                           });
                return;
            }
            if (f.layer == kCtrlPrefillDone) {
                sequence_prefill(sim, static_cast<std::size_t>(f.head) + 1);
                return;
            }
            throw std::runtime_error("unknown ctrl opcode");
        case MsgType::scr_kv:
            on_scr_kv(sim, f);
            return;
        case MsgType::scr_q:
            if (!try_serve_q(sim, src, f)) q_backlog_.emplace_back(src, f);
            return;
        case MsgType::scr_shard:
            on_shard_piece(sim, f);
            return;
        case MsgType::rerank_in: {
            rr_inputs_[{f.domain, f.layer}].by_src[src] = tensors_from_frame(f);
            rr_compute_try(sim, f.domain, f.layer);
            return;
        }
        case MsgType::rerank_out:
            rr_party_recv(sim, f);
            return;
    }
    throw std::runtime_error("unhandled frame type");
}

// ---------------------------------------------------------------------------
// retrieval + candidate aggregation (coordinator)

void FedNode::start_request(Simulator& sim) {
    if (!coord_) return;
    start_retrieval(sim);
}

void FedNode::start_retrieval(Simulator& sim) {
    sim.set_phase(Phase::retrieval);
    query_embedding_ = embedder_.embed(spec_.workload.query);
    Matrix q(1, query_embedding_.size(), query_embedding_);
    retr_pending_ = 0;
    for (const NodeSetup& n : spec_.nodes) {
        if (n.id == id_) continue;
        Frame f = make_tensor_frame(MsgType::retr_req, spec_.request_id,
                                    static_cast<std::uint16_t>(spec_.workload.top_k), kHeadAll, 0,
                                    std::span<const Matrix>(&q, 1), DtypeCode::f64);
        sim.send(id_, n.id, f, Phase::retrieval);
        ++retr_pending_;
    }
    retr_lists_.clear();
    retr_lists_.push_back(
        retrieve_local(query_embedding_, corpus_, std::max<std::size_t>(spec_.workload.top_k, 1),
                       embedder_));
    if (retr_pending_ == 0) {
        candidates_ = aggregate_candidates(retr_lists_, spec_.workload.top_k);
        start_next_candidate(sim);
    }
}

void FedNode::on_retr_resp(Simulator& sim, int src, const Frame& f) {
    const Matrix m = tensors_from_frame(f)[0];
    std::vector<CandidateDoc> list;
    for (std::size_t i = 0; i < m.rows; ++i)
        list.push_back({static_cast<std::uint64_t>(m.at(i, 0)), src, m.at(i, 1), std::nullopt});
    retr_lists_.push_back(std::move(list));
    sim.count_round(Phase::retrieval);
    if (--retr_pending_ == 0) {
        candidates_ = aggregate_candidates(retr_lists_, spec_.workload.top_k);
        sim.set_phase(Phase::rerank);
        rr_next_ = 0;
        start_next_candidate(sim);
    }
}

// ---------------------------------------------------------------------------
// rerank

void FedNode::start_next_candidate(Simulator& sim) {
    sim.set_phase(Phase::rerank);
    if (rr_next_ >= candidates_.size()) {
        finish_rerank(sim);
        return;
    }
    CandidateDoc& cand = candidates_[rr_next_];
    if (cand.owner == id_) {
        // Query and doc co-located: plain local scoring, zero cross-node rounds.
        const TokenDoc& doc = *docs_by_id_.at(cand.doc_id);
        sim.advance_compute(
            id_, spec_.rr_model.n_layers *
                     flops_layer_local(spec_.rr_model,
                                       spec_.workload.query.size() + doc.tokens.size() + 3));
        cand.rerank_score =
            rerank_score(rr_, spec_.workload.query, doc.tokens, centralized_attn());
        ++rr_next_;
        start_next_candidate(sim);
        return;
    }
    // Remote pair: pick the smallest-id node that is neither party.
    int compute_node = -1;
    for (int n : spec_.node_ids()) {
        if (n == id_ || n == cand.owner) continue;
        if (compute_node < 0 || n < compute_node) compute_node = n;
    }
    if (compute_node < 0) throw std::runtime_error("rerank: no eligible compute node");
    const auto domain = static_cast<std::uint16_t>(kRerankDomainBase + rr_pair_count_);
    result_->rerank_tasks.push_back({rr_pair_count_, cand.doc_id, cand.owner, compute_node, domain});
    ++rr_pair_count_;

    Matrix task(1, 6);
    task.at(0, 0) = kRecRerankTask;
    task.at(0, 1) = static_cast<double>(rr_pair_count_ - 1);
    task.at(0, 2) = static_cast<double>(cand.doc_id);
    task.at(0, 3) = static_cast<double>(spec_.workload.query.size());
    task.at(0, 4) = static_cast<double>(compute_node);
    task.at(0, 5) = static_cast<double>(cand.owner);
    Frame announce = make_tensor_frame(MsgType::key_hint, spec_.request_id, 0, kHeadAll, domain,
                                       std::span<const Matrix>(&task, 1), DtypeCode::f64);
    sim.send(id_, cand.owner, announce, Phase::rerank);

    std::vector<int> tokens;
    tokens.push_back(kTokCls);
    tokens.insert(tokens.end(), spec_.workload.query.begin(), spec_.workload.query.end());
    tokens.push_back(kTokSep);
    rr_party_begin(sim, domain, compute_node, tokens, 0,
                   [this, idx = rr_next_](Simulator& s, const Matrix& h) {
                       candidates_[idx].rerank_score = dot(h.row(0), rr_.score_w) + rr_.score_b;
                       ++rr_next_;
                       start_next_candidate(s);
                   });
}

void FedNode::rr_party_begin(Simulator& sim, std::uint16_t domain, int compute_node,
                             std::span<const int> tokens, std::size_t first_pos,
                             std::function<void(Simulator&, const Matrix&)> done) {
    if (rrp_.active) throw std::runtime_error("rerank party already active");
    rrp_ = RerankParty{};
    rrp_.active = true;
    rrp_.domain = domain;
    rrp_.compute_node = compute_node;
    rrp_.first_pos = first_pos;
    rrp_.rows = tokens.size();
    rrp_.layer = 0;
    rrp_.h = embed_tokens(rr_, tokens, first_pos);
    rrp_.done = std::move(done);
    rr_party_send(sim);
}

void FedNode::rr_party_send(Simulator& sim) {
    const ScramblerKeySet& base = theta(rrp_.domain, rrp_.layer, /*rerank=*/true);
    ScramblerKeySet th = base;
    th.p_q = base.span_perm(0, rrp_.first_pos, rrp_.rows);
    th.p_kv = base.span_perm(1, rrp_.first_pos, rrp_.rows);

    sim.advance_compute(id_, flops_layer_local(spec_.rr_model, rrp_.rows));
    Matrix x = rms_norm(rrp_.h, rr_.layers[rrp_.layer].norm1);
    HeadProjections p = project_qkv(rr_, x, rrp_.layer);
    std::vector<Matrix> packed(rr_.cfg.n_heads);
    for (std::size_t hd = 0; hd < rr_.cfg.n_heads; ++hd) {
        const ScrambledTriple t = enc_qkv(p.q[hd], p.k[hd], p.v[hd], th, hd);
        Matrix m(rrp_.rows, 3 * rr_.cfg.head_dim);
        for (std::size_t r = 0; r < rrp_.rows; ++r) {
            auto dst = m.row(r);
            std::copy(t.q_s.row(r).begin(), t.q_s.row(r).end(), dst.begin());
            std::copy(t.k_s.row(r).begin(), t.k_s.row(r).end(),
                      dst.begin() + static_cast<std::ptrdiff_t>(rr_.cfg.head_dim));
            std::copy(t.v_s.row(r).begin(), t.v_s.row(r).end(),
                      dst.begin() + static_cast<std::ptrdiff_t>(2 * rr_.cfg.head_dim));
        }
        packed[hd] = std::move(m);
    }
    Frame f = make_tensor_frame(MsgType::rerank_in, spec_.request_id, rrp_.layer, kHeadAll,
                                rrp_.domain, packed, rr_dtype_);
    sim.send(id_, rrp_.compute_node, f, Phase::rerank);
}

void FedNode::rr_compute_try(Simulator& sim, std::uint16_t domain, std::uint32_t layer) {
    auto it = rr_inputs_.find({domain, layer});
    if (it == rr_inputs_.end() || it->second.by_src.size() < 2) return;
    const auto& by_src = it->second.by_src;
    // The query party owns the earlier positions; announcements give the doc
    // party first_pos = query_len + 2, so the coordinator rows come first.
    // Sources are assembled in coordinator-then-owner order via node id of
    // the request coordinator.
    const int coord = spec_.coordinator_id();
    std::vector<int> order;
    if (by_src.count(coord)) order.push_back(coord);
    for (const auto& [src, _] : by_src)
        if (src != coord) order.push_back(src);
    if (order.size() != 2) throw std::runtime_error("rerank compute: expected two parties");

    const std::size_t n_heads = by_src.begin()->second.size();
    const std::size_t d = by_src.begin()->second[0].cols / 3;
    std::vector<std::size_t> rows_of(order.size());
    std::vector<Matrix> out_per_head(n_heads);
    double flops = 0.0;
    std::size_t total_rows = 0;
    for (std::size_t i = 0; i < order.size(); ++i) total_rows += by_src.at(order[i])[0].rows;

    for (std::size_t hd = 0; hd < n_heads; ++hd) {
        Matrix q(total_rows, d), k(total_rows, d), v(total_rows, d);
        std::size_t r0 = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const Matrix& src_m = by_src.at(order[i])[hd];
            rows_of[i] = src_m.rows;
            for (std::size_t r = 0; r < src_m.rows; ++r) {
                auto srow = src_m.row(r);
                std::copy(srow.begin(), srow.begin() + static_cast<std::ptrdiff_t>(d),
                          q.row(r0 + r).begin());
                std::copy(srow.begin() + static_cast<std::ptrdiff_t>(d),
                          srow.begin() + static_cast<std::ptrdiff_t>(2 * d),
                          k.row(r0 + r).begin());
                std::copy(srow.begin() + static_cast<std::ptrdiff_t>(2 * d), srow.end(),
                          v.row(r0 + r).begin());
            }
            r0 += src_m.rows;
        }
        out_per_head[hd] = attention(q, k, v, AttentionMask::none(), d);
        flops += flops_attention(total_rows, total_rows, d);
    }
    sim.advance_compute(id_, flops);

    // Return each party its own row block.
    std::size_t r0 = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::vector<Matrix> block(n_heads);
        for (std::size_t hd = 0; hd < n_heads; ++hd) {
            Matrix m(rows_of[i], d);
            for (std::size_t r = 0; r < rows_of[i]; ++r)
                std::copy(out_per_head[hd].row(r0 + r).begin(),
                          out_per_head[hd].row(r0 + r).end(), m.row(r).begin());
            block[hd] = std::move(m);
        }
        Frame f = make_tensor_frame(MsgType::rerank_out, spec_.request_id, layer, kHeadAll, domain,
                                    block, rr_dtype_);
        sim.send(id_, order[i], f, Phase::rerank);
        r0 += rows_of[i];
    }
    rr_inputs_.erase(it);
}

void FedNode::rr_party_recv(Simulator& sim, const Frame& f) {
    if (!rrp_.active || f.domain != rrp_.domain || f.layer != rrp_.layer)
        throw std::runtime_error("unexpected rerank output");
    if (coord_) sim.count_round(Phase::rerank);
    const ScramblerKeySet& base = theta(rrp_.domain, rrp_.layer, true);
    ScramblerKeySet th = base;
    th.p_q = base.span_perm(0, rrp_.first_pos, rrp_.rows);
    th.p_kv = base.span_perm(1, rrp_.first_pos, rrp_.rows);

    const std::vector<Matrix> o_s = tensors_from_frame(f);
    std::vector<Matrix> heads(rr_.cfg.n_heads);
    for (std::size_t hd = 0; hd < rr_.cfg.n_heads; ++hd)
        heads[hd] = permute_rows_scatter(apply_phi_inv(o_s[hd], th.phi_v[hd]), th.p_q);
    rrp_.h = finish_layer(rr_, rrp_.h, concat_heads(heads), rrp_.layer);
    sim.advance_compute(id_, flops_layer_local(spec_.rr_model, rrp_.rows));
    rrp_.layer += 1;
    if (rrp_.layer < rr_.cfg.n_layers) {
        rr_party_send(sim);
        return;
    }
    rrp_.active = false;
    auto done = std::move(rrp_.done);
    done(sim, rrp_.h);
}

void FedNode::finish_rerank(Simulator& sim) {
    // Final ordering: score desc, then owner, then doc id.
    std::vector<CandidateDoc> ranked = candidates_;
    std::sort(ranked.begin(), ranked.end(), [](const CandidateDoc& a, const CandidateDoc& b) {
        const double sa = a.rerank_score.value_or(0.0), sb = b.rerank_score.value_or(0.0);
        if (sa != sb) return sa > sb;
        if (a.owner != b.owner) return a.owner < b.owner;
        return a.doc_id < b.doc_id;
    });
    result_->reranked = ranked;
    candidates_ = std::move(ranked);
    build_segments_and_plan(sim);
}

// ---------------------------------------------------------------------------
// plan construction and adoption

void FedNode::build_segments_and_plan(Simulator& sim) {
    PlanWire pw;
    std::size_t pos = 0;
    if (!spec_.workload.pinned.empty()) {
        for (std::size_t i = 0; i < spec_.workload.pinned.size(); ++i) {
            const PinnedSegment& p = spec_.workload.pinned[i];
            pw.segmap.segments.push_back({pos, p.length, p.owner});
            pw.pinned.insert(i);
            pos += p.length;
        }
    } else {
        const std::size_t m = std::min(spec_.workload.top_m, candidates_.size());
        for (std::size_t i = 0; i < m; ++i) {
            const CandidateDoc& c = candidates_[i];
            // Document lengths are public shape metadata under the threat
            // model; the coordinator reads them from the request setup to lay
            // out segment positions.
            std::size_t doc_len = 0;
            for (const NodeSetup& n : spec_.nodes)
                for (const TokenDoc& d : n.corpus)
                    if (d.owner == c.owner && d.doc_id == c.doc_id) doc_len = d.tokens.size();
            if (doc_len == 0) throw std::runtime_error("selected doc has no tokens");
            if (!pw.segmap.segments.empty() && pw.segmap.segments.back().owner == c.owner) {
                pw.segmap.segments.back().length += doc_len;
            } else {
                pw.segmap.segments.push_back({pos, doc_len, c.owner});
            }
            pw.seg_docs[pw.segmap.segments.size() - 1].push_back(c.doc_id);
            pos = pw.segmap.segments.back().first_pos + pw.segmap.segments.back().length;
        }
    }
    pw.segmap.segments.push_back({pos, spec_.workload.query.size(), id_});
    pw.segmap.coordinator = id_;
    pw.plan = plan_roles(pw.segmap, spec_.node_ids());

    result_->segmap = pw.segmap;
    result_->plan = pw.plan;

    const Matrix pm = plan_to_matrix(pw);
    for (const NodeSetup& n : spec_.nodes) {
        if (n.id == id_) continue;
        Frame f = make_tensor_frame(MsgType::key_hint, spec_.request_id, 0, kHeadAll, 0,
                                    std::span<const Matrix>(&pm, 1), DtypeCode::f64);
        sim.send(id_, n.id, f, Phase::rerank);
    }
    adopt_plan(pw);
    sim.set_phase(Phase::prefill);
    sequence_prefill(sim, 0);
}

void FedNode::adopt_plan(const PlanWire& pw) {
    segmap_ = pw.segmap;
    plan_ = pw.plan;
    plan_ready_ = true;
    ctx_total_ = 0;
    for (std::size_t i = 0; i + 1 < segmap_.segments.size(); ++i)
        ctx_total_ += segmap_.segments[i].length;
    // Materialize tokens for own segments.
    for (std::size_t i = 0; i < segmap_.segments.size(); ++i) {
        const Segment& s = segmap_.segments[i];
        if (s.owner != id_) continue;
        if (i + 1 == segmap_.segments.size()) {
            seg_tokens_[i] = spec_.workload.query;
        } else if (pw.pinned.count(i)) {
            seg_tokens_[i] = pinned_segment_tokens(spec_.master_seed, spec_.request_id, i, s.length,
                                                   spec_.gen_model.vocab_size);
        } else {
            std::vector<int> toks;
            for (std::uint64_t doc : pw.seg_docs.at(i)) {
                const TokenDoc* d = docs_by_id_.at(doc);
                toks.insert(toks.end(), d->tokens.begin(), d->tokens.end());
            }
            if (toks.size() != s.length) throw std::runtime_error("segment length mismatch");
            seg_tokens_[i] = std::move(toks);
        }
    }
}

// ---------------------------------------------------------------------------
// prefill sequencing (coordinator drives; owners act)

void FedNode::sequence_prefill(Simulator& sim, std::size_t seg_idx) {
    sim.set_phase(Phase::prefill);
    const std::size_t n_ctx = segmap_.segments.size() - 1;
    if (seg_idx >= n_ctx) {
        start_query_prefill(sim);
        return;
    }
    const Segment& s = segmap_.segments[seg_idx];
    if (s.owner == id_) {
        begin_span(sim, seg_idx, seg_idx, seg_tokens_.at(seg_idx), s.first_pos, Phase::prefill,
                   true, [this, seg_idx](Simulator& sm, const Matrix&) {
                       ship_segment_kv(sm, seg_idx);
                       sequence_prefill(sm, seg_idx + 1);
                   });
        return;
    }
    Frame go;
    go.msg_type = MsgType::ctrl;
    go.request_id = spec_.request_id;
    go.layer = kCtrlPrefillGo;
    go.head = static_cast<std::uint16_t>(seg_idx);
    sim.send(id_, s.owner, go, Phase::prefill);
}

void FedNode::start_query_prefill(Simulator& sim) {
    sim.set_phase(Phase::query_prefill);
    const std::size_t q_seg = segmap_.segments.size() - 1;
    const std::vector<int>& q = seg_tokens_.at(q_seg);
    if (q.size() >= 2) {
        const std::vector<int> prefix(q.begin(), q.end() - 1);
        begin_span(sim, q_seg, q_seg, prefix, segmap_.segments[q_seg].first_pos,
                   Phase::query_prefill, true,
                   [this](Simulator& sm, const Matrix&) { start_decode(sm); });
        return;
    }
    start_decode(sim);
}

void FedNode::start_decode(Simulator& sim) {
    sim.set_phase(Phase::decode);
    last_token_t_ = sim.now();
    decode_steps_ = 0;
    decode_step(sim, seg_tokens_.at(segmap_.segments.size() - 1).back());
}

void FedNode::decode_step(Simulator& sim, int input_token) {
    const std::size_t q_seg = segmap_.segments.size() - 1;
    const std::size_t pos = segmap_.segments[q_seg].first_pos +
                            (seg_tokens_.at(q_seg).size() - 1) + decode_steps_;
    const int tok = input_token;
    begin_span(sim, SIZE_MAX, q_seg, std::span<const int>(&tok, 1), pos, Phase::decode, true,
               [this](Simulator& sm, const Matrix& h) {
                   result_->decode_hiddens.emplace_back(h.row(0).begin(), h.row(0).end());
                   const Matrix lg = logits(gen_, h);
                   auto row = lg.row(0);
                   int best = 0;
                   for (std::size_t j = 1; j < row.size(); ++j)
                       if (row[j] > row[best]) best = static_cast<int>(j);
                   answer_.push_back(best);
                   ++decode_steps_;
                   RunMetrics& met = sm.metrics();
                   met.decode_latencies_ns.push_back(sm.now() - last_token_t_);
                   last_token_t_ = sm.now();
                   if (answer_.size() == 1) met.ttft_ns = sm.now();
                   if (best == kTokEos || decode_steps_ >= spec_.workload.max_new) {
                       finish_request(sm);
                       return;
                   }
                   decode_step(sm, best);
               });
}

void FedNode::finish_request(Simulator& sim) {
    (void)sim;
    result_->answer = answer_;
}

// ---------------------------------------------------------------------------
// inquirer span machinery

std::vector<const KVCacheSegment*> FedNode::local_prior_segments() const {
    std::vector<const KVCacheSegment*> out;
    for (const auto& [idx, seg] : own_kv_)
        if (idx < span_.scope || idx + 1 == segmap_.segments.size()) out.push_back(&seg);
    if (span_.seg_idx == SIZE_MAX && gen_kv_.length() > 0) out.push_back(&gen_kv_);
    return out;
}

void FedNode::begin_span(Simulator& sim, std::size_t seg_idx, std::size_t scope,
                         std::span<const int> tokens, std::size_t first_pos, Phase phase,
                         bool causal, std::function<void(Simulator&, const Matrix&)> done) {
    if (span_.active) throw std::runtime_error("span already active");
    span_ = SpanRun{};
    span_.active = true;
    span_.seg_idx = seg_idx;
    span_.scope = scope;
    span_.phase = phase;
    span_.causal = causal;
    span_.first_pos = first_pos;
    span_.h = embed_tokens(gen_, tokens, first_pos);
    span_.layer = 0;
    span_.building.first_pos = first_pos;
    span_.building.owner = id_;
    span_.building.k.resize(gen_.cfg.n_layers);
    span_.building.v.resize(gen_.cfg.n_layers);
    span_.remote = plan_.domains_for(id_, scope);
    span_.done = std::move(done);
    span_send_layer(sim);
}

void FedNode::span_send_layer(Simulator& sim) {
    sim.advance_compute(id_, flops_layer_local(spec_.gen_model, span_.h.rows));
    Matrix x = rms_norm(span_.h, gen_.layers[span_.layer].norm1);
    span_.proj = project_qkv(gen_, x, span_.layer);
    span_.pending.clear();
    if (span_.remote.empty()) {
        span_finish_layer(sim);
        return;
    }
    for (std::uint16_t dom : span_.remote) {
        const ScramblerKeySet& base = theta(dom, span_.layer, false);
        ScramblerKeySet th = base;
        th.p_q = base.span_perm(0, span_.first_pos, span_.h.rows);
        std::vector<Matrix> q_enc(gen_.cfg.n_heads);
        for (std::size_t hd = 0; hd < gen_.cfg.n_heads; ++hd)
            q_enc[hd] = permute_rows_gather(apply_phi(span_.proj.q[hd], th.phi_kq[hd]), th.p_q);
        Frame f = make_tensor_frame(MsgType::scr_q, spec_.request_id, span_.layer,
                                    static_cast<std::uint16_t>(std::min(
                                        span_.scope, static_cast<std::size_t>(kHeadStats - 1))),
                                    dom, q_enc, gen_dtype_);
        sim.send(id_, plan_.compute_of(dom), f, span_.phase);
        span_.pending[dom] = ShardResp{};
    }
}

void FedNode::on_shard_piece(Simulator& sim, const Frame& f) {
    if (!span_.active || f.layer != span_.layer) throw std::runtime_error("unexpected shard piece");
    auto it = span_.pending.find(f.domain);
    if (it == span_.pending.end()) throw std::runtime_error("shard piece for unknown domain");
    ShardResp& resp = it->second;
    if (f.head == kHeadAll) {
        resp.o = tensors_from_frame(f);
        resp.have_o = true;
    } else if (f.head == kHeadStats) {
        resp.stats = tensors_from_frame(f);
        resp.have_stats = true;
    } else {
        throw std::runtime_error("bad shard subchannel");
    }
    if (resp.complete()) sim.count_round(span_.phase);
    for (const auto& [dom, r] : span_.pending)
        if (!r.complete()) return;
    span_finish_layer(sim);
}

void FedNode::span_finish_layer(Simulator& sim) {
    const std::size_t d = gen_.cfg.head_dim;
    std::vector<Matrix> head_out(gen_.cfg.n_heads);
    const std::vector<const KVCacheSegment*> locals = local_prior_segments();
    const bool sabotage = spec_.sabotage_dec && span_.phase == Phase::decode;
    for (std::size_t hd = 0; hd < gen_.cfg.n_heads; ++hd) {
        std::vector<AttentionShard> shards;
        for (const auto& [dom, resp] : span_.pending) {
            ScramblerKeySet th = sabotage ? sabotaged_theta(dom, span_.layer)
                                          : theta(dom, span_.layer, false);
            th.p_q = th.span_perm(0, span_.first_pos, span_.h.rows);
            ShardStats stats;
            stats.row_max.resize(span_.h.rows);
            stats.exp_sum.resize(span_.h.rows);
            for (std::size_t r = 0; r < span_.h.rows; ++r) {
                stats.row_max[r] = resp.stats[hd].at(r, 0);
                stats.exp_sum[r] = resp.stats[hd].at(r, 1);
            }
            shards.push_back(dec_output(resp.o[hd], stats, th, hd));
        }
        for (const KVCacheSegment* seg : locals)
            shards.push_back(shard_attention(span_.proj.q[hd], seg->k[span_.layer][hd],
                                             seg->v[span_.layer][hd], AttentionMask::none(), d));
        shards.push_back(shard_attention(span_.proj.q[hd], span_.proj.k[hd], span_.proj.v[hd],
                                         span_.causal ? AttentionMask::causal(0)
                                                      : AttentionMask::none(),
                                         d));
        head_out[hd] = merge_shards(shards);
    }
    span_.h = finish_layer(gen_, span_.h, concat_heads(head_out), span_.layer);
    sim.advance_compute(id_, flops_layer_local(spec_.gen_model, span_.h.rows));
    span_.building.k[span_.layer] = std::move(span_.proj.k);
    span_.building.v[span_.layer] = std::move(span_.proj.v);
    span_.layer += 1;
    if (span_.layer < gen_.cfg.n_layers) {
        span_send_layer(sim);
        return;
    }
    // Span complete: stash the cache segment and continue.
    span_.active = false;
    if (span_.seg_idx == SIZE_MAX) {
        if (gen_kv_.length() == 0) {
            gen_kv_ = std::move(span_.building);
        } else {
            for (std::size_t l = 0; l < gen_.cfg.n_layers; ++l)
                for (std::size_t hd = 0; hd < gen_.cfg.n_heads; ++hd) {
                    Matrix& k = gen_kv_.k[l][hd];
                    Matrix& v = gen_kv_.v[l][hd];
                    k.data.insert(k.data.end(), span_.building.k[l][hd].data.begin(),
                                  span_.building.k[l][hd].data.end());
                    v.data.insert(v.data.end(), span_.building.v[l][hd].data.begin(),
                                  span_.building.v[l][hd].data.end());
                    k.rows += span_.building.k[l][hd].rows;
                    v.rows += span_.building.v[l][hd].rows;
                }
        }
    } else {
        own_kv_[span_.seg_idx] = std::move(span_.building);
    }
    auto done = std::move(span_.done);
    done(sim, span_.h);
}

// ---------------------------------------------------------------------------
// context owner: scrambled KV shipping

void FedNode::ship_segment_kv(Simulator& sim, std::size_t seg_idx) {
    const KVCacheSegment& seg = own_kv_.at(seg_idx);
    const Segment& s = segmap_.segments[seg_idx];
    for (const DomainPlan& dom : plan_.domains) {
        if (!dom.holds(seg_idx)) continue;
        for (std::uint32_t l = 0; l < gen_.cfg.n_layers; ++l) {
            const ScramblerKeySet& base = theta(dom.id, l, false);
            ScramblerKeySet th = base;
            th.p_kv = base.span_perm(1, s.first_pos, s.length);
            std::vector<Matrix> packed(gen_.cfg.n_heads);
            for (std::size_t hd = 0; hd < gen_.cfg.n_heads; ++hd) {
                const Matrix k_s =
                    permute_rows_gather(apply_phi_inv_t(seg.k[l][hd], th.phi_kq[hd]), th.p_kv);
                const Matrix v_s =
                    permute_rows_gather(apply_phi(seg.v[l][hd], th.phi_v[hd]), th.p_kv);
                Matrix m(s.length, 2 * gen_.cfg.head_dim);
                for (std::size_t r = 0; r < s.length; ++r) {
                    std::copy(k_s.row(r).begin(), k_s.row(r).end(), m.row(r).begin());
                    std::copy(v_s.row(r).begin(), v_s.row(r).end(),
                              m.row(r).begin() + static_cast<std::ptrdiff_t>(gen_.cfg.head_dim));
                }
                packed[hd] = std::move(m);
            }
            Frame f = make_tensor_frame(MsgType::scr_kv, spec_.request_id, l,
                                        static_cast<std::uint16_t>(seg_idx), dom.id, packed,
                                        gen_dtype_);
            sim.send(id_, dom.compute_node, f, sim.phase());
        }
    }
}

// ---------------------------------------------------------------------------
// compute node

void FedNode::on_scr_kv(Simulator& sim, const Frame& f) {
    const std::vector<Matrix> packed = tensors_from_frame(f);
    DomainStore& st = store_[f.domain];
    const std::size_t d = packed[0].cols / 2;
    std::vector<Matrix>& ks = st.k[f.head][f.layer];
    std::vector<Matrix>& vs = st.v[f.head][f.layer];
    ks.clear();
    vs.clear();
    for (const Matrix& m : packed) {
        Matrix k(m.rows, d), v(m.rows, d);
        for (std::size_t r = 0; r < m.rows; ++r) {
            auto src = m.row(r);
            std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(d), k.row(r).begin());
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(d), src.end(), v.row(r).begin());
        }
        ks.push_back(std::move(k));
        vs.push_back(std::move(v));
    }
    drain_backlog(sim);
}

void FedNode::drain_backlog(Simulator& sim) {
    for (std::size_t i = 0; i < q_backlog_.size();) {
        auto [src, qf] = q_backlog_[i];
        if (try_serve_q(sim, src, qf)) {
            q_backlog_.erase(q_backlog_.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
}

bool FedNode::try_serve_q(Simulator& sim, int src, const Frame& f) {
    if (!plan_ready_) return false;
    const std::size_t scope = f.head;
    std::vector<std::size_t> segs;
    for (const auto& [key, dom] : plan_.route)
        if (key.first == src && dom == f.domain && key.second < scope) segs.push_back(key.second);
    std::sort(segs.begin(), segs.end());
    if (segs.empty()) throw std::runtime_error("scr_q with empty scope");
    DomainStore& st = store_[f.domain];
    for (std::size_t seg : segs) {
        auto it = st.k.find(seg);
        if (it == st.k.end() || !it->second.count(f.layer)) return false;
    }
    const std::vector<Matrix> q_enc = tensors_from_frame(f);
    const std::size_t n_heads = q_enc.size();
    const std::size_t d = q_enc[0].cols;
    const std::size_t lq = q_enc[0].rows;
    std::vector<Matrix> o_out(n_heads), stat_out(n_heads);
    double flops = 0.0;
    for (std::size_t hd = 0; hd < n_heads; ++hd) {
        std::size_t lk = 0;
        for (std::size_t seg : segs) lk += st.k[seg][f.layer][hd].rows;
        Matrix k(lk, d), v(lk, d);
        std::size_t r0 = 0;
        for (std::size_t seg : segs) {
            const Matrix& ks = st.k[seg][f.layer][hd];
            const Matrix& vs = st.v[seg][f.layer][hd];
            std::copy(ks.data.begin(), ks.data.end(),
                      k.data.begin() + static_cast<std::ptrdiff_t>(r0 * d));
            std::copy(vs.data.begin(), vs.data.end(),
                      v.data.begin() + static_cast<std::ptrdiff_t>(r0 * d));
            r0 += ks.rows;
        }
        AttentionShard shard = shard_attention(q_enc[hd], k, v, AttentionMask::none(), d);
        flops += flops_attention(lq, lk, d);
        o_out[hd] = std::move(shard.output);
        Matrix stats(lq, 2);
        for (std::size_t r = 0; r < lq; ++r) {
            stats.at(r, 0) = shard.stats.row_max[r];
            stats.at(r, 1) = shard.stats.exp_sum[r];
        }
        stat_out[hd] = std::move(stats);
    }
    sim.advance_compute(id_, flops);
    Frame fo = make_tensor_frame(MsgType::scr_shard, spec_.request_id, f.layer, kHeadAll, f.domain,
                                 o_out, gen_dtype_);
    Frame fs = make_tensor_frame(MsgType::scr_shard, spec_.request_id, f.layer, kHeadStats,
                                 f.domain, stat_out, stats_dtype_);
    sim.send(id_, src, fo, sim.phase());
    sim.send(id_, src, fs, sim.phase());
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_request + audits + predictions

RequestResult run_request(const RequestSpec& spec, const NetConfig& net) {
    if (spec.nodes.size() < 3)
        throw std::invalid_argument("run_request: at least three nodes required");
    spec.gen_model.validate();
    spec.rr_model.validate();
    if (spec.workload.query.empty()) throw std::invalid_argument("run_request: empty query");

    RequestResult result;
    KeyLedger ledger;
    Simulator sim(net);
    std::vector<std::unique_ptr<FedNode>> nodes;
    for (const NodeSetup& n : spec.nodes)
        nodes.push_back(std::make_unique<FedNode>(spec, n.id, &ledger, &result));
    for (std::size_t i = 0; i < nodes.size(); ++i) sim.add_node(spec.nodes[i].id, nodes[i].get());

    for (auto& n : nodes) n->start_request(sim);
    sim.run();

    result.metrics = sim.metrics();
    result.trace = sim.trace();
    result.ledger = ledger;
    // Harness-side oracle material: concatenate every segment's tokens.
    for (std::size_t i = 0; i < result.segmap.segments.size(); ++i) {
        bool found = false;
        for (auto& n : nodes) {
            auto it = n->seg_tokens().find(i);
            if (it != n->seg_tokens().end()) {
                result.full_input_tokens.insert(result.full_input_tokens.end(), it->second.begin(),
                                                it->second.end());
                found = true;
                break;
            }
        }
        if (!found) throw std::runtime_error("segment tokens missing after run");
    }
    return result;
}

std::vector<std::string> audit_role_safety(const RequestResult& result) {
    std::vector<std::string> bad = audit_plan(result.plan, result.segmap);
    for (const DomainPlan& d : result.plan.domains)
        for (const auto& [node, dom] : result.ledger.holders)
            if (dom == d.id && node == d.compute_node)
                bad.push_back("compute node " + std::to_string(node) + " held keys for domain " +
                              std::to_string(dom));
    for (const RerankTask& t : result.rerank_tasks) {
        if (result.ledger.holds(t.compute_node, t.domain))
            bad.push_back("rerank compute node held the pair key set");
        if (t.compute_node == t.owner || t.compute_node == result.plan.coordinator)
            bad.push_back("rerank compute node is a party");
    }
    return bad;
}

std::vector<std::string> audit_plaintext_isolation(const RequestResult& result) {
    std::vector<std::string> bad;
    std::set<int> compute_nodes;
    for (const DomainPlan& d : result.plan.domains) compute_nodes.insert(d.compute_node);
    std::map<std::uint16_t, int> rerank_compute;
    for (const RerankTask& t : result.rerank_tasks) {
        compute_nodes.insert(t.compute_node);
        rerank_compute[t.domain] = t.compute_node;
    }
    for (const TraceEntry& e : result.trace) {
        const Frame f = decode_frame(e.bytes);
        switch (f.msg_type) {
            case MsgType::scr_q:
            case MsgType::scr_kv:
                if (f.domain == 0) bad.push_back("scrambled tensor without a domain");
                if (result.plan.compute_of(f.domain) != e.dst)
                    bad.push_back("scrambled tensor sent to a non-compute destination");
                break;
            case MsgType::rerank_in:
                if (!rerank_compute.count(f.domain) || rerank_compute[f.domain] != e.dst)
                    bad.push_back("rerank input sent to a non-compute destination");
                break;
            case MsgType::scr_shard:
            case MsgType::rerank_out:
                if (e.src != (f.msg_type == MsgType::scr_shard
                                  ? result.plan.compute_of(f.domain)
                                  : rerank_compute[f.domain]))
                    bad.push_back("shard result from unexpected source");
                break;
            case MsgType::retr_req:
            case MsgType::retr_resp:
            case MsgType::key_hint:
            case MsgType::ctrl:
                // No Q/K/V or hidden-state payloads ride these types; the
                // codec has no frame type that could carry plaintext tensors
                // to a compute node.
                break;
        }
    }
    return bad;
}

namespace {

std::uint64_t frame_bytes(std::size_t ndims, std::uint64_t count, DtypeCode dtype) {
    std::uint64_t payload = 0;
    switch (dtype) {
        case DtypeCode::f64: payload = count * 8; break;
        case DtypeCode::f32: payload = count * 4; break;
        case DtypeCode::bf16:
        case DtypeCode::f16: payload = count * 2; break;
        default: payload = (count * static_cast<std::uint64_t>(quant_bits(dtype)) + 7) / 8 + 8;
    }
    return 29 + 4 * ndims + payload;
}

}  // namespace

CommPrediction predict_comm(const RequestSpec& spec, const RequestResult& result) {
    CommPrediction p;
    const int coord = spec.coordinator_id();
    const std::size_t n_nodes = spec.nodes.size();
    const ModelConfig& gm = spec.gen_model;
    const ModelConfig& rm = spec.rr_model;
    const DtypeCode gen_dtype = spec.scrambler.gen_quant_bits
                                    ? quant_dtype(*spec.scrambler.gen_quant_bits)
                                    : dtype_from_format(spec.scrambler.wire);
    const DtypeCode rr_dtype = spec.scrambler.rerank_quant_bits
                                   ? quant_dtype(*spec.scrambler.rerank_quant_bits)
                                   : dtype_from_format(spec.scrambler.wire);
    const DtypeCode stats_dtype = is_quant(gen_dtype) ? DtypeCode::f32 : gen_dtype;

    // Retrieval: one REQ per non-coordinator node and one RESP each.
    p.rounds_retrieval = n_nodes - 1;
    std::uint64_t t_retr = 0;
    for (const NodeSetup& n : spec.nodes) {
        if (n.id == coord) continue;
        t_retr += frame_bytes(3, spec.embed_dim, DtypeCode::f64);
        const std::size_t k = std::min<std::size_t>(std::max<std::size_t>(spec.workload.top_k, 1),
                                                    n.corpus.size());
        t_retr += frame_bytes(3, k * 2, DtypeCode::f64);
    }
    p.traffic_by_phase[Phase::retrieval] = t_retr;

    // Rerank: per remote pair, per layer: two inputs and two outputs, plus a
    // one-row task announce per pair; plus the plan broadcast at the end of
    // the phase.
    std::uint64_t t_rr = 0;
    for (const RerankTask& t : result.rerank_tasks) {
        std::size_t doc_len = 0;
        for (const NodeSetup& n : spec.nodes)
            for (const TokenDoc& d : n.corpus)
                if (d.owner == t.owner && d.doc_id == t.doc_id) doc_len = d.tokens.size();
        const std::size_t lc = spec.workload.query.size() + 2;
        const std::size_t lo = doc_len + 1;
        t_rr += frame_bytes(3, 6, DtypeCode::f64);  // announce
        t_rr += rm.n_layers * (frame_bytes(3, rm.n_heads * lc * 3 * rm.head_dim, rr_dtype) +
                               frame_bytes(3, rm.n_heads * lo * 3 * rm.head_dim, rr_dtype) +
                               frame_bytes(3, rm.n_heads * lc * rm.head_dim, rr_dtype) +
                               frame_bytes(3, rm.n_heads * lo * rm.head_dim, rr_dtype));
        p.rounds_rerank += rm.n_layers;
    }
    // Plan broadcast (sent while the phase is still rerank).
    std::uint64_t plan_rows = 1 + result.segmap.segments.size();
    for (const DomainPlan& d : result.plan.domains) plan_rows += 1 + d.segments.size();
    plan_rows += result.plan.route.size();
    if (!spec.workload.pinned.empty()) {
        plan_rows += spec.workload.pinned.size();
    } else {
        plan_rows += std::min(spec.workload.top_m, result.reranked.size());
    }
    t_rr += (n_nodes - 1) * frame_bytes(3, plan_rows * 6, DtypeCode::f64);
    p.traffic_by_phase[Phase::rerank] = t_rr;

    // Prefill of context segments.
    std::uint64_t t_pref = 0;
    const std::size_t n_ctx = result.segmap.segments.size() - 1;
    for (std::size_t i = 0; i < n_ctx; ++i) {
        const Segment& s = result.segmap.segments[i];
        const auto domains = result.plan.domains_for(s.owner, i);
        p.rounds_prefill += gm.n_layers * domains.size();
        for (std::uint16_t dom : domains) {
            (void)dom;
            t_pref += gm.n_layers *
                      (frame_bytes(3, gm.n_heads * s.length * gm.head_dim, gen_dtype) +
                       frame_bytes(3, gm.n_heads * s.length * gm.head_dim, gen_dtype) +
                       frame_bytes(3, gm.n_heads * s.length * 2, stats_dtype));
        }
        for (const DomainPlan& d : result.plan.domains)
            if (d.holds(i))
                t_pref += gm.n_layers *
                          frame_bytes(3, gm.n_heads * s.length * 2 * gm.head_dim, gen_dtype);
        if (s.owner != coord) t_pref += 2 * frame_bytes(0, 0, DtypeCode::f64);  // go/done ctrl
    }
    p.traffic_by_phase[Phase::prefill] = t_pref;

    // Query prefill.
    std::uint64_t t_qpref = 0;
    const std::size_t lq = spec.workload.query.size();
    const auto coord_domains = result.plan.coordinator_domains(result.segmap);
    if (lq >= 2) {
        const std::size_t rows = lq - 1;
        p.rounds_query_prefill = gm.n_layers * coord_domains.size();
        t_qpref = gm.n_layers * coord_domains.size() *
                  (frame_bytes(3, gm.n_heads * rows * gm.head_dim, gen_dtype) +
                   frame_bytes(3, gm.n_heads * rows * gm.head_dim, gen_dtype) +
                   frame_bytes(3, gm.n_heads * rows * 2, stats_dtype));
    }
    p.traffic_by_phase[Phase::query_prefill] = t_qpref;

    // Decode: every answer token is one decode step.
    const std::uint64_t steps = result.answer.size();
    p.rounds_decode = steps * gm.n_layers * coord_domains.size();
    const std::uint64_t t_dec =
        steps * gm.n_layers * coord_domains.size() *
        (frame_bytes(3, gm.n_heads * gm.head_dim, gen_dtype) +
         frame_bytes(3, gm.n_heads * gm.head_dim, gen_dtype) +
         frame_bytes(3, gm.n_heads * 2, stats_dtype));
    p.traffic_by_phase[Phase::decode] = t_dec;

    p.traffic_bytes_total = t_retr + t_rr + t_pref + t_qpref + t_dec;
    return p;
}

}  // namespace sdattn::fed
