#include "sdattn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdattn/rng.hpp"

namespace sdattn {

namespace {

using nlohmann::json;

template <typename T>
T field_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for field: " + key);
    }
}

ModelConfig parse_model(const json& j, const std::string& scope, Arch arch) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.vocab_size = field_or<std::size_t>(j, "vocab", 64);
    cfg.d_model = field_or<std::size_t>(j, "d_model", 64);
    cfg.n_heads = field_or<std::size_t>(j, "n_heads", 4);
    cfg.head_dim = field_or<std::size_t>(j, "head_dim", 16);
    cfg.n_layers = field_or<std::size_t>(j, "layers", 2);
    cfg.ffn_mult = field_or<double>(j, "ffn_mult", 4.0);
    cfg.pos_embedding = field_or<bool>(j, "pos_embedding", arch == Arch::encoder);
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(scope + ": " + e.what());
    }
    return cfg;
}

SimTime ms_to_ns(double ms) { return static_cast<SimTime>(ms * 1e6); }

std::vector<int> synth_tokens(std::uint64_t seed, std::size_t len, std::size_t vocab) {
    RngStream rng(seed);
    std::vector<int> out(len);
    for (auto& t : out) t = 4 + static_cast<int>(rng.next_below(vocab - 4));
    return out;
}

}  // namespace

void apply_preset(RunConfig& cfg, const std::string& name) {
    std::size_t ctx_per_node = 0, query = 0, output = 0;
    if (name == "short") {
        ctx_per_node = 256;
        query = 32;
        output = 32;
    } else if (name == "medium") {
        ctx_per_node = 1024;
        query = 64;
        output = 64;
    } else if (name == "long") {
        ctx_per_node = 4096;
        query = 128;
        output = 128;
    } else {
        throw ConfigError("workload.preset: unknown preset '" + name + "'");
    }
    cfg.preset = name;
    fed::RequestSpec& req = cfg.request;
    if (req.nodes.empty()) {
        req.nodes.push_back({0, true, {}});
        req.nodes.push_back({1, false, {}});
        req.nodes.push_back({2, false, {}});
    }
    if (req.nodes.size() < 3) throw ConfigError("nodes: presets need at least three nodes");
    const int coord = req.coordinator_id();
    std::vector<int> owners;
    for (const fed::NodeSetup& n : req.nodes)
        if (n.id != coord && owners.size() < 2) owners.push_back(n.id);

    req.workload.pinned = {{owners[0], ctx_per_node}, {owners[1], ctx_per_node}};
    req.workload.query = synth_tokens(derive_seed(cfg.seed, {0x71757279ull}), query,
                                      req.gen_model.vocab_size);
    req.workload.max_new = output;
    req.workload.top_k = 10;
    req.workload.top_m = 4;
    // Ten 64-token rerank candidates, five per context owner.
    for (fed::NodeSetup& n : req.nodes) {
        n.corpus.clear();
        if (n.id == coord) continue;
        const bool is_owner =
            std::find(owners.begin(), owners.end(), n.id) != owners.end();
        if (!is_owner) continue;
        for (std::size_t d = 0; d < 5; ++d) {
            TokenDoc doc;
            doc.doc_id = static_cast<std::uint64_t>(n.id) * 1000 + d;
            doc.owner = n.id;
            doc.tokens = synth_tokens(derive_seed(cfg.seed, {0x646F63ull,
                                                             static_cast<std::uint64_t>(n.id), d}),
                                      64, req.gen_model.vocab_size);
            n.corpus.push_back(std::move(doc));
        }
    }
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    cfg.seed = field_or<std::uint64_t>(j, "seed", 1);
    cfg.out_dir = field_or<std::string>(j, "out_dir", "out");
    cfg.request.master_seed = cfg.seed;
    cfg.request.request_id = field_or<std::uint64_t>(j, "request_id", 1);

    cfg.request.gen_model = parse_model(j.value("model", json::object()), "model", Arch::decoder);
    cfg.request.gen_model.seed = derive_seed(cfg.seed, {0x67656Ell});
    cfg.request.rr_model =
        parse_model(j.value("reranker", json::object()), "reranker", Arch::encoder);
    cfg.request.rr_model.seed = derive_seed(cfg.seed, {0x7272ull});

    if (j.contains("scrambler")) {
        const json& s = j.at("scrambler");
        cfg.request.scrambler.mag_lo = field_or<double>(s, "mag_lo", 0.125);
        cfg.request.scrambler.mag_hi = field_or<double>(s, "mag_hi", 8.0);
        if (cfg.request.scrambler.mag_lo <= 0.0 ||
            cfg.request.scrambler.mag_hi < cfg.request.scrambler.mag_lo)
            throw ConfigError("scrambler.mag_lo/mag_hi: need 0 < lo <= hi");
        const std::string mode = field_or<std::string>(s, "mode", "s1s2");
        if (mode == "s1s2") {
            cfg.request.scrambler.mode = ScramblerMode::s1_and_s2;
        } else if (mode == "s1_only") {
            cfg.request.scrambler.mode = ScramblerMode::s1_only;
        } else {
            throw ConfigError("scrambler.mode: expected 's1s2' or 's1_only'");
        }
        try {
            cfg.request.scrambler.wire =
                float_format_from_string(field_or<std::string>(s, "wire", "bf16"));
        } catch (const std::exception&) {
            throw ConfigError("scrambler.wire: expected one of f64/f32/bf16/f16");
        }
        if (s.contains("gen_quant_bits") && !s.at("gen_quant_bits").is_null())
            cfg.request.scrambler.gen_quant_bits = s.at("gen_quant_bits").get<int>();
        if (s.contains("rerank_quant_bits") && !s.at("rerank_quant_bits").is_null())
            cfg.request.scrambler.rerank_quant_bits = s.at("rerank_quant_bits").get<int>();
    }

    if (j.contains("nodes")) {
        int coordinators = 0;
        for (const json& n : j.at("nodes")) {
            fed::NodeSetup setup;
            if (!n.contains("id")) throw ConfigError("nodes[].id: required");
            setup.id = n.at("id").get<int>();
            setup.coordinator = field_or<bool>(n, "coordinator", false);
            coordinators += setup.coordinator ? 1 : 0;
            cfg.request.nodes.push_back(std::move(setup));
        }
        if (coordinators != 1) throw ConfigError("nodes: exactly one coordinator required");
    } else {
        cfg.request.nodes = {{0, true, {}}, {1, false, {}}, {2, false, {}}};
    }

    if (j.contains("links")) {
        const json& l = j.at("links");
        cfg.net.default_link.latency_ns = ms_to_ns(field_or<double>(l, "latency_ms", 0.5));
        if (l.contains("bandwidth_gbps") && !l.at("bandwidth_gbps").is_null()) {
            const double g = l.at("bandwidth_gbps").get<double>();
            if (g <= 0.0) throw ConfigError("links.bandwidth_gbps: must be > 0");
            cfg.net.default_link.bandwidth_bps = static_cast<std::uint64_t>(g * 1e9);
        }
        for (const json& o : l.value("overrides", json::array())) {
            if (!o.contains("src") || !o.contains("dst"))
                throw ConfigError("links.overrides[]: src and dst required");
            LinkConfig lc = cfg.net.default_link;
            if (o.contains("latency_ms")) lc.latency_ns = ms_to_ns(o.at("latency_ms").get<double>());
            if (o.contains("bandwidth_gbps"))
                lc.bandwidth_bps =
                    static_cast<std::uint64_t>(o.at("bandwidth_gbps").get<double>() * 1e9);
            cfg.net.link_overrides[{o.at("src").get<int>(), o.at("dst").get<int>()}] = lc;
        }
    }
    for (const json& c : j.value("compute_models", json::array())) {
        ComputeModel cm;
        cm.c0_ns = field_or<double>(c, "c0_ns", 0.0);
        cm.c1_ns_per_flop = field_or<double>(c, "c1_ns_per_flop", 0.0);
        cfg.net.compute[c.at("node").get<int>()] = cm;
    }

    const json w = j.value("workload", json::object());
    if (w.contains("preset") && !w.at("preset").is_null()) {
        apply_preset(cfg, w.at("preset").get<std::string>());
    } else {
        const auto query_len = field_or<std::size_t>(w, "query_len", 32);
        if (query_len == 0) throw ConfigError("workload.query_len: must be positive");
        cfg.request.workload.query =
            synth_tokens(derive_seed(cfg.seed, {0x71757279ull}), query_len,
                         cfg.request.gen_model.vocab_size);
        cfg.request.workload.max_new = field_or<std::size_t>(w, "max_new", 32);
        if (cfg.request.workload.max_new == 0)
            throw ConfigError("workload.max_new: must be positive");
        cfg.request.workload.top_k = field_or<std::size_t>(w, "k", 10);
        cfg.request.workload.top_m = field_or<std::size_t>(w, "m", 4);
        if (cfg.request.workload.top_m >= cfg.request.workload.top_k)
            throw ConfigError("workload.m: must be smaller than workload.k");
        for (const json& d : w.value("docs", json::array())) {
            if (!d.contains("node")) throw ConfigError("workload.docs[].node: required");
            const int node = d.at("node").get<int>();
            fed::NodeSetup* setup = nullptr;
            for (fed::NodeSetup& n : cfg.request.nodes)
                if (n.id == node) setup = &n;
            if (!setup)
                throw ConfigError("workload.docs[].node: unknown node id " +
                                  std::to_string(node));
            const auto count = field_or<std::size_t>(d, "count", 1);
            const auto len = field_or<std::size_t>(d, "len", 64);
            if (len == 0) throw ConfigError("workload.docs[].len: must be positive");
            for (std::size_t i = 0; i < count; ++i) {
                TokenDoc doc;
                doc.doc_id = static_cast<std::uint64_t>(node) * 1000 + setup->corpus.size();
                doc.owner = node;
                doc.tokens = synth_tokens(
                    derive_seed(cfg.seed, {0x646F63ull, static_cast<std::uint64_t>(node),
                                           setup->corpus.size()}),
                    len, cfg.request.gen_model.vocab_size);
                setup->corpus.push_back(std::move(doc));
            }
        }
        for (const json& p : w.value("pinned", json::array())) {
            if (!p.contains("node")) throw ConfigError("workload.pinned[].node: required");
            const int node = p.at("node").get<int>();
            bool known = false;
            for (const fed::NodeSetup& n : cfg.request.nodes) known |= n.id == node;
            if (!known)
                throw ConfigError("workload.pinned[].node: unknown node id " +
                                  std::to_string(node));
            const auto len = field_or<std::size_t>(p, "len", 0);
            if (len == 0) throw ConfigError("workload.pinned[].len: must be positive");
            cfg.request.workload.pinned.push_back({node, len});
        }
    }

    if (j.contains("probes")) {
        const json& p = j.at("probes");
        cfg.probes.lengths = field_or<std::vector<std::size_t>>(p, "lengths", cfg.probes.lengths);
        cfg.probes.k = field_or<std::size_t>(p, "k", cfg.probes.k);
        cfg.probes.dim = field_or<std::size_t>(p, "dim", cfg.probes.dim);
        cfg.probes.anisotropy_decay = field_or<double>(p, "decay", cfg.probes.anisotropy_decay);
        cfg.probes.seeds = field_or<std::size_t>(p, "seeds", cfg.probes.seeds);
        cfg.probes.ica_rows = field_or<std::size_t>(p, "ica_rows", cfg.probes.ica_rows);
    }
    if (j.contains("quant")) {
        const json& q = j.at("quant");
        cfg.quant.bits = field_or<std::vector<int>>(q, "bits", cfg.quant.bits);
        cfg.quant.seeds = field_or<std::size_t>(q, "seeds", cfg.quant.seeds);
        cfg.quant.docs = field_or<std::size_t>(q, "docs", cfg.quant.docs);
        cfg.quant.ablation_bits = field_or<int>(q, "ablation_bits", cfg.quant.ablation_bits);
    }
    if (j.contains("stability")) {
        const json& s = j.at("stability");
        cfg.stability.seq = field_or<std::vector<std::size_t>>(s, "seq", cfg.stability.seq);
        cfg.stability.head_dim = field_or<std::size_t>(s, "head_dim", cfg.stability.head_dim);
        cfg.stability.seeds = field_or<std::size_t>(s, "seeds", cfg.stability.seeds);
    }

    if (field_or<bool>(j, "sabotage_dec", false)) cfg.request.sabotage_dec = true;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::uint64_t config_fingerprint(const std::string& json_text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : json_text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace sdattn
