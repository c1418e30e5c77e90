#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sdattn/config.hpp"

using namespace sdattn;

TEST_CASE("defaults parse from an empty object") {
    const RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.seed == 1);
    CHECK(cfg.request.nodes.size() == 3);
    CHECK(cfg.request.coordinator_id() == 0);
    CHECK(cfg.request.workload.query.size() == 32);
    CHECK(cfg.request.scrambler.wire == FloatFormat::bf16);
}

TEST_CASE("presets pin the fixed-length layout") {
    const RunConfig cfg = parse_run_config(R"({"workload": {"preset": "short"}})");
    CHECK(cfg.preset == "short");
    REQUIRE(cfg.request.workload.pinned.size() == 2);
    CHECK(cfg.request.workload.pinned[0].length == 256);
    CHECK(cfg.request.workload.pinned[1].length == 256);
    CHECK(cfg.request.workload.query.size() == 32);
    CHECK(cfg.request.workload.max_new == 32);
    // Ten rerank candidates, five per context owner.
    std::size_t docs = 0;
    for (const auto& n : cfg.request.nodes) docs += n.corpus.size();
    CHECK(docs == 10);

    const RunConfig med = parse_run_config(R"({"workload": {"preset": "medium"}})");
    CHECK(med.request.workload.pinned[0].length == 1024);
    CHECK(med.request.workload.query.size() == 64);

    CHECK_THROWS_AS(parse_run_config(R"({"workload": {"preset": "tiny"}})"), ConfigError);
}

TEST_CASE("validation errors name the offending field") {
    auto msg_of = [](const std::string& text) {
        try {
            parse_run_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg_of(R"({"workload": {"docs": [{"node": 7}]}})").find("workload.docs[].node") !=
          std::string::npos);
    CHECK(msg_of(R"({"workload": {"docs": [{"node": 7}]}})").find("7") != std::string::npos);
    CHECK(msg_of(R"({"nodes": [{"id": 0}, {"id": 1}]})").find("coordinator") !=
          std::string::npos);
    CHECK(msg_of(R"({"workload": {"query_len": 0}})").find("workload.query_len") !=
          std::string::npos);
    CHECK(msg_of(R"({"workload": {"k": 4, "m": 4}})").find("workload.m") != std::string::npos);
    CHECK(msg_of(R"({"scrambler": {"mode": "zzz"}})").find("scrambler.mode") !=
          std::string::npos);
    CHECK(msg_of(R"({"model": {"d_model": 60}})").find("model") != std::string::npos);
    CHECK(msg_of("not json").find("JSON") != std::string::npos);
}

TEST_CASE("link configuration") {
    const RunConfig cfg = parse_run_config(R"({
        "links": {"latency_ms": 1.5, "bandwidth_gbps": 10.0,
                  "overrides": [{"src": 0, "dst": 1, "latency_ms": 3.0}]}
    })");
    CHECK(cfg.net.default_link.latency_ns == 1500000);
    CHECK(*cfg.net.default_link.bandwidth_bps == 10000000000ull);
    CHECK(cfg.net.link(0, 1).latency_ns == 3000000);
    CHECK(cfg.net.link(1, 0).latency_ns == 1500000);
}

TEST_CASE("same text parses to the same derived workload") {
    const std::string text = R"({"seed": 9, "workload": {"query_len": 12}})";
    const RunConfig a = parse_run_config(text);
    const RunConfig b = parse_run_config(text);
    CHECK(a.request.workload.query == b.request.workload.query);
    CHECK(config_fingerprint(text) == config_fingerprint(text));
    CHECK(config_fingerprint(text) != config_fingerprint(text + " "));
}

TEST_CASE("quant and probe parameter blocks") {
    const RunConfig cfg = parse_run_config(R"({
        "probes": {"lengths": [64, 128], "k": 5, "seeds": 2},
        "quant": {"bits": [8, 2], "seeds": 4},
        "stability": {"seq": [64], "head_dim": 32}
    })");
    CHECK(cfg.probes.lengths == std::vector<std::size_t>{64, 128});
    CHECK(cfg.probes.k == 5);
    CHECK(cfg.quant.bits == std::vector<int>{8, 2});
    CHECK(cfg.stability.seq == std::vector<std::size_t>{64});
    CHECK(cfg.stability.head_dim == 32);
}
