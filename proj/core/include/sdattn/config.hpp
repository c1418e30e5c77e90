#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdattn/netsim.hpp"
#include "sdattn/protocol.hpp"

namespace sdattn {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProbeParams {
    std::vector<std::size_t> lengths{256, 1024, 4096};
    std::size_t k = 10;
    std::size_t dim = 64;
    double anisotropy_decay = 1.2;
    std::size_t seeds = 3;
    std::size_t ica_rows = 4000;
};

struct QuantParams {
    std::vector<int> bits{8, 4, 3, 2};
    std::size_t seeds = 20;
    std::size_t docs = 10;
    int ablation_bits = 8;
};

struct StabilityParams {
    std::vector<std::size_t> seq{128, 512, 2048};
    std::size_t head_dim = 128;
    std::size_t seeds = 5;
};

/// Everything one experiment invocation needs: topology, models, scrambler,
/// workload and the per-command parameter blocks. Loaded from a single JSON
/// file; validation failures name the offending field.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string preset;  // set when the workload came from a named preset
    fed::RequestSpec request;
    NetConfig net;
    ProbeParams probes;
    QuantParams quant;
    StabilityParams stability;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

/// Named fixed-length workloads (context split across two owner nodes, plus
/// ten 64-token rerank candidates): short = 256+256/32/32,
/// medium = 1024+1024/64/64, long = 4096+4096/128/128.
void apply_preset(RunConfig& cfg, const std::string& name);

/// FNV-1a over the canonical serialized config, for run manifests.
std::uint64_t config_fingerprint(const std::string& json_text);

}  // namespace sdattn
