// Experiment runner: federated RAG requests over a simulated network with
// scrambled distributed attention, plus the verification, stability, privacy
// probe and quantization harnesses.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdattn/config.hpp"
#include "sdattn/experiments.hpp"
#include "sdattn/protocol.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Path to the JSON run configuration")
        ->required();
    cmd->add_option("--seed", opts.seed, "Override the master seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--out", opts.out_dir, "Override the output directory");
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sdattn::ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

sdattn::RunConfig load(const CommonOpts& opts, std::string* text_out = nullptr) {
    const std::string text = slurp(opts.config_path);
    if (text_out) *text_out = text;
    sdattn::RunConfig cfg = sdattn::parse_run_config(text);
    if (opts.seed_set) {
        // Re-parse with the injected seed so every derived stream follows.
        nlohmann::json j = nlohmann::json::parse(text);
        j["seed"] = opts.seed;
        cfg = sdattn::parse_run_config(j.dump());
        if (text_out) *text_out = j.dump();
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        f << content;
    }
    std::filesystem::rename(tmp, path);
}

int cmd_run(const CommonOpts& opts) {
    std::string text;
    const sdattn::RunConfig cfg = load(opts, &text);
    const sdattn::fed::RequestResult result = sdattn::fed::run_request(cfg.request, cfg.net);
    sdattn::exp::write_run_artifacts(cfg.out_dir, result, text);
    std::cout << "answer tokens: " << result.answer.size() << "\n"
              << "ttft_s: " << result.metrics.ttft_s() << "\n"
              << "decode_tps: " << result.metrics.decode_tps() << "\n"
              << "traffic_bytes: " << result.metrics.traffic_bytes << "\n"
              << "comm_rounds: " << result.metrics.comm_rounds << "\n"
              << "artifacts: " << cfg.out_dir << "\n";
    return 0;
}

int cmd_verify(const CommonOpts& opts) {
    const sdattn::RunConfig cfg = load(opts);
    const sdattn::exp::VerifyReport rep = sdattn::exp::run_verify(cfg);
    std::cout << "tokens expected/actual: " << rep.expected.size() << "/" << rep.actual.size()
              << "\n"
              << "max hidden-state deviation: " << rep.max_hidden_dev << "\n"
              << "token agreement: " << (rep.token_match ? "identical" : "DIVERGED") << "\n";
    if (!rep.token_match)
        std::cout << "first diverging decode step: " << rep.first_divergence << "\n";
    for (const std::string& a : rep.audit_failures) std::cout << "audit failure: " << a << "\n";
    const bool ok = rep.token_match && rep.audit_failures.empty();
    std::cout << (ok ? "VERIFY PASS" : "VERIFY FAIL") << "\n";
    return ok ? 0 : 1;
}

int cmd_stability(const CommonOpts& opts) {
    const sdattn::RunConfig cfg = load(opts);
    const auto rows = sdattn::exp::stability_experiment(cfg.stability, sdattn::FloatFormat::bf16,
                                                        cfg.seed);
    const std::string csv = sdattn::exp::stability_rows_csv(rows);
    std::cout << csv;
    write_text(std::filesystem::path(cfg.out_dir) / "stability.csv", csv);
    return 0;
}

int cmd_probe(const CommonOpts& opts) {
    const sdattn::RunConfig cfg = load(opts);
    const auto rows = sdattn::exp::run_probe_suite(cfg.probes, cfg.request.scrambler.mag_lo,
                                                   cfg.request.scrambler.mag_hi, cfg.seed);
    const std::string csv = sdattn::exp::probe_rows_csv(rows);
    std::cout << csv;
    write_text(std::filesystem::path(cfg.out_dir) / "probes.csv", csv);
    return 0;
}

int cmd_quant_sweep(const CommonOpts& opts) {
    const sdattn::RunConfig cfg = load(opts);
    const auto rows = sdattn::exp::rerank_quant_sweep(cfg.request.rr_model, cfg.quant,
                                                      cfg.request.scrambler, cfg.seed);
    std::string csv = sdattn::exp::rerank_rows_csv(rows);
    const auto ablation = sdattn::exp::decode_quant_ablation(
        cfg.request.gen_model, cfg.quant.ablation_bits, std::min<std::size_t>(cfg.quant.seeds, 8),
        cfg.request.scrambler.mag_lo, cfg.request.scrambler.mag_hi, cfg.seed);
    std::cout << csv << "\n" << sdattn::exp::ablation_rows_csv(ablation);
    write_text(std::filesystem::path(cfg.out_dir) / "rerank_quant.csv", csv);
    write_text(std::filesystem::path(cfg.out_dir) / "decode_ablation.csv",
               sdattn::exp::ablation_rows_csv(ablation));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scrambled distributed attention testbed"};
    app.require_subcommand(1);

    CommonOpts run_opts, verify_opts, stab_opts, probe_opts, quant_opts;
    add_common(app.add_subcommand("run", "Execute a federated RAG request"), run_opts);
    add_common(app.add_subcommand("verify",
                                  "Exactness oracle: federated vs centralized decoding"),
               verify_opts);
    add_common(app.add_subcommand("stability", "Low-precision attention error comparison"),
               stab_opts);
    add_common(app.add_subcommand("probe", "Privacy attack probes"), probe_opts);
    add_common(app.add_subcommand("quant-sweep", "Quantization sweeps and the scaling ablation"),
               quant_opts);

    CLI11_PARSE(app, argc, argv);
    try {
        if (app.got_subcommand("run")) return cmd_run(run_opts);
        if (app.got_subcommand("verify")) return cmd_verify(verify_opts);
        if (app.got_subcommand("stability")) return cmd_stability(stab_opts);
        if (app.got_subcommand("probe")) return cmd_probe(probe_opts);
        if (app.got_subcommand("quant-sweep")) return cmd_quant_sweep(quant_opts);
    } catch (const sdattn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
