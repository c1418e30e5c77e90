#include <benchmark/benchmark.h>

#include "sdattn/attention.hpp"
#include "sdattn/frame.hpp"
#include "sdattn/fwht.hpp"
#include "sdattn/rng.hpp"
#include "sdattn/scrambler.hpp"

using namespace sdattn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

void BM_fwht(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    RngStream rng(1);
    std::vector<double> x(d);
    for (double& v : x) v = rng.next_gaussian();
    for (auto _ : state) {
        fwht_normalized_inplace(x);
        benchmark::DoNotOptimize(x.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d));
}
BENCHMARK(BM_fwht)->Arg(64)->Arg(128)->Arg(1024);

void BM_apply_phi(benchmark::State& state) {
    const std::size_t d = 128;
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    RngStream rng(2);
    const Scrambler s = build_scrambler(d, 0.125, 8.0, rng);
    const Matrix x = random_matrix(rows, d, rng);
    for (auto _ : state) {
        Matrix y = apply_phi(x, s);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * d));
}
BENCHMARK(BM_apply_phi)->Arg(32)->Arg(512);

void BM_shard_merge(benchmark::State& state) {
    const std::size_t shards = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 64, lq = 16, per = 64;
    RngStream rng(3);
    const Matrix q = random_matrix(lq, d, rng);
    std::vector<AttentionShard> parts;
    for (std::size_t s = 0; s < shards; ++s)
        parts.push_back(shard_attention(q, random_matrix(per, d, rng), random_matrix(per, d, rng),
                                        AttentionMask::none(), d));
    for (auto _ : state) {
        Matrix merged = merge_shards(parts);
        benchmark::DoNotOptimize(merged.data.data());
    }
}
BENCHMARK(BM_shard_merge)->Arg(2)->Arg(8);

void BM_frame_roundtrip(benchmark::State& state) {
    RngStream rng(4);
    std::vector<double> values(4096);
    for (double& v : values) v = rng.next_gaussian();
    Frame f;
    f.msg_type = MsgType::scr_kv;
    f.dims = {4, 32, 32};
    f.dtype = DtypeCode::bf16;
    f.payload = payload_from_values(values, f.dtype);
    for (auto _ : state) {
        const auto bytes = encode_frame(f);
        const Frame back = decode_frame(bytes);
        benchmark::DoNotOptimize(back.payload.data());
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(encoded_size(f)));
}
BENCHMARK(BM_frame_roundtrip);

}  // namespace

BENCHMARK_MAIN();
