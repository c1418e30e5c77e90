#include "sdattn/scrambler.hpp"

#include <stdexcept>

#include "sdattn/fwht.hpp"

namespace sdattn {

Scrambler Scrambler::hadamard_only(std::size_t d) {
    Scrambler s;
    s.dim = d;
    s.s1 = DiagScaling::unit(d);
    s.p1 = Permutation::identity(d);
    s.p2 = Permutation::identity(d);
    s.s2 = DiagScaling::unit(d);
    return s;
}

Scrambler Scrambler::identity(std::size_t d) {
    Scrambler s = hadamard_only(d);
    s.with_hadamard = false;
    return s;
}

Scrambler build_scrambler(std::size_t d, double mag_lo, double mag_hi, RngStream& rng,
                          ScramblerMode mode) {
    if (!is_power_of_two(d)) throw std::invalid_argument("build_scrambler: d must be a power of two");
    Scrambler s;
    s.dim = d;
    s.s1 = random_diag_scaling(d, mag_lo, mag_hi, rng);
    s.p1 = random_permutation(d, rng);
    s.p2 = random_permutation(d, rng);
    s.s2 = mode == ScramblerMode::s1_only ? DiagScaling::unit(d)
                                          : random_diag_scaling(d, mag_lo, mag_hi, rng);
    return s;
}

namespace {

enum class PhiVariant { forward, inv_t, inv };

void apply_row(std::span<const double> in, std::span<double> out, std::span<double> tmp,
               const Scrambler& s, PhiVariant variant) {
    const std::size_t d = s.dim;
    if (variant == PhiVariant::inv) {
        // x S2^{-1} P2^T H P1^T S1^{-1}
        for (std::size_t i = 0; i < d; ++i) tmp[i] = in[i] / s.s2.factors[i];
        permute_gather(tmp, s.p2, out);
        if (s.with_hadamard) fwht_normalized_inplace(out);
        permute_gather(std::span<const double>(out.data(), d), s.p1, tmp);
        for (std::size_t i = 0; i < d; ++i) out[i] = tmp[i] / s.s1.factors[i];
        return;
    }
    // forward: x S1 P1 H P2 S2 ; inv_t: x S1^{-1} P1 H P2 S2^{-1}
    const bool invert = variant == PhiVariant::inv_t;
    for (std::size_t i = 0; i < d; ++i)
        tmp[i] = invert ? in[i] / s.s1.factors[i] : in[i] * s.s1.factors[i];
    permute_scatter(tmp, s.p1, out);
    if (s.with_hadamard) fwht_normalized_inplace(out);
    permute_scatter(std::span<const double>(out.data(), d), s.p2, tmp);
    for (std::size_t i = 0; i < d; ++i)
        out[i] = invert ? tmp[i] / s.s2.factors[i] : tmp[i] * s.s2.factors[i];
}

Matrix apply_variant(const Matrix& x, const Scrambler& s, PhiVariant variant) {
    if (x.cols != s.dim) throw std::invalid_argument("apply_phi: column count != scrambler dim");
    Matrix out(x.rows, x.cols);
    std::vector<double> tmp(s.dim);
    for (std::size_t r = 0; r < x.rows; ++r) apply_row(x.row(r), out.row(r), tmp, s, variant);
    return out;
}

}  // namespace

Matrix apply_phi(const Matrix& x, const Scrambler& s) {
    return apply_variant(x, s, PhiVariant::forward);
}

Matrix apply_phi_inv_t(const Matrix& x, const Scrambler& s) {
    return apply_variant(x, s, PhiVariant::inv_t);
}

Matrix apply_phi_inv(const Matrix& x, const Scrambler& s) {
    return apply_variant(x, s, PhiVariant::inv);
}

Matrix dense_phi(const Scrambler& s) {
    Matrix basis(s.dim, s.dim);
    for (std::size_t i = 0; i < s.dim; ++i) basis.at(i, i) = 1.0;
    return apply_phi(basis, s);
}

namespace {
constexpr std::uint64_t kTagPhiKq = 1;
constexpr std::uint64_t kTagPhiV = 2;
constexpr std::uint64_t kTagTokenPerm = 3;
}  // namespace

Permutation ScramblerKeySet::span_perm(std::uint64_t tag, std::size_t first_pos,
                                       std::size_t len) const {
    RngStream rng(derive_seed(token_perm_seed, {tag, first_pos, len}));
    return random_permutation(len, rng);
}

ScramblerKeySet negotiate_keyset(std::uint64_t shared_seed, const KeySetSpec& spec) {
    if (spec.l_q < 1 || spec.l_k < 1) throw std::invalid_argument("negotiate_keyset: lengths must be >= 1");
    ScramblerKeySet ks;
    ks.request_id = spec.request_id;
    ks.layer = spec.layer;
    ks.domain = spec.domain;
    ks.phi_kq.reserve(spec.n_heads);
    ks.phi_v.reserve(spec.n_heads);
    for (std::size_t h = 0; h < spec.n_heads; ++h) {
        RngStream rq(derive_seed(shared_seed, {spec.request_id, spec.layer, spec.domain, kTagPhiKq, h}));
        ks.phi_kq.push_back(build_scrambler(spec.head_dim, spec.mag_lo, spec.mag_hi, rq, spec.mode));
        RngStream rv(derive_seed(shared_seed, {spec.request_id, spec.layer, spec.domain, kTagPhiV, h}));
        ks.phi_v.push_back(build_scrambler(spec.head_dim, spec.mag_lo, spec.mag_hi, rv, spec.mode));
    }
    ks.token_perm_seed =
        derive_seed(shared_seed, {spec.request_id, spec.layer, spec.domain, kTagTokenPerm, 0});
    ks.p_q = ks.span_perm(/*tag=*/0, /*first_pos=*/0, spec.l_q);
    ks.p_kv = ks.span_perm(/*tag=*/1, /*first_pos=*/0, spec.l_k);
    return ks;
}

ScrambledTriple enc_qkv(const Matrix& q, const Matrix& k, const Matrix& v,
                        const ScramblerKeySet& theta, std::size_t head) {
    if (head >= theta.n_heads()) throw std::invalid_argument("enc_qkv: head out of range");
    if (q.rows != theta.p_q.size() || k.rows != theta.p_kv.size() || v.rows != k.rows)
        throw std::invalid_argument("enc_qkv: shapes inconsistent with key set");
    ScrambledTriple t;
    t.q_s = permute_rows_gather(apply_phi(q, theta.phi_kq[head]), theta.p_q);
    t.k_s = permute_rows_gather(apply_phi_inv_t(k, theta.phi_kq[head]), theta.p_kv);
    t.v_s = permute_rows_gather(apply_phi(v, theta.phi_v[head]), theta.p_kv);
    return t;
}

AttentionShard dec_output(const Matrix& o_s, const ShardStats& stats_s,
                          const ScramblerKeySet& theta, std::size_t head) {
    if (head >= theta.n_heads()) throw std::invalid_argument("dec_output: head out of range");
    if (o_s.rows != theta.p_q.size() || stats_s.row_max.size() != o_s.rows ||
        stats_s.exp_sum.size() != o_s.rows)
        throw std::invalid_argument("dec_output: shape mismatch");
    AttentionShard shard;
    shard.output = permute_rows_scatter(apply_phi_inv(o_s, theta.phi_v[head]), theta.p_q);
    shard.stats.row_max = permute_scatter(stats_s.row_max, theta.p_q);
    shard.stats.exp_sum = permute_scatter(stats_s.exp_sum, theta.p_q);
    return shard;
}

AttentionShard scrambled_shard_attention(const ScrambledTriple& triple, const AttentionMask& mask,
                                         std::size_t head_dim) {
    return shard_attention(triple.q_s, triple.k_s, triple.v_s, mask, head_dim);
}

}  // namespace sdattn
