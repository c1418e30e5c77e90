#pragma once

#include <cstdint>
#include <vector>

#include "sdattn/attention.hpp"
#include "sdattn/matrix.hpp"
#include "sdattn/permutation.hpp"
#include "sdattn/rng.hpp"

namespace sdattn {

/// The structured scrambling transform phi = S1 P1 H P2 S2 over the feature
/// dimension. Never materialized densely on the hot path: rows are scaled,
/// permuted and Hadamard-transformed componentwise. S1/S2 distort distances,
/// P1/P2 randomize the public H, and H provides dense sign-flip mixing that
/// stays stable in low-precision arithmetic.
///
/// with_hadamard=false drops the H factor (test hook for permutation- or
/// scaling-only variants).
struct Scrambler {
    std::size_t dim = 0;
    DiagScaling s1;
    Permutation p1;
    Permutation p2;
    DiagScaling s2;
    bool with_hadamard = true;

    static Scrambler hadamard_only(std::size_t d);
    static Scrambler identity(std::size_t d);
};

enum class ScramblerMode : std::uint8_t {
    s1_and_s2,  // full construction
    s1_only,    // post-Hadamard scaling removed (quantization-friendly relaxation)
};

/// Components drawn from the stream in the fixed order s1, p1, p2, s2; this
/// order is part of the key-derivation contract.
Scrambler build_scrambler(std::size_t d, double mag_lo, double mag_hi, RngStream& rng,
                          ScramblerMode mode = ScramblerMode::s1_and_s2);

/// x * phi, rows treated independently.
Matrix apply_phi(const Matrix& x, const Scrambler& s);
/// x * phi^{-T} = x * S1^{-1} P1 H P2 S2^{-1} (the dual operand of the
/// inner-product-preserving pair).
Matrix apply_phi_inv_t(const Matrix& x, const Scrambler& s);
/// x * phi^{-1}; inverse of apply_phi.
Matrix apply_phi_inv(const Matrix& x, const Scrambler& s);

/// Dense materialization of phi; oracle/test use only.
Matrix dense_phi(const Scrambler& s);

/// Per-(request, layer, compute-domain) secret. Every non-compute
/// participant of the domain derives an identical key set from the shared
/// request seed; the compute node's own seed never enters the derivation.
/// Feature scramblers are per attention head; token permutations are shared
/// across heads so row order stays consistent.
struct ScramblerKeySet {
    std::uint64_t request_id = 0;
    std::uint32_t layer = 0;
    std::uint32_t domain = 0;
    std::vector<Scrambler> phi_kq;  // one per head
    std::vector<Scrambler> phi_v;
    Permutation p_q;   // sized L_Q
    Permutation p_kv;  // sized L_K
    std::uint64_t token_perm_seed = 0;

    std::size_t n_heads() const { return phi_kq.size(); }

    /// Sub-permutation for a token span (segments arrive incrementally, so
    /// each span is shuffled within itself). Deterministic per
    /// (key set, tag, first_pos, len).
    Permutation span_perm(std::uint64_t tag, std::size_t first_pos, std::size_t len) const;
};

struct KeySetSpec {
    std::uint64_t request_id = 0;
    std::uint32_t layer = 0;
    std::uint32_t domain = 0;
    std::size_t l_q = 1;
    std::size_t l_k = 1;
    std::size_t n_heads = 1;
    std::size_t head_dim = 64;
    double mag_lo = 0.125;
    double mag_hi = 8.0;
    ScramblerMode mode = ScramblerMode::s1_and_s2;
};

/// Derivation rule (protocol contract): every component seed is
/// derive_seed(shared_seed, {request_id, layer, domain, component_tag,
/// head}) with component tags 1 = phi_kq, 2 = phi_v, 3 = token perms.
ScramblerKeySet negotiate_keyset(std::uint64_t shared_seed, const KeySetSpec& spec);

/// Protocol step 1 output (single head): scrambled Q', K', V'.
struct ScrambledTriple {
    Matrix q_s;
    Matrix k_s;
    Matrix v_s;
};

/// Enc(Q,K,V,theta) = (P_Q Q phi_KQ, P_KV K phi_KQ^{-T}, P_KV V phi_V).
/// Wire-precision rounding happens at framing, after this.
ScrambledTriple enc_qkv(const Matrix& q, const Matrix& k, const Matrix& v,
                        const ScramblerKeySet& theta, std::size_t head);

/// Output descrambling: P_Q^{-1} o_s phi_V^{-1} plus the un-permuted
/// normalization statistics.
AttentionShard dec_output(const Matrix& o_s, const ShardStats& stats_s,
                          const ScramblerKeySet& theta, std::size_t head);

/// Protocol step 2: the keyless party runs shard attention verbatim on the
/// scrambled triple. The result equals P_Q Attention(Q,K,V) phi_V with
/// P_Q-permuted statistics.
AttentionShard scrambled_shard_attention(const ScrambledTriple& triple, const AttentionMask& mask,
                                         std::size_t head_dim);

}  // namespace sdattn
