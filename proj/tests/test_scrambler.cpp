#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdattn/attention.hpp"
#include "sdattn/fwht.hpp"
#include "sdattn/linalg.hpp"
#include "sdattn/scrambler.hpp"

using namespace sdattn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

// Oracle: dense phi assembled from explicit component matrices.
Matrix dense_phi_oracle(const Scrambler& s) {
    Matrix phi = dense_diag(s.s1);
    phi = matmul(phi, dense_permutation(s.p1));
    if (s.with_hadamard) phi = matmul(phi, dense_hadamard(s.dim));
    phi = matmul(phi, dense_permutation(s.p2));
    return matmul(phi, dense_diag(s.s2));
}

}  // namespace

TEST_CASE("degenerate scrambler equals the Hadamard transform") {
    const std::size_t d = 32;
    const Scrambler s = Scrambler::hadamard_only(d);
    RngStream rng(1);
    const Matrix x = random_matrix(4, d, rng);
    Matrix want = x;
    fwht_rows_inplace(want);
    CHECK(max_abs_diff(apply_phi(x, s), want) == 0.0);
    // phi orthogonal here, so phi^{-T} = phi.
    CHECK(max_abs_diff(apply_phi_inv_t(x, s), want) == 0.0);
}

TEST_CASE("build_scrambler determinism") {
    RngStream a(9), b(9);
    const Scrambler s1 = build_scrambler(64, 0.125, 8.0, a);
    const Scrambler s2 = build_scrambler(64, 0.125, 8.0, b);
    CHECK(s1.s1.factors == s2.s1.factors);
    CHECK(s1.p1.forward == s2.p1.forward);
    CHECK(s1.p2.forward == s2.p2.forward);
    CHECK(s1.s2.factors == s2.s2.factors);
    CHECK_THROWS_AS(build_scrambler(48, 0.125, 8.0, a), std::invalid_argument);
}

TEST_CASE("condition number bounded by the scaling ranges") {
    RngStream rng(10);
    const Scrambler s = build_scrambler(64, 0.125, 8.0, rng);
    const double kappa = condition_number(dense_phi(s));
    CHECK(kappa <= 4096.0 * (1.0 + 1e-6));
    CHECK(kappa >= 1.0);
}

TEST_CASE("componentwise application matches the dense materialization") {
    RngStream rng(11);
    for (std::size_t d : {8u, 64u}) {
        const Scrambler s = build_scrambler(d, 0.125, 8.0, rng);
        const Matrix x = random_matrix(6, d, rng);
        const Matrix dense = dense_phi_oracle(s);
        CHECK(max_abs_diff(apply_phi(x, s), matmul(x, dense)) < 1e-10);

        const Matrix inv_t = transpose(invert(dense));
        CHECK(max_abs_diff(apply_phi_inv_t(x, s), matmul(x, inv_t)) < 1e-9);
    }
}

TEST_CASE("zero maps to zero") {
    RngStream rng(12);
    const Scrambler s = build_scrambler(16, 0.125, 8.0, rng);
    const Matrix z(3, 16);
    CHECK(max_abs_diff(apply_phi(z, s), z) == 0.0);
}

TEST_CASE("lemma: inner product preservation, 1000 cases") {
    RngStream rng(13);
    for (int c = 0; c < 1000; ++c) {
        const std::size_t d = (c % 2) ? 16 : 64;
        const Scrambler s = build_scrambler(d, 0.125, 8.0, rng);
        const Matrix x1 = random_matrix(1, d, rng);
        const Matrix x2 = random_matrix(1, d, rng);
        const double want = dot(x1.row(0), x2.row(0));
        const double got = dot(apply_phi(x1, s).row(0), apply_phi_inv_t(x2, s).row(0));
        CHECK(std::abs(got - want) <= 1e-9 * (1.0 + std::abs(want)));
    }
}

TEST_CASE("lemma: inner products on basis vectors") {
    RngStream rng(14);
    const std::size_t d = 16;
    const Scrambler s = build_scrambler(d, 0.125, 8.0, rng);
    Matrix basis(d, d);
    for (std::size_t i = 0; i < d; ++i) basis.at(i, i) = 1.0;
    const Matrix fwd = apply_phi(basis, s);
    const Matrix dual = apply_phi_inv_t(basis, s);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            CHECK(std::abs(dot(fwd.row(i), dual.row(j)) - want) < 1e-10);
        }
}

TEST_CASE("lemma: linearity, 1000 cases") {
    RngStream rng(15);
    for (int c = 0; c < 1000; ++c) {
        const std::size_t d = 32;
        const Scrambler s = build_scrambler(d, 0.125, 8.0, rng);
        const std::size_t n = 1 + rng.next_below(6);
        Matrix xs(n, d);
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) xs.at(i, j) = rng.next_gaussian();
            w[i] = rng.next_gaussian();
        }
        const Matrix scrambled = apply_phi(xs, s);
        std::vector<double> lhs(d, 0.0), combo(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                lhs[j] += w[i] * scrambled.at(i, j);
                combo[j] += w[i] * xs.at(i, j);
            }
        const Matrix rhs = apply_phi(Matrix(1, d, combo), s);
        for (std::size_t j = 0; j < d; ++j)
            CHECK(std::abs(lhs[j] - rhs.at(0, j)) <= 1e-9 * (1.0 + std::abs(rhs.at(0, j))));
    }
}

TEST_CASE("inverse round trip") {
    RngStream rng(16);
    const Scrambler s = build_scrambler(64, 0.125, 8.0, rng);
    const Matrix x = random_matrix(32, 64, rng);
    CHECK(max_abs_diff(apply_phi_inv(apply_phi(x, s), s), x) < 1e-9);

    const Matrix z(2, 64);
    CHECK(max_abs_diff(apply_phi_inv(z, s), z) == 0.0);

    // Hadamard-only: applying phi twice is the identity.
    const Scrambler h = Scrambler::hadamard_only(64);
    CHECK(max_abs_diff(apply_phi(apply_phi(x, h), h), x) < 1e-10);
}

TEST_CASE("unit-scaling phi preserves pairwise distances") {
    RngStream rng(17);
    Scrambler s = build_scrambler(64, 1.0, 1.0, rng);
    for (double& f : s.s1.factors) f = std::abs(f);
    for (double& f : s.s2.factors) f = std::abs(f);
    const Matrix x = random_matrix(24, 64, rng);
    const Matrix y = apply_phi(x, s);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = i + 1; j < x.rows; ++j) {
            double d0 = 0.0, d1 = 0.0;
            for (std::size_t c = 0; c < 64; ++c) {
                d0 += (x.at(i, c) - x.at(j, c)) * (x.at(i, c) - x.at(j, c));
                d1 += (y.at(i, c) - y.at(j, c)) * (y.at(i, c) - y.at(j, c));
            }
            CHECK(std::abs(std::sqrt(d0) - std::sqrt(d1)) < 1e-10 * (1.0 + std::sqrt(d0)));
        }
}

TEST_CASE("keyset negotiation agreement and freshness") {
    KeySetSpec spec;
    spec.request_id = 5;
    spec.layer = 2;
    spec.domain = 1;
    spec.l_q = 8;
    spec.l_k = 24;
    spec.n_heads = 2;
    spec.head_dim = 16;

    const ScramblerKeySet a = negotiate_keyset(99, spec);
    const ScramblerKeySet b = negotiate_keyset(99, spec);
    CHECK(a.p_q.forward == b.p_q.forward);
    CHECK(a.p_kv.forward == b.p_kv.forward);
    CHECK(a.phi_kq[0].s1.factors == b.phi_kq[0].s1.factors);
    CHECK(a.phi_kq[1].p1.forward == b.phi_kq[1].p1.forward);

    KeySetSpec other_layer = spec;
    other_layer.layer = 3;
    const ScramblerKeySet c = negotiate_keyset(99, other_layer);
    CHECK(a.phi_kq[0].s1.factors != c.phi_kq[0].s1.factors);

    KeySetSpec other_request = spec;
    other_request.request_id = 6;
    const ScramblerKeySet d = negotiate_keyset(99, other_request);
    CHECK(a.phi_kq[0].s1.factors != d.phi_kq[0].s1.factors);
    CHECK(a.phi_v[0].s2.factors != d.phi_v[0].s2.factors);
    CHECK(a.p_kv.forward != d.p_kv.forward);

    // Distinct heads get independent feature scramblers.
    CHECK(a.phi_kq[0].s1.factors != a.phi_kq[1].s1.factors);
    CHECK(a.phi_kq[0].s1.factors != a.phi_v[0].s1.factors);
}

namespace {

ScramblerKeySet test_keyset(std::uint64_t seed, std::size_t l_q, std::size_t l_k, std::size_t d) {
    KeySetSpec spec;
    spec.request_id = 1;
    spec.layer = 0;
    spec.domain = 1;
    spec.l_q = l_q;
    spec.l_k = l_k;
    spec.n_heads = 1;
    spec.head_dim = d;
    return negotiate_keyset(seed, spec);
}

}  // namespace

TEST_CASE("enc preserves row norms under orthogonal phi") {
    RngStream rng(18);
    const std::size_t d = 32;
    ScramblerKeySet theta = test_keyset(7, 4, 9, d);
    for (auto& phi : theta.phi_kq) {
        for (double& f : phi.s1.factors) f = 1.0;
        for (double& f : phi.s2.factors) f = 1.0;
    }
    for (auto& phi : theta.phi_v) {
        for (double& f : phi.s1.factors) f = 1.0;
        for (double& f : phi.s2.factors) f = 1.0;
    }
    const Matrix q = random_matrix(4, d, rng);
    const Matrix k = random_matrix(9, d, rng);
    const Matrix v = random_matrix(9, d, rng);
    const ScrambledTriple t = enc_qkv(q, k, v, theta, 0);
    // Rows are permuted, so compare norm multisets.
    std::vector<double> nq, nqs;
    for (std::size_t i = 0; i < q.rows; ++i) {
        nq.push_back(l2_norm(q.row(i)));
        nqs.push_back(l2_norm(t.q_s.row(i)));
    }
    std::sort(nq.begin(), nq.end());
    std::sort(nqs.begin(), nqs.end());
    for (std::size_t i = 0; i < nq.size(); ++i) CHECK(std::abs(nq[i] - nqs[i]) < 1e-10);
}

TEST_CASE("single-row query gets the identity token permutation") {
    const ScramblerKeySet theta = test_keyset(3, 1, 5, 16);
    CHECK(theta.p_q.is_identity());
}

TEST_CASE("protocol equivalence: enc, scrambled attention, dec") {
    RngStream rng(19);
    for (int c = 0; c < 10; ++c) {
        const std::size_t d = 32;
        const std::size_t lq = 1 + rng.next_below(12);
        const std::size_t lk = 1 + rng.next_below(40);
        const ScramblerKeySet theta = test_keyset(derive_seed(20, {static_cast<std::uint64_t>(c)}),
                                                  lq, lk, d);
        const Matrix q = random_matrix(lq, d, rng);
        const Matrix k = random_matrix(lk, d, rng);
        const Matrix v = random_matrix(lk, d, rng);

        const AttentionShard plain = shard_attention(q, k, v, AttentionMask::none(), d);
        const ScrambledTriple t = enc_qkv(q, k, v, theta, 0);
        const AttentionShard scr = scrambled_shard_attention(t, AttentionMask::none(), d);
        const AttentionShard rec = dec_output(scr.output, scr.stats, theta, 0);

        CHECK(max_abs_diff(rec.output, plain.output) < 1e-8);
        for (std::size_t i = 0; i < lq; ++i) {
            CHECK(std::abs(rec.stats.row_max[i] - plain.stats.row_max[i]) < 1e-8);
            CHECK(std::abs(rec.stats.exp_sum[i] - plain.stats.exp_sum[i]) <
                  1e-8 * (1.0 + plain.stats.exp_sum[i]));
        }
    }
}

TEST_CASE("identity key set makes dec the identity") {
    const std::size_t d = 16, lq = 3;
    ScramblerKeySet theta = test_keyset(4, lq, 6, d);
    theta.p_q = Permutation::identity(lq);
    for (auto& phi : theta.phi_v) phi = Scrambler::identity(d);
    RngStream rng(21);
    const Matrix o = random_matrix(lq, d, rng);
    ShardStats st;
    st.row_max = {1.0, 2.0, 3.0};
    st.exp_sum = {4.0, 5.0, 6.0};
    const AttentionShard rec = dec_output(o, st, theta, 0);
    CHECK(rec.output.data == o.data);
    CHECK(rec.stats.row_max == st.row_max);
}

TEST_CASE("permutation-only key set reorders and restores rows exactly") {
    const std::size_t d = 16, lq = 7, lk = 7;
    RngStream rng(22);
    ScramblerKeySet theta = test_keyset(8, lq, lk, d);
    for (auto& phi : theta.phi_kq) phi = Scrambler::identity(d);
    for (auto& phi : theta.phi_v) phi = Scrambler::identity(d);

    const Matrix q = random_matrix(lq, d, rng);
    const Matrix k = random_matrix(lk, d, rng);
    const Matrix v = random_matrix(lk, d, rng);
    const ScrambledTriple t = enc_qkv(q, k, v, theta, 0);
    // Feature content untouched; rows reordered by p_q.
    for (std::size_t i = 0; i < lq; ++i) {
        bool found = false;
        for (std::size_t j = 0; j < lq; ++j) {
            if (std::equal(q.row(i).begin(), q.row(i).end(), t.q_s.row(j).begin())) found = true;
        }
        CHECK(found);
    }
    const AttentionShard plain = shard_attention(q, k, v, AttentionMask::none(), d);
    const AttentionShard scr = scrambled_shard_attention(t, AttentionMask::none(), d);
    const AttentionShard rec = dec_output(scr.output, scr.stats, theta, 0);
    CHECK(max_abs_diff(rec.output, plain.output) < 1e-12);
}
