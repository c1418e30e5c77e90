#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdattn/float_format.hpp"
#include "sdattn/fwht.hpp"
#include "sdattn/matrix.hpp"
#include "sdattn/permutation.hpp"
#include "sdattn/rng.hpp"

using namespace sdattn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

// Independent oracle: plain ijk triple loop.
Matrix matmul_naive(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul basics") {
    Matrix id(2, 2, {1, 0, 0, 1});
    Matrix m(2, 2, {5, 6, 7, 8});
    CHECK(matmul(m, id).data == m.data);
    CHECK(matmul(id, m).data == m.data);

    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix ones(2, 1, {1, 1});
    const Matrix r = matmul(a, ones);
    CHECK(r.at(0, 0) == 3.0);
    CHECK(r.at(1, 0) == 7.0);

    CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
    RngStream rng(42);
    const Matrix a = random_matrix(8, 8, rng);
    const Matrix b = random_matrix(8, 8, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = matmul_naive(a, b);
    CHECK(got.data == want.data);
}

TEST_CASE("softmax rows") {
    Matrix m(1, 2, {0, 0});
    Matrix s = softmax_rows(m);
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
    CHECK(s.at(0, 1) == doctest::Approx(0.5));

    Matrix big(1, 2, {1000, 1000});
    s = softmax_rows(big);
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
    CHECK(s.all_finite());

    Matrix ln3(1, 2, {0.0, std::log(3.0)});
    s = softmax_rows(ln3);
    CHECK(s.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

    RngStream rng(7);
    const Matrix r = softmax_rows(random_matrix(13, 9, rng));
    for (std::size_t i = 0; i < r.rows; ++i) {
        double sum = 0.0;
        for (double v : r.row(i)) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax shift invariance") {
    RngStream rng(8);
    Matrix m = random_matrix(4, 6, rng);
    Matrix shifted = m;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (double& v : shifted.row(i)) v += 123.5;
    CHECK(max_abs_diff(softmax_rows(m), softmax_rows(shifted)) < 1e-12);
}

TEST_CASE("bf16 rounding") {
    CHECK(round_to_format(1.0, FloatFormat::bf16) == 1.0);
    CHECK(round_to_format(1.0 + 0x1.0p-10, FloatFormat::bf16) == 1.0);
    CHECK(round_to_format(1.0 + 0x1.0p-7, FloatFormat::bf16) == 1.0078125);
    // Ties round to even: halfway between 1.0 and 1.0078125.
    CHECK(round_to_format(1.0 + 0x1.0p-8, FloatFormat::bf16) == 1.0);
}

TEST_CASE("f16 rounding and overflow clamp") {
    CHECK(round_to_format(1.0, FloatFormat::f16) == 1.0);
    CHECK(round_to_format(65504.0, FloatFormat::f16) == 65504.0);
    CHECK(round_to_format(1e10, FloatFormat::f16) == 65504.0);
    CHECK(round_to_format(-1e10, FloatFormat::f16) == -65504.0);
    // Subnormal range: smallest positive f16 subnormal is 2^-24.
    CHECK(round_to_format(0x1.0p-24, FloatFormat::f16) == 0x1.0p-24);
    CHECK(round_to_format(0x1.0p-26, FloatFormat::f16) == 0.0);
}

TEST_CASE("round_to_format is idempotent bitwise") {
    RngStream rng(11);
    for (FloatFormat fmt : {FloatFormat::f32, FloatFormat::bf16, FloatFormat::f16}) {
        for (int i = 0; i < 2000; ++i) {
            const double x = rng.next_gaussian() * std::exp(rng.next_gaussian() * 4.0);
            const double once = round_to_format(x, fmt);
            CHECK(round_to_format(once, fmt) == once);
        }
    }
    CHECK(round_to_format(3.14159, FloatFormat::f64) == 3.14159);
}

TEST_CASE("bf16/f16 bit conversions round-trip") {
    RngStream rng(12);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.next_gaussian() * std::exp(rng.next_gaussian() * 3.0);
        const double b = round_to_format(x, FloatFormat::bf16);
        CHECK(double_from_bf16_bits(bf16_bits_from_double(b)) == b);
        const double h = round_to_format(x, FloatFormat::f16);
        CHECK(double_from_f16_bits(f16_bits_from_double(h)) == h);
    }
}

TEST_CASE("fwht small cases") {
    std::vector<double> x{1, 0};
    fwht_normalized_inplace(x);
    CHECK(x[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

    std::vector<double> ones{1, 1, 1, 1};
    fwht_normalized_inplace(ones);
    CHECK(ones[0] == doctest::Approx(2.0));
    for (int i = 1; i < 4; ++i) CHECK(ones[i] == doctest::Approx(0.0));

    std::vector<double> bad(3, 1.0);
    CHECK_THROWS_AS(fwht_normalized_inplace(bad), std::invalid_argument);
}

TEST_CASE("fwht matches explicit Sylvester matrix") {
    RngStream rng(13);
    const std::size_t d = 64;
    const Matrix h = dense_hadamard(d);
    Matrix x = random_matrix(1, d, rng);
    const Matrix want = matmul(x, h);
    const std::vector<double> got = fwht_normalized(x.row(0));
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(got[i] - want.at(0, i)) < 1e-12);
}

TEST_CASE("fwht isometry and involution") {
    RngStream rng(14);
    for (std::size_t d : {8u, 64u, 256u}) {
        Matrix x = random_matrix(1, d, rng);
        const double n0 = l2_norm(x.row(0));
        std::vector<double> y = fwht_normalized(x.row(0));
        CHECK(std::abs(l2_norm(y) - n0) < 1e-10);
        fwht_normalized_inplace(y);
        for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(y[i] - x.at(0, i)) < 1e-10);
    }
}

TEST_CASE("random permutation") {
    RngStream rng(15);
    CHECK(random_permutation(1, rng).is_identity());

    RngStream a(77), b(77);
    CHECK(random_permutation(20, a).forward == random_permutation(20, b).forward);

    // Uniformity: counts of value v at position p over 1e4 draws, within
    // 5 sigma of the multinomial expectation.
    const std::size_t n = 5, draws = 10000;
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
    RngStream c(16);
    for (std::size_t t = 0; t < draws; ++t) {
        const Permutation p = random_permutation(n, c);
        for (std::size_t i = 0; i < n; ++i) counts[i][p.forward[i]]++;
    }
    const double expect = draws / static_cast<double>(n);
    const double sigma = std::sqrt(draws * 0.2 * 0.8);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            CHECK(std::abs(static_cast<double>(counts[i][j]) - expect) < 5.0 * sigma);
}

TEST_CASE("permutation inverse composition is identity") {
    RngStream rng(17);
    for (std::size_t n : {1u, 2u, 37u, 1000u, 10000u}) {
        const Permutation p = random_permutation(n, rng);
        const Permutation inv = p.inverse();
        std::vector<double> x(n);
        for (auto& v : x) v = rng.next_double();
        const auto mixed = permute_scatter(x, p);
        CHECK(permute_gather(mixed, p) == x);
        CHECK(permute_scatter(permute_gather(x, p), p) == x);
        for (std::size_t i = 0; i < n; ++i) CHECK(inv.forward[p.forward[i]] == i);
    }
}

TEST_CASE("random diag scaling") {
    RngStream rng(18);
    const DiagScaling s1 = random_diag_scaling(64, 1.0, 1.0, rng);
    for (double f : s1.factors) CHECK(std::abs(f) == 1.0);

    const DiagScaling s2 = random_diag_scaling(256, 0.125, 8.0, rng);
    for (double f : s2.factors) {
        CHECK(std::abs(f) >= 0.125);
        CHECK(std::abs(f) <= 8.0);
    }

    // Log-uniform symmetry: median magnitude ~ sqrt(lo*hi) = 1.
    std::vector<double> mags;
    for (int i = 0; i < 100; ++i) {
        const DiagScaling s = random_diag_scaling(100, 0.125, 8.0, rng);
        for (double f : s.factors) mags.push_back(std::abs(f));
    }
    std::sort(mags.begin(), mags.end());
    const double median = mags[mags.size() / 2];
    CHECK(median > 0.9);
    CHECK(median < 1.1);

    CHECK_THROWS_AS(random_diag_scaling(4, 0.0, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(random_diag_scaling(4, 2.0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("rng determinism and derivation") {
    RngStream a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}
