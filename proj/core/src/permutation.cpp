#include "sdattn/permutation.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sdattn {

bool Permutation::is_identity() const {
    for (std::size_t i = 0; i < forward.size(); ++i)
        if (forward[i] != i) return false;
    return true;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.forward.resize(forward.size());
    for (std::size_t i = 0; i < forward.size(); ++i) inv.forward[forward[i]] = static_cast<std::uint32_t>(i);
    return inv;
}

Permutation Permutation::identity(std::size_t n) {
    Permutation p;
    p.forward.resize(n);
    std::iota(p.forward.begin(), p.forward.end(), 0u);
    return p;
}

Permutation random_permutation(std::size_t n, RngStream& rng) {
    if (n == 0) throw std::invalid_argument("random_permutation: n must be >= 1");
    Permutation p = Permutation::identity(n);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next_below(i + 1);
        std::swap(p.forward[i], p.forward[j]);
    }
    return p;
}

void permute_scatter(std::span<const double> x, const Permutation& p, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[p.forward[i]] = x[i];
}

void permute_gather(std::span<const double> x, const Permutation& p, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[p.forward[i]];
}

Matrix permute_rows_scatter(const Matrix& m, const Permutation& p) {
    if (p.size() != m.rows) throw std::invalid_argument("permute_rows: size mismatch");
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto src = m.row(i);
        auto dst = out.row(p.forward[i]);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

Matrix permute_rows_gather(const Matrix& m, const Permutation& p) {
    if (p.size() != m.rows) throw std::invalid_argument("permute_rows: size mismatch");
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto src = m.row(p.forward[i]);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::vector<double> permute_scatter(const std::vector<double>& x, const Permutation& p) {
    std::vector<double> out(x.size());
    permute_scatter(std::span<const double>(x), p, out);
    return out;
}

std::vector<double> permute_gather(const std::vector<double>& x, const Permutation& p) {
    std::vector<double> out(x.size());
    permute_gather(std::span<const double>(x), p, out);
    return out;
}

DiagScaling DiagScaling::inverse() const {
    DiagScaling inv;
    inv.factors.reserve(factors.size());
    for (double f : factors) inv.factors.push_back(1.0 / f);
    return inv;
}

DiagScaling DiagScaling::unit(std::size_t n) {
    DiagScaling s;
    s.factors.assign(n, 1.0);
    return s;
}

DiagScaling random_diag_scaling(std::size_t d, double lo, double hi, RngStream& rng) {
    if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("random_diag_scaling: need 0 < lo <= hi");
    DiagScaling s;
    s.factors.reserve(d);
    const double log_lo = std::log(lo);
    const double log_span = std::log(hi) - log_lo;
    for (std::size_t i = 0; i < d; ++i) {
        const double mag = std::exp(log_lo + log_span * rng.next_double());
        const double sign = (rng.next_u64() & 1) ? 1.0 : -1.0;
        s.factors.push_back(sign * mag);
    }
    return s;
}

Matrix dense_permutation(const Permutation& p) {
    Matrix m(p.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) m.at(i, p.forward[i]) = 1.0;
    return m;
}

Matrix dense_diag(const DiagScaling& s) {
    Matrix m(s.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) m.at(i, i) = s.factors[i];
    return m;
}

}  // namespace sdattn
