#include "sdattn/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "sdattn/linalg.hpp"

namespace sdattn::probes {

std::string to_string(Generator g) {
    switch (g) {
        case Generator::iid_laplace: return "iid_laplace";
        case Generator::anisotropic_gaussian: return "anisotropic_gaussian";
        case Generator::model_states: return "model_states";
    }
    return "?";
}

Matrix iid_laplace_rows(std::size_t rows, std::size_t dim, double scale, RngStream& rng) {
    Matrix m(rows, dim);
    for (double& v : m.data) {
        // Inverse CDF: u in (-1/2, 1/2), x = -b sign(u) ln(1 - 2|u|).
        const double u = rng.next_double() - 0.5;
        const double a = std::max(1.0 - 2.0 * std::abs(u), 1e-300);
        v = -scale * (u < 0 ? -1.0 : 1.0) * std::log(a);
    }
    return m;
}

Matrix anisotropic_gaussian_rows(std::size_t rows, std::size_t dim, double decay, RngStream& rng) {
    const Matrix basis = random_orthonormal(dim, rng);
    std::vector<double> sigma(dim);
    for (std::size_t i = 0; i < dim; ++i)
        sigma[i] = std::pow(static_cast<double>(i + 1), -decay / 2.0);
    Matrix m(rows, dim);
    std::vector<double> z(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < dim; ++i) z[i] = sigma[i] * rng.next_gaussian();
        auto dst = m.row(r);
        for (std::size_t j = 0; j < dim; ++j) dst[j] = dot(z, basis.row(j));
    }
    return m;
}

namespace {

std::vector<std::size_t> knn_of(const Matrix& x, std::size_t i, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(x.rows - 1);
    auto xi = x.row(i);
    for (std::size_t j = 0; j < x.rows; ++j) {
        if (j == i) continue;
        double s = 0.0;
        auto xj = x.row(j);
        for (std::size_t c = 0; c < x.cols; ++c) {
            const double t = xi[c] - xj[c];
            s += t * t;
        }
        d.emplace_back(s, j);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = d[j].second;
    return out;
}

}  // namespace

double knn_overlap(const Matrix& x, const Matrix& x_s, std::size_t k) {
    if (x.rows != x_s.rows) throw std::invalid_argument("knn_overlap: row count mismatch");
    if (k >= x.rows) throw std::invalid_argument("knn_overlap: k must be < rows");
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto a = knn_of(x, i, k);
        const auto b = knn_of(x_s, i, k);
        const std::set<std::size_t> sa(a.begin(), a.end());
        std::size_t hit = 0;
        for (std::size_t j : b) hit += sa.count(j);
        total += static_cast<double>(hit) / static_cast<double>(k);
    }
    return total / static_cast<double>(x.rows);
}

DistortionStats distance_distortion(const Matrix& x, const Matrix& x_s, std::size_t sample_pairs,
                                    RngStream& rng) {
    if (x.rows != x_s.rows || x.rows < 2)
        throw std::invalid_argument("distance_distortion: need matching row counts >= 2");
    std::vector<double> ratios;
    ratios.reserve(sample_pairs);
    for (std::size_t s = 0; s < sample_pairs; ++s) {
        const std::size_t i = rng.next_below(x.rows);
        std::size_t j = rng.next_below(x.rows - 1);
        if (j >= i) ++j;
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            const double t = x.at(i, c) - x.at(j, c);
            d0 += t * t;
        }
        for (std::size_t c = 0; c < x_s.cols; ++c) {
            const double t = x_s.at(i, c) - x_s.at(j, c);
            d1 += t * t;
        }
        if (d0 == 0.0) continue;  // coincident plaintext rows
        ratios.push_back(std::sqrt(d1) / std::sqrt(d0));
    }
    if (ratios.empty()) throw std::invalid_argument("distance_distortion: no usable pairs");
    std::sort(ratios.begin(), ratios.end());
    auto quantile = [&](double q) {
        const double idx = q * static_cast<double>(ratios.size() - 1);
        const auto lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, ratios.size() - 1);
        const double frac = idx - static_cast<double>(lo);
        return ratios[lo] * (1.0 - frac) + ratios[hi] * frac;
    };
    return {quantile(0.5), quantile(0.75) - quantile(0.25), ratios.size()};
}

namespace {

// Center columns, then whiten via the covariance eigendecomposition.
// Returns rows x n_comp whitened data. Throws when fewer than n_comp
// directions carry variance.
Matrix center_and_whiten(const Matrix& x_mixed, std::size_t n_comp) {
    const std::size_t rows = x_mixed.rows;
    const std::size_t dim = x_mixed.cols;
    if (rows < n_comp) throw std::invalid_argument("fastica: fewer rows than components");

    Matrix x = x_mixed;
    for (std::size_t c = 0; c < dim; ++c) {
        double mu = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mu += x.at(r, c);
        mu /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) x.at(r, c) -= mu;
    }

    Matrix cov(dim, dim);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t a = 0; a < dim; ++a) {
            const double xa = x.at(r, a);
            if (xa == 0.0) continue;
            for (std::size_t b = 0; b < dim; ++b) cov.at(a, b) += xa * x.at(r, b);
        }
    for (double& v : cov.data) v /= static_cast<double>(rows);
    const EigenSym eig = jacobi_eigen_sym(cov);
    const double lead = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);
    std::size_t usable = 0;
    while (usable < dim && eig.values[usable] > std::max(lead * 1e-12, 1e-300)) ++usable;
    if (usable < n_comp) throw std::invalid_argument("fastica: rank-deficient whitening");

    Matrix whiten(dim, n_comp);
    for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t j = 0; j < n_comp; ++j)
            whiten.at(a, j) = eig.vectors.at(a, j) / std::sqrt(eig.values[j]);
    return matmul(x, whiten);
}

}  // namespace

IcaResult fastica(const Matrix& x_mixed, std::size_t n_comp, int max_iter, double tol,
                  std::uint64_t seed) {
    const std::size_t rows = x_mixed.rows;
    const Matrix z = center_and_whiten(x_mixed, n_comp);

    // Symmetric fixed-point iteration, tanh contrast.
    RngStream rng(seed);
    Matrix w = random_orthonormal(n_comp, rng);
    IcaResult res;
    for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
        Matrix w_new(n_comp, n_comp);
        for (std::size_t c = 0; c < n_comp; ++c) {
            auto wc = w.row(c);
            std::vector<double> acc(n_comp, 0.0);
            double g_prime = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double y = dot(z.row(r), wc);
                const double g = std::tanh(y);
                g_prime += 1.0 - g * g;
                auto zr = z.row(r);
                for (std::size_t j = 0; j < n_comp; ++j) acc[j] += zr[j] * g;
            }
            for (std::size_t j = 0; j < n_comp; ++j)
                w_new.at(c, j) = acc[j] / static_cast<double>(rows) -
                                 g_prime / static_cast<double>(rows) * wc[j];
        }
        // Symmetric decorrelation: W <- (W W^T)^{-1/2} W.
        const Matrix wwt = matmul(w_new, transpose(w_new));
        const EigenSym e2 = jacobi_eigen_sym(wwt);
        Matrix inv_sqrt(n_comp, n_comp);
        for (std::size_t a = 0; a < n_comp; ++a)
            for (std::size_t b = 0; b < n_comp; ++b) {
                double s = 0.0;
                for (std::size_t t = 0; t < n_comp; ++t)
                    s += e2.vectors.at(a, t) * e2.vectors.at(b, t) /
                         std::sqrt(std::max(e2.values[t], 1e-300));
                inv_sqrt.at(a, b) = s;
            }
        Matrix w_next = matmul(inv_sqrt, w_new);
        double delta = 0.0;
        for (std::size_t c = 0; c < n_comp; ++c)
            delta = std::max(delta, std::abs(1.0 - std::abs(dot(w_next.row(c), w.row(c)))));
        w = std::move(w_next);
        if (delta < tol) {
            res.converged = true;
            break;
        }
    }
    res.unmixing = w;
    res.sources = transpose(matmul(z, transpose(w)));  // n_comp x rows
    return res;
}

double hungarian_macs(const Matrix& s_est, const Matrix& s_true) {
    if (s_est.rows != s_true.rows)
        throw std::invalid_argument("hungarian_macs: component count mismatch");
    const std::size_t n = s_est.rows;
    Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ni = l2_norm(s_est.row(i));
        if (ni == 0.0) throw std::invalid_argument("hungarian_macs: zero-norm component");
        for (std::size_t j = 0; j < n; ++j) {
            const double nj = l2_norm(s_true.row(j));
            if (nj == 0.0) throw std::invalid_argument("hungarian_macs: zero-norm component");
            std::size_t len = std::min(s_est.cols, s_true.cols);
            if (s_est.cols != s_true.cols)
                throw std::invalid_argument("hungarian_macs: component length mismatch");
            double d = 0.0;
            for (std::size_t c = 0; c < len; ++c) d += s_est.at(i, c) * s_true.at(j, c);
            cost.at(i, j) = 1.0 - std::abs(d) / (ni * nj);
        }
    }
    const std::vector<std::size_t> assign = hungarian_assignment(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += 1.0 - cost.at(i, assign[i]);
    return total / static_cast<double>(n);
}

double macs_random_baseline(std::size_t n_comp, std::size_t dim, std::size_t trials,
                            RngStream& rng) {
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        Matrix a(n_comp, dim), b(n_comp, dim);
        for (double& v : a.data) v = rng.next_gaussian();
        for (double& v : b.data) v = rng.next_gaussian();
        total += hungarian_macs(a, b);
    }
    return total / static_cast<double>(trials);
}

double macs_random_unmixing_baseline(const Matrix& x_mixed, std::size_t n_comp,
                                     const Matrix& s_true, std::size_t trials,
                                     std::uint64_t seed) {
    const Matrix z = center_and_whiten(x_mixed, n_comp);
    RngStream rng(seed);
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Matrix rot = random_orthonormal(n_comp, rng);
        total += hungarian_macs(transpose(matmul(z, transpose(rot))), s_true);
    }
    return total / static_cast<double>(trials);
}

double vma_probe(const Matrix& vocab_states, const Matrix& scrambled_states,
                 const std::vector<std::size_t>& truth) {
    if (truth.size() != scrambled_states.rows)
        throw std::invalid_argument("vma_probe: truth size mismatch");
    // Precompute sorted coordinates of every vocab row.
    std::vector<std::vector<double>> vocab_sorted(vocab_states.rows);
    for (std::size_t v = 0; v < vocab_states.rows; ++v) {
        auto row = vocab_states.row(v);
        vocab_sorted[v].assign(row.begin(), row.end());
        std::sort(vocab_sorted[v].begin(), vocab_sorted[v].end());
    }
    std::size_t hits = 0;
    std::vector<double> s(scrambled_states.cols);
    for (std::size_t r = 0; r < scrambled_states.rows; ++r) {
        auto row = scrambled_states.row(r);
        s.assign(row.begin(), row.end());
        std::sort(s.begin(), s.end());
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < vocab_states.rows; ++v) {
            double d = 0.0;
            for (std::size_t c = 0; c < s.size(); ++c) d += std::abs(s[c] - vocab_sorted[v][c]);
            if (d < best_d) {
                best_d = d;
                best = v;
            }
        }
        hits += best == truth[r];
    }
    return static_cast<double>(hits) / static_cast<double>(scrambled_states.rows);
}

}  // namespace sdattn::probes
