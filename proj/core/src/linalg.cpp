#include "sdattn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sdattn {

EigenSym jacobi_eigen_sym(const Matrix& a, int max_sweeps, double tol) {
    if (a.rows != a.cols) throw std::invalid_argument("jacobi_eigen_sym: square matrix required");
    const std::size_t n = a.rows;
    Matrix m = a;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double norm = 0.0;
    for (double x : m.data) norm += x * x;
    norm = std::sqrt(norm);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * m.at(p, q) * m.at(p, q);
        if (std::sqrt(off) <= tol * std::max(norm, 1e-300)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (apq == 0.0) continue;
                const double app = m.at(p, p), aqq = m.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return m.at(i, i) > m.at(j, j); });
    EigenSym out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = m.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

std::vector<double> singular_values(const Matrix& m) {
    const Matrix gram = matmul(transpose(m), m);
    EigenSym eig = jacobi_eigen_sym(gram);
    std::vector<double> sv;
    sv.reserve(eig.values.size());
    for (double l : eig.values) sv.push_back(std::sqrt(std::max(l, 0.0)));
    return sv;
}

double condition_number(const Matrix& m) {
    const std::vector<double> sv = singular_values(m);
    if (sv.empty() || sv.back() <= 0.0) return std::numeric_limits<double>::infinity();
    return sv.front() / sv.back();
}

Matrix invert(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("invert: square matrix required");
    const std::size_t n = m.rows;
    Matrix a = m;
    Matrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i) inv.at(i, i) = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        if (a.at(pivot, col) == 0.0) throw std::invalid_argument("invert: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) {
                std::swap(a.at(pivot, c), a.at(col, c));
                std::swap(inv.at(pivot, c), inv.at(col, c));
            }
        }
        const double d = a.at(col, col);
        for (std::size_t c = 0; c < n; ++c) {
            a.at(col, c) /= d;
            inv.at(col, c) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a.at(r, col);
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) {
                a.at(r, c) -= f * a.at(col, c);
                inv.at(r, c) -= f * inv.at(col, c);
            }
        }
    }
    return inv;
}

std::vector<std::size_t> hungarian_assignment(const Matrix& cost) {
    if (cost.rows != cost.cols) throw std::invalid_argument("hungarian: square cost required");
    const std::size_t n = cost.rows;
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials formulation; 1-based internal indexing.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assign(n);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) assign[p[j] - 1] = j - 1;
    return assign;
}

Matrix random_orthonormal(std::size_t n, RngStream& rng) {
    Matrix m(n, n);
    for (double& x : m.data) x = rng.next_gaussian();
    // Gram-Schmidt over rows, retry on (measure-zero) degeneracy.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double d = dot(m.row(i), m.row(j));
            for (std::size_t k = 0; k < n; ++k) m.at(i, k) -= d * m.at(j, k);
        }
        double norm = l2_norm(m.row(i));
        while (norm < 1e-12) {
            for (std::size_t k = 0; k < n; ++k) m.at(i, k) = rng.next_gaussian();
            for (std::size_t j = 0; j < i; ++j) {
                const double d = dot(m.row(i), m.row(j));
                for (std::size_t k = 0; k < n; ++k) m.at(i, k) -= d * m.at(j, k);
            }
            norm = l2_norm(m.row(i));
        }
        for (std::size_t k = 0; k < n; ++k) m.at(i, k) /= norm;
    }
    return m;
}

}  // namespace sdattn
