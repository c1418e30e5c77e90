#include "sdattn/fwht.hpp"

#include <cmath>
#include <stdexcept>

namespace sdattn {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fwht_normalized_inplace(std::span<double> x) {
    const std::size_t n = x.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fwht: length must be a power of two");
    // Butterfly: adds/subtracts only, then one global scale.
    for (std::size_t half = 1; half < n; half <<= 1) {
        for (std::size_t base = 0; base < n; base += half << 1) {
            for (std::size_t i = base; i < base + half; ++i) {
                const double a = x[i];
                const double b = x[i + half];
                x[i] = a + b;
                x[i + half] = a - b;
            }
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : x) v *= scale;
}

std::vector<double> fwht_normalized(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    fwht_normalized_inplace(out);
    return out;
}

void fwht_rows_inplace(Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) fwht_normalized_inplace(m.row(r));
}

Matrix dense_hadamard(std::size_t d) {
    if (!is_power_of_two(d)) throw std::invalid_argument("dense_hadamard: d must be a power of two");
    Matrix h(d, d);
    // H[i][j] = (-1)^popcount(i & j), Sylvester construction.
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            h.at(i, j) = (__builtin_popcountll(i & j) & 1) ? -scale : scale;
    return h;
}

}  // namespace sdattn
