#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sdattn/matrix.hpp"
#include "sdattn/rng.hpp"

namespace sdattn {

/// Bijection on [0, size). forward[i] is where index i lands.
struct Permutation {
    std::vector<std::uint32_t> forward;

    std::size_t size() const { return forward.size(); }
    bool is_identity() const;
    Permutation inverse() const;

    static Permutation identity(std::size_t n);
};

/// Uniform permutation via Fisher-Yates on the stream.
Permutation random_permutation(std::size_t n, RngStream& rng);

/// Scatters coordinates of a row vector: out[forward[i]] = x[i]. This is
/// right-multiplication by the permutation matrix P with P[i][forward[i]]=1.
void permute_scatter(std::span<const double> x, const Permutation& p, std::span<double> out);
/// Gathers: out[i] = x[forward[i]], the inverse of permute_scatter.
void permute_gather(std::span<const double> x, const Permutation& p, std::span<double> out);

/// Row permutations of a matrix: result row forward[i] is m's row i
/// (scatter), or result row i is m's row forward[i] (gather).
Matrix permute_rows_scatter(const Matrix& m, const Permutation& p);
Matrix permute_rows_gather(const Matrix& m, const Permutation& p);

std::vector<double> permute_scatter(const std::vector<double>& x, const Permutation& p);
std::vector<double> permute_gather(const std::vector<double>& x, const Permutation& p);

/// Diagonal scaling with nonzero signed factors (the distance-distorting
/// component of the scrambler).
struct DiagScaling {
    std::vector<double> factors;

    std::size_t size() const { return factors.size(); }
    DiagScaling inverse() const;

    static DiagScaling unit(std::size_t n);
};

/// |factor| log-uniform on [lo, hi], sign +-1 equiprobable.
DiagScaling random_diag_scaling(std::size_t d, double lo, double hi, RngStream& rng);

/// Dense permutation matrix with P[i][forward[i]] = 1; oracle use.
Matrix dense_permutation(const Permutation& p);
Matrix dense_diag(const DiagScaling& s);

}  // namespace sdattn
