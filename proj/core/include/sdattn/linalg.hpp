#pragma once

#include <vector>

#include "sdattn/matrix.hpp"
#include "sdattn/rng.hpp"

namespace sdattn {

/// Symmetric eigendecomposition by cyclic Jacobi sweeps. Eigenvalues sorted
/// descending; eigenvectors returned as columns in matching order.
struct EigenSym {
    std::vector<double> values;
    Matrix vectors;
};
EigenSym jacobi_eigen_sym(const Matrix& a, int max_sweeps = 64, double tol = 1e-13);

/// Singular values (descending) via the eigenvalues of m^T m.
std::vector<double> singular_values(const Matrix& m);
double condition_number(const Matrix& m);

/// Dense inverse by Gauss-Jordan with partial pivoting; throws on singular.
Matrix invert(const Matrix& m);

/// Minimum-cost perfect assignment (Hungarian, O(n^3) with potentials).
/// Returns col assigned to each row.
std::vector<std::size_t> hungarian_assignment(const Matrix& cost);

/// Random orthonormal n x n matrix (Gram-Schmidt on a seeded Gaussian).
Matrix random_orthonormal(std::size_t n, RngStream& rng);

}  // namespace sdattn
