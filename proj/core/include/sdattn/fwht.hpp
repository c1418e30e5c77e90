#pragma once

#include <cstddef>
#include <span>

#include "sdattn/matrix.hpp"

namespace sdattn {

/// In-place fast Walsh-Hadamard transform, normalized: x <- x * H where H
/// is the Sylvester Hadamard matrix scaled by 1/sqrt(d). H is symmetric and
/// self-inverse, so applying twice recovers the input. Requires
/// power-of-two length.
void fwht_normalized_inplace(std::span<double> x);

std::vector<double> fwht_normalized(std::span<const double> x);

/// Applies the normalized transform to every row.
void fwht_rows_inplace(Matrix& m);

bool is_power_of_two(std::size_t n);

/// Dense normalized Sylvester Hadamard matrix; test/oracle use only.
Matrix dense_hadamard(std::size_t d);

}  // namespace sdattn
