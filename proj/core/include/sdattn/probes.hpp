#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdattn/matrix.hpp"
#include "sdattn/rng.hpp"
#include "sdattn/scrambler.hpp"

namespace sdattn::probes {

enum class Generator : std::uint8_t { iid_laplace, anisotropic_gaussian, model_states };
std::string to_string(Generator g);

/// Synthetic plaintext rows for the attack probes. The anisotropic
/// generator draws zero-mean Gaussians with covariance eigenvalues
/// lambda_i ~ i^-decay in a random orthonormal basis, mimicking the narrow
/// cone that transformer hidden states occupy.
Matrix iid_laplace_rows(std::size_t rows, std::size_t dim, double scale, RngStream& rng);
Matrix anisotropic_gaussian_rows(std::size_t rows, std::size_t dim, double decay, RngStream& rng);

/// Mean fraction of shared k-nearest-neighbor sets (L2, exact brute force)
/// between the plaintext and scrambled point clouds.
double knn_overlap(const Matrix& x, const Matrix& x_s, std::size_t k);

struct DistortionStats {
    double median = 0.0;
    double iqr = 0.0;
    std::size_t pairs = 0;
};
/// Spread of pairwise-distance ratios d(x'_i, x'_j) / d(x_i, x_j) over
/// sampled pairs; coincident plaintext rows are skipped.
DistortionStats distance_distortion(const Matrix& x, const Matrix& x_s, std::size_t sample_pairs,
                                    RngStream& rng);

struct IcaResult {
    Matrix sources;   // n_comp x rows: recovered source signals
    Matrix unmixing;  // n_comp x dim (in whitened-input coordinates)
    int iterations = 0;
    bool converged = false;
};
/// Symmetric FastICA with tanh contrast: center, whiten via Jacobi
/// eigendecomposition, then fixed-point iteration with symmetric
/// decorrelation. Deterministic for a given seed. Throws if whitening finds
/// fewer usable directions than n_comp.
IcaResult fastica(const Matrix& x_mixed, std::size_t n_comp, int max_iter, double tol,
                  std::uint64_t seed);

/// Hungarian-matched mean absolute cosine similarity between two component
/// sets (rows are components). Invariant under permutation and sign flips
/// of either side; 1.0 iff some signed matching makes every pair collinear.
double hungarian_macs(const Matrix& s_est, const Matrix& s_true);

/// Empirical random-guess baseline for hungarian_macs at the given shape
/// (independent Gaussian components on both sides).
double macs_random_baseline(std::size_t n_comp, std::size_t dim, std::size_t trials,
                            RngStream& rng);

/// Random-guess baseline grounded in the observed data: the attacker whitens
/// the mixture like ICA would, then applies a random unmixing rotation
/// instead of the optimized one. The ICA score being within noise of this
/// says the optimization step bought nothing.
double macs_random_unmixing_baseline(const Matrix& x_mixed, std::size_t n_comp,
                                     const Matrix& s_true, std::size_t trials,
                                     std::uint64_t seed);

/// Vocabulary-collision probe: nearest vocab row under sorted-coordinate L1
/// distance; hit rate against the harness-held ground truth.
double vma_probe(const Matrix& vocab_states, const Matrix& scrambled_states,
                 const std::vector<std::size_t>& truth);

}  // namespace sdattn::probes
