#pragma once

// Small dense linear-algebra helpers shared by circuit builders.

#include <vector>

#include "qformer/common.hpp"

namespace qf {

// e^{-i t H} for Hermitian H, via eigendecomposition. Throws NumericError if
// H is not Hermitian within tol.
MatC expm_hermitian(const MatC& hamiltonian, double t, double tol = 1e-10);

// Real orthogonal completion: an N x N orthogonal matrix whose first column
// equals the given unit vector. Built from a Householder reflection, so the
// result is deterministic in the input. Throws NumericError if the column is
// not unit within 1e-9.
MatD complete_orthogonal(const VecD& first_column);

// Block-diagonal matrix diag(blocks[0], ..., blocks[m-1]); all blocks must be
// square and equally sized. Ordering matches a layout where the register the
// blocks are keyed on is MORE significant than the register they act on.
MatC block_diag(const std::vector<MatC>& blocks);

// Kronecker product a (x) b: index pairing (i_a, i_b) -> i_a * dim(b) + i_b,
// i.e. the b factor occupies the less significant bits.
MatC kron(const MatC& a, const MatC& b);

// True if U U^dagger = I within tol (max absolute entry deviation).
bool is_unitary(const MatC& u, double tol);

// Max absolute entry of a matrix.
double max_abs(const MatC& m);

}  // namespace qf
