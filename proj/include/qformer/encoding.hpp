#pragma once

// Amplitude encodings of real matrices over a (data, index) register pair.
//
// A d x n matrix X is encoded as the state sum_{k,i} X(k,i)|i>|k> divided by
// ||X||_F, i.e. amplitudes laid out on registers [data, index] with data
// least significant. The Frobenius norm is tracked classically through
// StateVector::global_scale, so the physical object the state represents is
// exactly X.

#include <string>
#include <utility>

#include "qformer/state.hpp"

namespace qf {

// Controlled state preparation: for every index value i, maps |i>|0> to
// |i>|columns.col(i) normalized>. Columns with (near-)zero norm prepare the
// first basis vector instead; such columns only ever appear with zero
// weight. Acts on [data, index], data least significant; the number of rows
// and columns must both be powers of two.
UnitaryOp build_cqsp(const MatD& columns);

// Unitary taking |0>|0> to the encoded state of x: a column-weight rotation
// on the index register followed by build_cqsp of the normalized columns.
// Throws NumericError when ||x||_F = 0.
UnitaryOp matrix_prep_unitary(const MatD& x);

// Unitary taking |0>|0> to the encoded state of the sinusoidal position
// matrix (see ref_positional): a basis flip plus uniform superpositions,
// then one rotation on the low data qubit for every (row pair, position).
// Every column of the position matrix has norm sqrt(d/2), so the encoding
// is exact with no post-selection.
UnitaryOp positional_prep_unitary(int d, int n);

// Applies matrix_prep_unitary to the named registers of a freshly zeroed
// pair and multiplies global_scale by ||x||_F, so the state represents x.
StateVector prepare_matrix_state(const MatD& x, StateVector state,
                                 const std::string& data_reg,
                                 const std::string& index_reg);

// Same for the position matrix; the scale picks up sqrt(n * d / 2).
StateVector prepare_positional_state(int d, int n, StateVector state,
                                     const std::string& data_reg,
                                     const std::string& index_reg);

// Encodes x plus the position matrix by a two-branch weighted sum: a
// rotation on `mix_reg` splits the amplitude between the two preparation
// unitaries, the branches are applied controlled on it, and the rotation is
// undone. Post-selecting the mixer on |0> leaves the encoded state of
// x + positions; the returned probability is that branch's weight and the
// scale ends at ||x + positions||_F. Throws NumericError when the sum
// cancels to zero norm.
std::pair<StateVector, double> prepare_summed_state(const MatD& x,
                                                    StateVector state,
                                                    const std::string& data_reg,
                                                    const std::string& index_reg,
                                                    const std::string& mix_reg);

}  // namespace qf
