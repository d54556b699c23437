#pragma once

// Block-encodings of attention score matrices.
//
// A block-encoding here is a register-named circuit U with one designated
// system register and a set of ancilla registers, such that
//
//   <0|_anc <row| U |col> |0>_anc  =  B(row, col)
//
// where alpha * B approximates the target matrix within epsilon (max-abs,
// entrywise). Applying `steps` to a state whose ancillas are |0> and then
// post-selecting the ancillas back to |0> therefore realizes B on the system
// register, and the state's global_scale tracks the induced norm exactly.
//
// The score encoding follows the amplitude-estimation route: a uniform
// spread over the row-index ancilla, the keyed overlap test, phase
// estimation of its Grover operator, a value rotation keyed on the phase
// codeword, the uncomputation, and a swap that moves the row index into the
// system register. The rotation folds the fixed-point word lookup directly
// into its selector table, which is algebraically identical to writing the
// word into a value register, rotating on it, and unwriting it, but saves
// the register. Encoded matrix: scores Lambda(row = key position, col =
// query position) with alpha = n * lambda_hat. The masked variant forces
// exact zeros where the key position exceeds the query position.

#include <string>
#include <vector>

#include "qformer/attention_oracle.hpp"
#include "qformer/layout.hpp"
#include "qformer/state.hpp"

namespace qf {

struct BlockEncoding {
  RegisterLayout layout;              // system register first, then ancillas
  std::string system;
  std::vector<std::string> ancillas;  // every non-system register, in order
  std::vector<CircuitStep> steps;
  double alpha = 1.0;    // encoded matrix = alpha * <0|U|0> block
  double epsilon = 0.0;  // analytic entrywise error budget

  int ancilla_qubits() const;
};

// Encoding of the n x n score matrix of one head: entry (j, i) holds the
// key-j / query-i score. Registers: system "i" (log2 n qubits), ancillas
// "aidx" (log2 n), "data", "test", "amp" (max(t_bits, b_bits + 2)), "rot".
// With masked = true, entries with query position < key position encode
// exact zeros. alpha = n * lambda_hat, epsilon = alpha * 2^(1 - b_bits).
BlockEncoding block_encode_scores(const MatD& x, const MatD& u_k,
                                  const MatD& u_q, int p, double lambda_hat,
                                  int t_bits, int b_bits, bool masked);

// The fixed-point value the score encoding's rotation applies for one phase
// codeword: the codeword's overlap value requantized to b_bits.
double rotation_value(std::uint64_t codeword, int amp_bits, int b_bits);

// Dense <0|U|0> system block, one column per system basis input.
MatC encoded_block(const BlockEncoding& encoding);

// max-abs of (alpha * block - target); at or below epsilon for a healthy
// encoding of its target.
double verify_block_encoding(const BlockEncoding& encoding,
                             const MatD& target);

// Linear combination by prepare-select-unprepare on one extra selector
// register (appended most significant, width for the term count padded to a
// power of two; padded slots carry zero weight). Terms must share layout and
// system. Weights are nonnegative with a positive sum; the result encodes
//   sum_m weights[m] * B_m   with   alpha = sum_m weights[m],
// where B_m is term m's normalized block, and carries the weighted error
// budget sum_m weights[m] * epsilon_m / alpha_m.
BlockEncoding lcu_combine(const std::vector<BlockEncoding>& terms,
                          const VecD& weights,
                          const std::string& select_name = "mix");

}  // namespace qf
