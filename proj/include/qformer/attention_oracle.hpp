#pragma once

// Coherent attention-score oracle.
//
// A parallel two-branch test loads, per (key index, query index) branch, the
// embedded key state on the test-0 arm and the embedded query state on the
// test-1 arm; after the closing Hadamard the test qubit reads 0 with
// probability sin^2(theta) where the branch overlap is -cos(2 theta). The
// Grover operator G = U C2 U^dag C1 then rotates each branch's invariant
// plane by 2 theta, phase estimation writes the angle onto an amplitude
// register as a t-bit codeword, and a basis-permutation oracle converts the
// codeword into a signed b-bit score word:
//
//   O |i> |j> |0> -> |i> |j> |word(k_i . q_j)>
//
// Keys occupy the first index register and queries the second, matching the
// score matrix orientation score(i, j) = k_i . q_j.

#include <cstdint>
#include <string>
#include <vector>

#include "qformer/common.hpp"
#include "qformer/fixedpoint.hpp"
#include "qformer/layout.hpp"
#include "qformer/state.hpp"

namespace qf {

enum class TestVariant {
  kHadamard,  // single data register; encodes the signed overlap
  kSwap,      // two data registers; encodes the squared overlap
};

// Angle/overlap/codeword bundle: overlap = -cos(2 theta) with theta in
// [0, pi/2]; codeword = round(theta * 2^t / pi) mod 2^t.
struct OverlapAngle {
  double theta = 0.0;
  double overlap = 0.0;
  std::uint64_t codeword = 0;

  static OverlapAngle from_overlap(double overlap, int t_bits);
  static OverlapAngle from_theta(double theta, int t_bits);
};

// Signed fixed-point score word and its classical scale.
struct AttentionScoreWord {
  int word = 0;
  int bits = 2;
  double scale = 1.0;

  double value() const { return dequantize_value(word, bits); }
  double score() const { return value() * scale; }

  static AttentionScoreWord from_score(double score, double scale, int bits);
};

// Unit-norm embedded states on a padded data register. The first p slots
// carry the raw vector scaled by 1/sqrt(lambda_hat); slot p (keys) or slot
// p+1 (queries) absorbs the norm remainder. The pad slots are disjoint
// between the two families, so <kappa_i | chi_j> = (k_i . q_j) / lambda_hat
// exactly. Throws NumericError when lambda_hat is below the squared norm.
VecD scaled_key_state(const VecD& key, double lambda_hat, int slots);
VecD scaled_query_state(const VecD& query, double lambda_hat, int slots);

// Parallel test over all (key, query) branches. The work space is the data
// register(s) plus the test qubit; branch blocks are indexed key + n * query.
struct ParallelTest {
  TestVariant variant = TestVariant::kHadamard;
  int n = 0;
  int data_qubits = 0;
  int work_qubits = 0;
  double lambda_hat = 1.0;
  MatD keys;
  MatD queries;
  std::vector<MatC> branch;

  const MatC& branch_block(int key, int query) const;
  // <kappa_key | chi_query>; the score is this times lambda_hat.
  double branch_overlap(int key, int query) const;
  // Dense matrix over (key reg, query reg, work), key least significant.
  MatC to_matrix() const;
};

// x is the d x n input; u_k and u_q are d x d orthogonal weights whose left
// p columns are the logical projections. lambda_hat must cover every key and
// query squared norm.
ParallelTest build_parallel_test(const MatD& x, const MatD& u_k,
                                 const MatD& u_q, int p, double lambda_hat,
                                 TestVariant variant);

// Grover operator G = U C2 U^dag C1 with C1 = Z on the test qubit and C2 the
// reflection about the work-space zero state, assembled per branch.
struct GroverOperator {
  int n = 0;
  int work_qubits = 0;
  std::vector<MatC> branch;

  const MatC& branch_block(int key, int query) const;
  MatC to_matrix() const;
};

GroverOperator build_grover(const ParallelTest& test);

// Register names an oracle instance is wired to. `work` lists the data
// register(s) followed by the test register, in layout order.
struct OracleWiring {
  std::string key = "i";
  std::string query = "j";
  std::vector<std::string> work = {"data", "test"};
  std::string amp = "amp";
  std::string val = "val";
};

// Branch powers G^c for the phase-estimation multiplexer, indexed
// (key + n * query) + n^2 * c, computed from a Schur factorization per
// branch so every power is exactly unitary.
std::vector<MatC> grover_powers(const GroverOperator& g, int amp_bits);

// The parallel test as one multiplexed step on the named registers.
CircuitStep parallel_test_step(const ParallelTest& test,
                               const OracleWiring& wiring);

// Textbook phase estimation of G over the amp register: Hadamards, the
// codeword-controlled Grover powers, then the inverse Fourier transform.
// Requires amp_bits >= 3.
std::vector<CircuitStep> phase_estimation_steps(const GroverOperator& g,
                                                const OracleWiring& wiring,
                                                int amp_bits);

// XOR-writes the b-bit score word of each amp codeword into the val
// register: value = -cos(2 pi c / 2^amp_bits) quantized to word_bits.
CircuitStep score_word_step(const OracleWiring& wiring, int amp_bits,
                            int word_bits);

StateVector phase_estimate(const GroverOperator& g, StateVector state,
                           const OracleWiring& wiring, int amp_bits);
StateVector apply_score_oracle(StateVector state, const OracleWiring& wiring,
                               int amp_bits, int word_bits);

// Assembled score oracle. The amplitude register is widened to
// max(t_bits, word_bits + 2) so the phase grid stays finer than the word
// grid and the stored word always lands within one word step of the true
// score.
struct ScoreOracle {
  ParallelTest test;
  GroverOperator grover;
  int amp_bits = 0;
  int word_bits = 0;
  OracleWiring wiring;

  RegisterLayout layout() const;
  // Full pipeline: test, phase estimation, word write, then both uncomputes.
  std::vector<CircuitStep> steps() const;
};

ScoreOracle make_score_oracle(ParallelTest test, int t_bits, int word_bits,
                              OracleWiring wiring = {});

// Applies the assembled pipeline to a state prepared over the oracle layout.
StateVector o_attention(StateVector state, const ScoreOracle& oracle);

// Reads the modal stored word per (key, query) branch from an o_attention
// output and dequantizes: entry (i, j) approximates k_i . q_j.
MatD stored_score_matrix(const StateVector& state, const ScoreOracle& oracle);

}  // namespace qf
