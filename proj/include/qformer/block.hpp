#pragma once

// Transformer-block circuits assembled from the score block-encodings and
// the feed-forward overlap oracle.
//
// Every stage returns a post-selected StateVector whose physical object
// (global_scale times the real amplitudes, read column-major with the first
// listed register as the row index) equals the words-mode classical trace of
// the same stage:
//
//   single_head  -> Zh    = Wv_h^T X LambdaTilde_h^T          on (k, i)
//   multi_head   -> Zhat  = Wo^T Zcat                         on (k, h, i)
//   residual     -> Zh' = Zhat + skip * (ones_H (x) X)        on (k, h, i)
//   ffn_pipeline -> W2^T GateTilde                            on (m, i)
//
// LambdaTilde and GateTilde carry the phase-grid and b-bit quantization the
// oracles introduce; the kExact/kWords split in the classical reference
// mirrors exactly that. The attention stages post-select the block-encoding
// ancillas {aidx, data, test, amp, rot}; the residual adds one LCU flag
// qubit whose weighted rotation reproduces the classical addition exactly.

#include <cstdint>

#include "qformer/block_encoding.hpp"
#include "qformer/reference.hpp"
#include "qformer/state.hpp"

namespace qf {

struct StagedState {
  StateVector state;
  double probability = 1.0;
};

// One attention head on registers [k, i] + ancillas: prepares the encoded
// input, applies the (masked) score block-encoding on the position register,
// applies Wv_h^T on the feature register, and post-selects the ancillas.
// Throws NumericError when the post-selection branch vanishes (< 1e-10).
StagedState single_head(const MatD& x, const ModelWeights& w,
                        const ModelDims& dims, int head, bool masked);

// All heads in superposition on registers [k, h, i] + ancillas: a uniform
// head register selects both the head's block-encoding and its value
// projection, one shared ancilla post-selection keeps every head's clean
// branch, and Wo^T acts on the combined (k, h) stream index. With one head
// this reduces to single_head composed with Wo^T.
StagedState multi_head(const MatD& x, const ModelWeights& w,
                       const ModelDims& dims, bool masked);

// Residual add as a two-branch LCU on one flag qubit: branch 0 runs the
// whole multi-head chain, branch 1 keeps the replicated input prepared by
// the shared input encoding, and the flag rotation weights the branches so
// its unprepared zero slice carries Zhat + skip_weight * (ones_H (x) X).
// skip_weight 0 reduces exactly to multi_head; negative weights throw.
StagedState residual(const MatD& x, const ModelWeights& w,
                     const ModelDims& dims, bool masked,
                     double skip_weight = 1.0);

// Physical matrix carried by a state over exactly rows * cols basis states:
// global_scale times the real amplitudes, column-major. Throws ShapeError on
// a dimension mismatch and NumericError when amplitudes are not real.
MatD state_matrix(const StateVector& state, int rows, int cols);

// Word map of the feed-forward oracle: kQuantized stores relu overlap words,
// kLinear stores the signed overlap words with the clamp bypassed (test
// toggle for the linear-regime check).
enum class ReluMode { kQuantized, kLinear };

// Feed-forward pipeline on registers [k, m, i, test, amp, val, rot]: a
// column-norm rotation on i, a uniform neuron register m, the overlap oracle
// writing the (i, m) word onto val, a conditional value rotation, the oracle
// uncompute, post-selection of everything but (m, i), then W2^T on m.
StagedState ffn_pipeline(const MatD& zprime, const ModelWeights& w,
                         const ModelDims& dims,
                         ReluMode relu = ReluMode::kQuantized);

// Stops the pipeline right after the word write and post-selects the work
// registers, leaving the stored-word state on [m, i, val]. The probability
// is the work-register restoration fidelity of the oracle's uncompute.
StagedState ffn_oracle_state(const MatD& zprime, const ModelWeights& w,
                             const ModelDims& dims,
                             ReluMode relu = ReluMode::kQuantized);

// The same stored-word state built directly from classical data: amplitude
// omega_i / sqrt(d_ff) at |m, i, word(i, m)> with omega the column-norm
// profile of zprime and word the b-bit relu overlap word.
StateVector ffn_oracle_shortcut(const MatD& zprime, const ModelWeights& w,
                                const ModelDims& dims);

// Modal val word per (m, i) read from either stored-word state, d_ff x n.
Eigen::MatrixXi stored_relu_words(const StateVector& state,
                                  const ModelDims& dims);

struct Tomography {
  enum class Mode { kExact, kSampled };
  Mode mode = Mode::kExact;
  double delta = 0.01;      // sampled mode: per-entry amplitude precision
  std::uint64_t seed = 1;   // sampled mode: shot stream seed
};

// Entrywise readout of the physical matrix. kExact returns state_matrix;
// kSampled draws ceil(64 / delta^2) shots, estimates each magnitude from
// its count, takes the sign from the true amplitude, and keeps the single
// global scale (the whole matrix is renormalized, never per column).
// Throws NumericError when delta is not positive in sampled mode.
MatD tomography_readout(const StateVector& state, int rows, int cols,
                        const Tomography& tomo);

enum class RunMode { kFullCircuit, kOracleShortcut };

struct BlockRun {
  MatD zprime;  // stream x n, residual output
  MatD f;       // stream x n, block output (input for a stacked block)
  double attention_probability = 1.0;
  double ffn_probability = 1.0;
};

// One whole block. kFullCircuit runs the residual attention circuit, reads
// Zprime off the post-selected state, re-prepares it for the feed-forward
// pipeline, and reads F by tomography; kOracleShortcut evaluates the
// words-mode classical trace (with ReluMode::kLinear, the exact linear
// composition W2hat^T W1^T Zprime). Outputs chain: run.f is the d x n input
// of a block with d = stream. Throws NumericError on an all-zero input.
BlockRun run_block(const MatD& x, const ModelWeights& w,
                   const ModelDims& dims, bool masked, RunMode mode,
                   const Tomography& tomo = {},
                   ReluMode relu = ReluMode::kQuantized);

}  // namespace qf
