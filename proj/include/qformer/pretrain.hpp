#pragma once

// Character-level next-token pretraining of one transformer block, plus the
// measurement-driven loss and greedy decoding that read a trained model.
//
// Tokenization is byte-level: the vocabulary lists the distinct bytes of the
// corpus in first-appearance order and reserves the last vocabulary slot as
// the pad token. A training window holds a fixed span of consecutive tokens
// placed in the columns just before the readout column n - 1, which always
// carries the pad token; unused leading columns are pad-filled. The readout
// column is trained to predict the token that follows the window. Forwards
// run unmasked: under the keyed score convention the readout column gathers
// the context columns through its own fixed key against their queries, and
// the predicted token never appears in the window, so nothing leaks.
//
// The loss is the Born-rule next-token overlap: after the vocabulary
// rotation, 1 minus the conditional probability of measuring the target
// token on the neuron register given the readout position on the position
// register. On a state prepared from a classical block output this equals
// the normalized-logit loss of the dense reference exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "qformer/block.hpp"
#include "qformer/reference.hpp"
#include "qformer/state.hpp"

namespace qf {

// Byte corpus with its induced vocabulary. Ids follow first appearance;
// the last vocabulary slot is the reserved pad token, so a corpus may use
// at most vocab_size - 1 distinct bytes.
struct Corpus {
  std::string text;
  std::vector<unsigned char> vocab;  // distinct bytes, id order
  std::vector<int> token_ids;        // one id per byte of text
  int vocab_size = 0;

  // Throws ShapeError when the text needs more than vocab_size - 1 ids.
  static Corpus from_text(const std::string& text, int vocab_size);
  // Reads the file as raw bytes; throws IoError when it cannot be read.
  static Corpus from_file(const std::string& path, int vocab_size);

  int pad_id() const { return vocab_size - 1; }
  // Throws ShapeError for a byte outside the vocabulary.
  int id_of(unsigned char byte) const;
  // Throws ShapeError for the pad id or an id without a byte.
  unsigned char byte_of(int id) const;
};

// d x n input matrix for one token window: column j holds the embedding
// column of its token plus position column j. The window occupies the last
// columns before the readout column n - 1, which always carries the pad
// token; unused leading columns are pad-filled. Throws ShapeError when the
// window exceeds n - 1 tokens or an id falls outside the embedding.
MatD window_input(const std::vector<int>& window, int pad_id,
                  const MatD& embed, const ModelDims& dims);

// Applies the orthogonal vocabulary rotation to the neuron register m, so a
// state carrying the block output F on (m, i) carries W_E F. The rotation
// must exactly fill the register: vocab = 2^width(m). Throws ShapeError on
// a width shortfall and NumericError on a non-orthogonal matrix.
StateVector apply_vocab_projection(StateVector state, const MatD& we);

// The projected logits state built from a classical block output f
// (stream x n): prepares f zero-padded to d_ff rows on registers (m, i),
// then applies the vocabulary rotation. Its physical matrix equals
// ref_logits(f, w, dims) exactly. Requires vocab = d_ff.
StateVector logits_state(const MatD& f, const ModelWeights& w,
                         const ModelDims& dims);

// How overlap_loss turns a state into probabilities: exact reads the Born
// probabilities off the amplitudes; sampled estimates them from `shots`
// seeded measurement draws of (m, i).
struct LossSampling {
  enum class Mode { kExact, kSampled };
  Mode mode = Mode::kExact;
  std::uint64_t shots = 100000;
  std::uint64_t seed = 1;
};

// Next-token loss read off a projected logits state:
// 1 - P(m = target | i = t_index + 1). Conditioning on the readout position
// corrects for the weight the state assigns to the other columns, so the
// result lies in [0, 1] and matches ref_loss(ref_logits(f, ...), t_index + 1,
// target) to machine precision on logits_state(f, ...). Throws ShapeError
// when t_index + 1 is not a position of register i or target is not a value
// of register m, and NumericError when the readout position carries no
// probability (or, in sampled mode, receives no shots).
double overlap_loss(const StateVector& state, int t_index, int target_id,
                    const LossSampling& sampling = {});

// Gradient source for training. Finite differences sweep every angle with
// central steps; SPSA estimates the whole gradient from one seeded
// two-sided Rademacher perturbation per iteration.
enum class Optimizer { kFiniteDiff, kSpsa };

// Training run description. `mode` selects the forward that scores a
// window: kOracleShortcut evaluates the dense reference exactly (the
// word-quantized forward is piecewise constant in the angles, so its finite
// differences vanish almost everywhere), kFullCircuit runs the staged block
// circuit and reads the loss off the projected state; circuit forwards cost
// seconds per window, so they pair with kSpsa in practice.
struct TrainConfig {
  double learning_rate = 0.05;
  int iterations = 100;
  int batch_span = 3;  // context tokens per window, in [1, n - 1]
  std::uint64_t seed = 42;
  Optimizer optimizer = Optimizer::kFiniteDiff;
  RunMode mode = RunMode::kOracleShortcut;
  double fd_step = 1e-3;       // central-difference half step
  double spsa_step = 0.05;     // Rademacher perturbation half step
  double gradient_clip = 2.0;  // gradient-norm cap per update; 0 disables
};

struct TrainResult {
  // Cumulative loss (summed over all windows) before training and after
  // every iteration; size iterations + 1.
  std::vector<double> losses;
  ModelParams params;
};

// Gradient descent on every model angle against the summed window losses.
// Windows slide one token at a time, so a corpus of T tokens yields
// T - batch_span windows; the model starts from ModelParams::seeded with the
// config seed and the embedding stays fixed. Deterministic for a fixed
// config: finite differences are exact sweeps and the SPSA stream is seeded.
// Throws ShapeError when batch_span is outside [1, n - 1], the corpus has
// fewer than batch_span + 1 tokens, or the corpus vocabulary size differs
// from dims.vocab.
TrainResult train(const Corpus& corpus, const ModelDims& dims,
                  const TrainConfig& config);

// A trained model bundles the angles with the tokenizer's byte table so
// decoding needs no corpus file. JSON form round-trips losslessly.
struct TrainedModel {
  ModelParams params;
  std::vector<unsigned char> vocab;  // distinct bytes, id order

  std::string to_json() const;
  // Throws IoError on malformed text.
  static TrainedModel from_json(const std::string& text);
};

// Column `column` argmax over non-pad rows by logit magnitude, smallest row
// on ties. The magnitude order is what a measurement of the projected state
// ranks, so the result is invariant under any positive rescaling of the
// logits. Throws ShapeError on an out-of-range column.
int argmax_token(const MatD& logits, int column, int pad_id);

// Greedy decoding: each step builds the window of the last n - 1 generated
// tokens (left-padded), runs the forward in the given mode, and appends the
// vocabulary byte of the most probable readout-column measurement outcome
// (pad never decodes). Deterministic: both modes read exact probabilities.
// steps = 0 returns the prompt unchanged. Throws ShapeError when the prompt
// contains a byte outside the model vocabulary.
std::string generate(const TrainedModel& model, const std::string& prompt,
                     int steps, RunMode mode = RunMode::kOracleShortcut);

}  // namespace qf
