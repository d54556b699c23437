#pragma once

// Classical reference of the transformer block realized by the circuits.
// Every quantum pipeline in this library is validated against these dense
// computations. Conventions shared with the circuits:
//
//   - An input sequence is a d x n real matrix X, one column per position.
//   - Scores for one head: Lambda(j, i) = (Wk^T x_j) . (Wq^T x_i); the
//     block-encodings realize Lambda / (n * lambda_hat) with row j keyed to
//     the key side and column i to the query side.
//   - Head output: Z_h = Wv_h^T X Lambda_h^T. Heads stack along rows
//     (head h occupies rows h*r .. h*r + r - 1), then Zhat = Wo^T Zcat.
//   - Residual: Zprime = Zhat + ones_H (Kronecker) X, stacking H copies of
//     the input to match the stream width r*H.
//   - Feed-forward: F = W2hat^T relu(W1^T Zprime), W1 with unit columns,
//     W2hat the left r*H columns of an orthogonal d_ff x d_ff matrix.
//   - Logits: L = Wehat F with Wehat the left r*H columns of an orthogonal
//     vocab x vocab matrix. Per-position loss against target token b reads
//     column c: 1 - (L(b,c) / ||L(:,c)||)^2.
//
// Trainable weights are generated from plane-rotation chains so each
// realized matrix is exactly orthogonal; the flat angle vector is the
// single source of truth for a model.

#include <cstdint>
#include <string>
#include <vector>

#include "qformer/common.hpp"

namespace qf {

struct ModelDims {
  int n = 4;      // sequence length (positions per window)
  int d = 4;      // embedding width
  int p = 4;      // query/key width per head
  int r = 4;      // value width per head
  int heads = 2;  // attention heads
  int d_ff = 8;   // feed-forward width
  int vocab = 8;  // vocabulary size
  int t_bits = 5; // phase-estimation bits in the feed-forward pipeline
  int b_bits = 6; // fixed-point value bits

  static ModelDims d0();
  int stream() const { return r * heads; }
  void validate() const;  // throws ShapeError on an unusable combination
};

struct ParamSegment {
  std::string name;
  int offset = 0;
  int count = 0;
};

// Realized dense weights for one block plus the shared token embedding.
struct ModelWeights {
  std::vector<MatD> wq;  // per head, d x d orthogonal; left d x p block used
  std::vector<MatD> wk;  // per head, d x d orthogonal; left d x p block used
  std::vector<MatD> wv;  // per head, d x d orthogonal; left d x r block used
  MatD wo;               // stream x stream orthogonal
  MatD w1;               // stream x d_ff, unit-norm columns
  MatD w2;               // d_ff x d_ff orthogonal; left stream columns used
  MatD we;               // vocab x vocab orthogonal; left stream columns used
  MatD embed;            // d x vocab, fixed unit-norm columns
};

class ModelParams {
 public:
  ModelParams(ModelDims dims, MatD embed);

  static ModelParams seeded(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<ParamSegment>& segments() const { return segments_; }
  const MatD& embedding() const { return embed_; }

  int angle_count() const { return static_cast<int>(theta_.size()); }
  void set_theta(std::vector<double> theta);
  void set_angle(int index, double value);
  const ParamSegment& segment(const std::string& name) const;

  ModelWeights realize() const;

  std::string to_json() const;
  static ModelParams from_json(const std::string& text);

 private:
  ModelDims dims_;
  std::vector<double> theta_;
  std::vector<ParamSegment> segments_;
  MatD embed_;
};

// Sinusoidal position matrix, d x n: rows 2j / 2j+1 hold sin(i w_j) and
// cos(i w_j) with w_j = 10000^(-2j/d). Every column has norm sqrt(d/2).
MatD ref_positional(int d, int n);

// Scores for one head, n x n: Lambda(j, i) = (wk_hat^T x_j) . (wq_hat^T x_i).
MatD ref_scores(const MatD& x, const MatD& wq, const MatD& wk, int p);

// Mask: entries with column < row are zeroed. A kept entry (j, i) carries
// the score of query position i against key position j with j <= i, so
// queries only see keys at or before their own position.
MatD ref_masked(const MatD& lambda);

// Shared score scale: smallest power of two at least max over heads and
// columns of ||k||^2 and ||q||^2. Cauchy-Schwarz then bounds every score
// by lambda_hat.
double ref_lambda_hat(const MatD& x, const ModelWeights& w, const ModelDims& dims);

struct BlockTrace {
  std::vector<MatD> lambda;  // per head, n x n (masked if requested)
  MatD zcat;                 // stream x n, stacked head outputs
  MatD zhat;                 // stream x n, after the output projection
  MatD zprime;               // stream x n, after the residual
  MatD gate;                 // d_ff x n, relu(W1^T Zprime)
  MatD f;                    // stream x n, block output
  double lambda_hat = 0.0;
};

// Quantization applied to a classical evaluation. Exact keeps real
// arithmetic end to end; Words pushes every attention score and relu value
// through the phase grid and b-bit rounding the circuits use.
enum class EvalMode { kExact, kWords };

BlockTrace ref_block(const MatD& x, const ModelWeights& w, const ModelDims& dims,
                     bool masked, EvalMode mode);

// Logits for a block output, vocab x n.
MatD ref_logits(const MatD& f, const ModelWeights& w, const ModelDims& dims);

// 1 - (normalized logit of `target` at column `column`)^2, in [0, 1].
double ref_loss(const MatD& logits, int column, int target);

}  // namespace qf
