#include "qformer/block.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qformer/attention_oracle.hpp"
#include "qformer/encoding.hpp"
#include "qformer/fixedpoint.hpp"
#include "qformer/linalg.hpp"

namespace qf {

namespace {

int exact_log2(int value, const char* what) {
  if (value <= 0 || (value & (value - 1)) != 0) {
    throw ShapeError(std::string(what) + " must be a power of two");
  }
  int bits = 0;
  while ((1 << bits) < value) ++bits;
  return bits;
}

MatC hadamard_spread(int qubits) {
  MatC h(2, 2);
  const double r = 1.0 / std::sqrt(2.0);
  h << r, r, r, -r;
  MatC out = MatC::Identity(1, 1);
  for (int q = 0; q < qubits; ++q) out = kron(h, out);
  return out;
}

MatC xor_permutation(std::uint64_t pattern, int bits) {
  const Eigen::Index dim = Eigen::Index{1} << bits;
  MatC out = MatC::Zero(dim, dim);
  for (Eigen::Index x = 0; x < dim; ++x) {
    out(static_cast<Eigen::Index>(static_cast<std::uint64_t>(x) ^ pattern),
        x) = 1.0;
  }
  return out;
}

MatC value_rotation(double value) {
  const double rest = std::sqrt(std::max(0.0, 1.0 - value * value));
  MatC rot(2, 2);
  rot << value, -rest, rest, value;
  return rot;
}

// Shared skeleton of multi_head and residual: every step after the input
// encoding and the head spread, so the residual can gate the whole chain on
// its flag qubit while multi_head applies it directly.
struct AttentionChain {
  std::vector<Register> registers;  // k, h, i, then the encoding ancillas
  std::vector<CircuitStep> steps;
  std::vector<std::string> ancillas;
  double alpha = 0.0;
  int head_qubits = 0;
};

AttentionChain build_attention_chain(const MatD& x, const ModelWeights& w,
                                     const ModelDims& dims, bool masked) {
  dims.validate();
  if (x.rows() != dims.d || x.cols() != dims.n) {
    throw ShapeError("block input must be d x n");
  }
  const double lambda_hat = ref_lambda_hat(x, w, dims);
  AttentionChain chain;
  chain.head_qubits = exact_log2(dims.heads, "head count");

  std::vector<BlockEncoding> encodings;
  encodings.reserve(dims.heads);
  for (int h = 0; h < dims.heads; ++h) {
    encodings.push_back(block_encode_scores(x, w.wk[h], w.wq[h], dims.p,
                                            lambda_hat, dims.t_bits,
                                            dims.b_bits, masked));
  }
  chain.alpha = encodings.front().alpha;
  chain.ancillas = encodings.front().ancillas;

  chain.registers.push_back({"k", exact_log2(dims.d, "embedding width")});
  chain.registers.push_back({"h", chain.head_qubits});
  for (const Register& reg : encodings.front().layout.registers()) {
    chain.registers.push_back(reg);
  }

  const std::size_t head_dim = std::size_t{1} << chain.head_qubits;
  for (int h = 0; h < dims.heads; ++h) {
    for (CircuitStep& step : encodings[h].steps) {
      chain.steps.push_back(controlled_on_value(
          std::move(step), "h", head_dim, static_cast<std::uint64_t>(h)));
    }
  }

  CircuitStep value;
  value.targets = {"k"};
  value.selectors = {"h"};
  for (int h = 0; h < dims.heads; ++h) {
    value.blocks.push_back(MatC(w.wv[h].transpose().cast<cplx>()));
  }
  chain.steps.push_back(std::move(value));
  chain.steps.push_back(
      plain_step(MatC(w.wo.transpose().cast<cplx>()), {"k", "h"}));
  return chain;
}

// Preparation plus the word-writing oracle of the feed-forward stage.
struct FfnOracle {
  std::vector<Register> registers;  // k, m, i, test, amp, val, rot
  std::vector<CircuitStep> prep;
  std::vector<CircuitStep> oracle;
  double znorm = 0.0;
};

FfnOracle build_ffn_oracle(const MatD& zprime, const ModelWeights& w,
                           const ModelDims& dims, ReluMode relu) {
  dims.validate();
  const int stream = dims.stream();
  if (zprime.rows() != stream || zprime.cols() != dims.n) {
    throw ShapeError("feed-forward input must be stream x n");
  }
  FfnOracle out;
  out.znorm = zprime.norm();
  if (!(out.znorm > 0.0)) {
    throw NumericError("feed-forward input must be nonzero");
  }
  const int stream_qubits = exact_log2(stream, "stream width");
  const int neuron_qubits = exact_log2(dims.d_ff, "feed-forward width");
  const int index_qubits = exact_log2(dims.n, "sequence length");
  out.registers = {{"k", stream_qubits}, {"m", neuron_qubits},
                   {"i", index_qubits},  {"test", 1},
                   {"amp", dims.t_bits}, {"val", dims.b_bits},
                   {"rot", 1}};

  // Two-branch overlap test per (position, neuron): the test-0 arm loads the
  // normalized residual column, the test-1 arm the neuron direction. Zero
  // columns load the identity; they only appear with zero column weight.
  ParallelTest test;
  test.variant = TestVariant::kHadamard;
  test.n = dims.n;
  test.data_qubits = stream_qubits;
  test.work_qubits = stream_qubits + 1;
  test.lambda_hat = 1.0;
  test.keys = MatD::Zero(stream, dims.n);
  for (int i = 0; i < dims.n; ++i) {
    const double norm = zprime.col(i).norm();
    if (norm > 0.0) test.keys.col(i) = zprime.col(i) / norm;
  }
  test.queries = w.w1;
  const MatC mixer = kron(hadamard_spread(1), MatC::Identity(stream, stream));
  test.branch.reserve(static_cast<std::size_t>(dims.n) * dims.d_ff);
  for (int m = 0; m < dims.d_ff; ++m) {
    const MatD neuron_basis = complete_orthogonal(w.w1.col(m));
    for (int i = 0; i < dims.n; ++i) {
      MatC split = MatC::Zero(2 * stream, 2 * stream);
      if (test.keys.col(i).norm() > 0.0) {
        split.topLeftCorner(stream, stream) =
            complete_orthogonal(VecD(test.keys.col(i))).cast<cplx>();
      } else {
        split.topLeftCorner(stream, stream) =
            MatC::Identity(stream, stream);
      }
      split.bottomRightCorner(stream, stream) = neuron_basis.cast<cplx>();
      test.branch.push_back(mixer * split * mixer);
    }
  }

  OracleWiring wiring;
  wiring.key = "i";
  wiring.query = "m";
  wiring.work = {"k", "test"};
  wiring.amp = "amp";
  wiring.val = "val";

  const GroverOperator grover = build_grover(test);
  const CircuitStep load = parallel_test_step(test, wiring);
  const std::vector<CircuitStep> pe =
      phase_estimation_steps(grover, wiring, dims.t_bits);

  CircuitStep word;
  word.targets = {"val"};
  word.selectors = {"amp"};
  const std::uint64_t amp_dim = std::uint64_t{1} << dims.t_bits;
  for (std::uint64_t c = 0; c < amp_dim; ++c) {
    double value = value_from_codeword(c, dims.t_bits);
    if (relu == ReluMode::kQuantized) value = std::max(0.0, value);
    word.blocks.push_back(xor_permutation(
        encode_word(quantize_value(value, dims.b_bits), dims.b_bits),
        dims.b_bits));
  }

  out.oracle.push_back(load);
  out.oracle.insert(out.oracle.end(), pe.begin(), pe.end());
  out.oracle.push_back(std::move(word));
  const std::vector<CircuitStep> unpe = adjoint_steps(pe);
  out.oracle.insert(out.oracle.end(), unpe.begin(), unpe.end());
  out.oracle.push_back(adjoint_step(load));

  VecD omega(dims.n);
  for (int i = 0; i < dims.n; ++i) omega[i] = zprime.col(i).norm() / out.znorm;
  out.prep.push_back(
      plain_step(complete_orthogonal(omega).cast<cplx>(), {"i"}));
  out.prep.push_back(plain_step(hadamard_spread(neuron_qubits), {"m"}));
  return out;
}

int ffn_relu_word(const VecD& column, const VecD& neuron, int t_bits,
                  int b_bits) {
  const double norm = column.norm();
  if (!(norm > 0.0)) return 0;
  const double overlap = std::clamp(neuron.dot(column) / norm, -1.0, 1.0);
  const std::uint64_t code =
      codeword_from_theta(theta_from_overlap(overlap), t_bits);
  const double value = std::max(0.0, value_from_codeword(code, t_bits));
  return quantize_value(value, b_bits);
}

}  // namespace

StagedState single_head(const MatD& x, const ModelWeights& w,
                        const ModelDims& dims, int head, bool masked) {
  dims.validate();
  if (head < 0 || head >= dims.heads) {
    throw ShapeError("head index out of range");
  }
  if (x.rows() != dims.d || x.cols() != dims.n) {
    throw ShapeError("block input must be d x n");
  }
  const double lambda_hat = ref_lambda_hat(x, w, dims);
  BlockEncoding enc =
      block_encode_scores(x, w.wk[head], w.wq[head], dims.p, lambda_hat,
                          dims.t_bits, dims.b_bits, masked);

  std::vector<Register> registers;
  registers.push_back({"k", exact_log2(dims.d, "embedding width")});
  for (const Register& reg : enc.layout.registers()) registers.push_back(reg);

  StateVector state = zero_state(RegisterLayout(registers));
  state = prepare_matrix_state(x, std::move(state), "k", "i");
  state = apply_steps(std::move(state), enc.steps);
  state = apply_unitary(
      std::move(state),
      UnitaryOp::from_matrix(MatC(w.wv[head].transpose().cast<cplx>())),
      {"k"});
  auto kept = post_select_zero(std::move(state), enc.ancillas);
  if (kept.second < 1e-10) {
    throw NumericError("attention post-selection vanished");
  }
  kept.first.global_scale *= enc.alpha;
  return {std::move(kept.first), kept.second};
}

StagedState multi_head(const MatD& x, const ModelWeights& w,
                       const ModelDims& dims, bool masked) {
  AttentionChain chain = build_attention_chain(x, w, dims, masked);
  StateVector state = zero_state(RegisterLayout(chain.registers));
  state = prepare_matrix_state(x, std::move(state), "k", "i");
  if (chain.head_qubits > 0) {
    state = apply_unitary(std::move(state),
                          UnitaryOp::from_matrix(
                              hadamard_spread(chain.head_qubits)),
                          {"h"});
  }
  state = apply_steps(std::move(state), chain.steps);
  auto kept = post_select_zero(std::move(state), chain.ancillas);
  if (kept.second < 1e-10) {
    throw NumericError("attention post-selection vanished");
  }
  kept.first.global_scale *=
      chain.alpha * std::sqrt(static_cast<double>(dims.heads));
  return {std::move(kept.first), kept.second};
}

StagedState residual(const MatD& x, const ModelWeights& w,
                     const ModelDims& dims, bool masked, double skip_weight) {
  if (skip_weight < 0.0) {
    throw NumericError("residual skip weight must be nonnegative");
  }
  AttentionChain chain = build_attention_chain(x, w, dims, masked);
  std::vector<Register> registers = chain.registers;
  registers.push_back({"rho", 1});

  StateVector state = zero_state(RegisterLayout(registers));
  state = prepare_matrix_state(x, std::move(state), "k", "i");
  if (chain.head_qubits > 0) {
    state = apply_unitary(std::move(state),
                          UnitaryOp::from_matrix(
                              hadamard_spread(chain.head_qubits)),
                          {"h"});
  }

  // Branch weights: the attention arm carries weight alpha and the skip arm
  // skip_weight (the shared sqrt(H) * ||X|| input norm cancels in the ratio),
  // so the unprepared flag's zero slice is
  // vec(Zhat + skip_weight * replicated X) / (sqrt(H) * ||X|| * total).
  const double root_heads = std::sqrt(static_cast<double>(dims.heads));
  const double total = chain.alpha + skip_weight;
  const double c0 = std::sqrt(chain.alpha / total);
  const double c1 = std::sqrt(skip_weight / total);
  MatC flag(2, 2);
  flag << c0, -c1, c1, c0;

  state = apply_unitary(std::move(state), UnitaryOp::from_matrix(flag),
                        {"rho"});
  for (const CircuitStep& step : chain.steps) {
    state = apply_step(std::move(state), controlled_on_zero(step, "rho", 2));
  }
  state = apply_unitary(std::move(state),
                        UnitaryOp::from_matrix(MatC(flag.adjoint())),
                        {"rho"});

  std::vector<std::string> ancillas = chain.ancillas;
  ancillas.push_back("rho");
  auto kept = post_select_zero(std::move(state), ancillas);
  if (kept.second < 1e-10) {
    throw NumericError("residual post-selection vanished");
  }
  kept.first.global_scale *= root_heads * total;
  return {std::move(kept.first), kept.second};
}

MatD state_matrix(const StateVector& state, int rows, int cols) {
  const std::size_t expected =
      static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rows <= 0 || cols <= 0 || state.dimension() != expected) {
    throw ShapeError("state dimension does not match the requested matrix");
  }
  MatD out(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      const cplx amp =
          state.amplitudes[static_cast<std::size_t>(c) * rows + r];
      if (std::abs(amp.imag()) > 1e-8) {
        throw NumericError("state amplitudes are not real");
      }
      out(r, c) = state.global_scale * amp.real();
    }
  }
  return out;
}

StagedState ffn_pipeline(const MatD& zprime, const ModelWeights& w,
                         const ModelDims& dims, ReluMode relu) {
  FfnOracle ffn = build_ffn_oracle(zprime, w, dims, relu);
  StateVector state = zero_state(RegisterLayout(ffn.registers));
  state = apply_steps(std::move(state), ffn.prep);
  state = apply_steps(std::move(state), ffn.oracle);

  CircuitStep rotate;
  rotate.targets = {"rot"};
  rotate.selectors = {"val"};
  const std::uint64_t val_dim = std::uint64_t{1} << dims.b_bits;
  for (std::uint64_t raw = 0; raw < val_dim; ++raw) {
    rotate.blocks.push_back(value_rotation(
        dequantize_value(decode_word(raw, dims.b_bits), dims.b_bits)));
  }
  state = apply_step(std::move(state), rotate);
  state = apply_steps(std::move(state), adjoint_steps(ffn.oracle));

  auto kept = post_select_zero(std::move(state),
                               {"k", "test", "amp", "val", "rot"});
  if (kept.second < 1e-10) {
    throw NumericError("feed-forward post-selection vanished");
  }
  kept.first.global_scale *=
      ffn.znorm * std::sqrt(static_cast<double>(dims.d_ff));
  kept.first = apply_unitary(
      std::move(kept.first),
      UnitaryOp::from_matrix(MatC(w.w2.transpose().cast<cplx>())), {"m"});
  return {std::move(kept.first), kept.second};
}

StagedState ffn_oracle_state(const MatD& zprime, const ModelWeights& w,
                             const ModelDims& dims, ReluMode relu) {
  FfnOracle ffn = build_ffn_oracle(zprime, w, dims, relu);
  StateVector state = zero_state(RegisterLayout(ffn.registers));
  state = apply_steps(std::move(state), ffn.prep);
  state = apply_steps(std::move(state), ffn.oracle);
  auto kept = post_select_zero(std::move(state), {"k", "test", "amp", "rot"});
  return {std::move(kept.first), kept.second};
}

StateVector ffn_oracle_shortcut(const MatD& zprime, const ModelWeights& w,
                                const ModelDims& dims) {
  dims.validate();
  const int stream = dims.stream();
  if (zprime.rows() != stream || zprime.cols() != dims.n) {
    throw ShapeError("feed-forward input must be stream x n");
  }
  const double znorm = zprime.norm();
  if (!(znorm > 0.0)) {
    throw NumericError("feed-forward input must be nonzero");
  }
  RegisterLayout layout{{"m", exact_log2(dims.d_ff, "feed-forward width")},
                        {"i", exact_log2(dims.n, "sequence length")},
                        {"val", dims.b_bits}};
  StateVector state = zero_state(layout);
  std::fill(state.amplitudes.begin(), state.amplitudes.end(), cplx{0.0, 0.0});
  const double spread = 1.0 / std::sqrt(static_cast<double>(dims.d_ff));
  for (int i = 0; i < dims.n; ++i) {
    const double omega = zprime.col(i).norm() / znorm;
    if (!(omega > 0.0)) continue;
    for (int m = 0; m < dims.d_ff; ++m) {
      const int word = ffn_relu_word(VecD(zprime.col(i)), VecD(w.w1.col(m)),
                                     dims.t_bits, dims.b_bits);
      const std::size_t basis = layout.basis_index(
          {{"m", static_cast<std::uint64_t>(m)},
           {"i", static_cast<std::uint64_t>(i)},
           {"val", encode_word(word, dims.b_bits)}});
      state.amplitudes[basis] = omega * spread;
    }
  }
  return state;
}

Eigen::MatrixXi stored_relu_words(const StateVector& state,
                                  const ModelDims& dims) {
  Eigen::MatrixXi words(dims.d_ff, dims.n);
  for (int m = 0; m < dims.d_ff; ++m) {
    for (int i = 0; i < dims.n; ++i) {
      const std::vector<double> dist = measure_distribution_where(
          state, "val",
          {{"m", static_cast<std::uint64_t>(m)},
           {"i", static_cast<std::uint64_t>(i)}});
      const std::size_t modal = static_cast<std::size_t>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
      words(m, i) = decode_word(modal, dims.b_bits);
    }
  }
  return words;
}

MatD tomography_readout(const StateVector& state, int rows, int cols,
                        const Tomography& tomo) {
  if (tomo.mode == Tomography::Mode::kExact) {
    return state_matrix(state, rows, cols);
  }
  if (!(tomo.delta > 0.0)) {
    throw NumericError("tomography precision must be positive");
  }
  const std::size_t expected =
      static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rows <= 0 || cols <= 0 || state.dimension() != expected) {
    throw ShapeError("state dimension does not match the requested matrix");
  }
  const auto shots = static_cast<std::uint64_t>(
      std::ceil(64.0 / (tomo.delta * tomo.delta)));

  std::vector<double> cumulative(state.dimension());
  double running = 0.0;
  for (std::size_t b = 0; b < state.dimension(); ++b) {
    running += std::norm(state.amplitudes[b]);
    cumulative[b] = running;
  }
  std::vector<std::uint64_t> counts(state.dimension(), 0);
  Rng rng(tomo.seed);
  for (std::uint64_t s = 0; s < shots; ++s) {
    const double u = rng.uniform() * running;
    const auto it =
        std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t b = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(
                                     state.dimension() - 1)));
    ++counts[b];
  }

  MatD out(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      const std::size_t b = static_cast<std::size_t>(c) * rows + r;
      const double magnitude = std::sqrt(static_cast<double>(counts[b]) /
                                         static_cast<double>(shots));
      const double sign = state.amplitudes[b].real() < 0.0 ? -1.0 : 1.0;
      out(r, c) = state.global_scale * sign * magnitude;
    }
  }
  return out;
}

BlockRun run_block(const MatD& x, const ModelWeights& w,
                   const ModelDims& dims, bool masked, RunMode mode,
                   const Tomography& tomo, ReluMode relu) {
  dims.validate();
  if (x.rows() != dims.d || x.cols() != dims.n) {
    throw ShapeError("block input must be d x n");
  }
  if (!(x.norm() > 0.0)) {
    throw NumericError("block input must be nonzero");
  }
  BlockRun run;
  if (mode == RunMode::kOracleShortcut) {
    const BlockTrace trace = ref_block(x, w, dims, masked, EvalMode::kWords);
    run.zprime = trace.zprime;
    if (relu == ReluMode::kLinear) {
      run.f = w.w2.leftCols(dims.stream()).transpose() *
              (w.w1.transpose() * trace.zprime);
    } else {
      run.f = trace.f;
    }
    return run;
  }
  const StagedState attended = residual(x, w, dims, masked);
  run.attention_probability = attended.probability;
  run.zprime = state_matrix(attended.state, dims.stream(), dims.n);
  const StagedState gated = ffn_pipeline(run.zprime, w, dims, relu);
  run.ffn_probability = gated.probability;
  const MatD full = tomography_readout(gated.state, dims.d_ff, dims.n, tomo);
  run.f = full.topRows(dims.stream());
  return run;
}

}  // namespace qf
