#include "qformer/attention_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Eigenvalues>

#include "qformer/linalg.hpp"

namespace qf {

namespace {

int ceil_log2(int value) {
  int bits = 0;
  while ((1 << bits) < value) ++bits;
  return bits;
}

MatC hadamard_pow(int qubits) {
  MatC h(2, 2);
  const double r = 1.0 / std::sqrt(2.0);
  h << r, r, r, -r;
  MatC out = MatC::Identity(1, 1);
  for (int q = 0; q < qubits; ++q) out = kron(h, out);
  return out;
}

MatC fourier_matrix(Eigen::Index dim) {
  MatC f(dim, dim);
  const double norm = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double phase =
          2.0 * kPi * static_cast<double>(j) * static_cast<double>(k) /
          static_cast<double>(dim);
      f(j, k) = norm * cplx{std::cos(phase), std::sin(phase)};
    }
  return f;
}

// Embeds per-branch work-space blocks into a dense matrix over
// (key reg, query reg, work) with the branch index least significant.
MatC branch_embed(int n, const std::vector<MatC>& blocks) {
  const Eigen::Index work_dim = blocks[0].rows();
  const Eigen::Index branches = n * n;
  const Eigen::Index dim = branches * work_dim;
  MatC out = MatC::Zero(dim, dim);
  for (Eigen::Index b = 0; b < branches; ++b)
    for (Eigen::Index wr = 0; wr < work_dim; ++wr)
      for (Eigen::Index wc = 0; wc < work_dim; ++wc)
        out(wr * branches + b, wc * branches + b) = blocks[b](wr, wc);
  return out;
}

void check_orthogonal(const MatD& u, const char* name) {
  if (u.rows() != u.cols() || !is_unitary(u.cast<cplx>(), 1e-9))
    throw NumericError(std::string(name) + " weight is not orthogonal");
}

}  // namespace

OverlapAngle OverlapAngle::from_overlap(double overlap, int t_bits) {
  OverlapAngle out;
  out.overlap = std::clamp(overlap, -1.0, 1.0);
  out.theta = theta_from_overlap(out.overlap);
  out.codeword = codeword_from_theta(out.theta, t_bits);
  return out;
}

OverlapAngle OverlapAngle::from_theta(double theta, int t_bits) {
  OverlapAngle out;
  out.theta = theta;
  out.overlap = -std::cos(2.0 * theta);
  out.codeword = codeword_from_theta(theta, t_bits);
  return out;
}

AttentionScoreWord AttentionScoreWord::from_score(double score, double scale,
                                                  int bits) {
  AttentionScoreWord out;
  out.word = quantize_value(score / scale, bits);
  out.bits = bits;
  out.scale = scale;
  return out;
}

namespace {

VecD scaled_state(const VecD& vec, double lambda_hat, int slots,
                  int pad_offset) {
  const int p = static_cast<int>(vec.size());
  if (slots < p + 2)
    throw ShapeError("embedded state needs " + std::to_string(p + 2) +
                     " slots, got " + std::to_string(slots));
  const double sq = vec.squaredNorm();
  if (sq > lambda_hat * (1.0 + 1e-12))
    throw NumericError("scale " + std::to_string(lambda_hat) +
                       " is below squared norm " + std::to_string(sq));
  VecD out = VecD::Zero(slots);
  out.head(p) = vec / std::sqrt(lambda_hat);
  out[p + pad_offset] = std::sqrt(std::max(0.0, 1.0 - sq / lambda_hat));
  return out;
}

}  // namespace

VecD scaled_key_state(const VecD& key, double lambda_hat, int slots) {
  return scaled_state(key, lambda_hat, slots, 0);
}

VecD scaled_query_state(const VecD& query, double lambda_hat, int slots) {
  return scaled_state(query, lambda_hat, slots, 1);
}

const MatC& ParallelTest::branch_block(int key, int query) const {
  return branch[static_cast<std::size_t>(key + n * query)];
}

double ParallelTest::branch_overlap(int key, int query) const {
  return keys.col(key).dot(queries.col(query));
}

MatC ParallelTest::to_matrix() const { return branch_embed(n, branch); }

ParallelTest build_parallel_test(const MatD& x, const MatD& u_k,
                                 const MatD& u_q, int p, double lambda_hat,
                                 TestVariant variant) {
  check_orthogonal(u_k, "key");
  check_orthogonal(u_q, "query");
  const int d = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  if (u_k.rows() != d || u_q.rows() != d)
    throw ShapeError("weight dimension does not match input rows");
  if (p < 1 || p > d) throw ShapeError("projection width out of range");
  if (n < 1 || (n & (n - 1)) != 0)
    throw ShapeError("sequence length must be a power of two");
  if (lambda_hat <= 0.0) throw NumericError("scale must be positive");

  ParallelTest test;
  test.variant = variant;
  test.n = n;
  test.lambda_hat = lambda_hat;
  test.data_qubits = std::max(1, ceil_log2(p + 2));
  const int slots = 1 << test.data_qubits;
  test.work_qubits = variant == TestVariant::kHadamard
                         ? test.data_qubits + 1
                         : 2 * test.data_qubits + 1;

  const MatD k_cols = u_k.leftCols(p).transpose() * x;
  const MatD q_cols = u_q.leftCols(p).transpose() * x;
  test.keys.resize(slots, n);
  test.queries.resize(slots, n);
  for (int i = 0; i < n; ++i) {
    test.keys.col(i) = scaled_key_state(k_cols.col(i), lambda_hat, slots);
    test.queries.col(i) =
        scaled_query_state(q_cols.col(i), lambda_hat, slots);
  }

  std::vector<MatC> key_prep(n);
  std::vector<MatC> query_prep(n);
  for (int i = 0; i < n; ++i) {
    key_prep[i] = complete_orthogonal(test.keys.col(i)).cast<cplx>();
    query_prep[i] = complete_orthogonal(test.queries.col(i)).cast<cplx>();
  }

  const MatC mix =
      kron(hadamard_pow(1),
           MatC::Identity(1 << (test.work_qubits - 1),
                          1 << (test.work_qubits - 1)));
  test.branch.reserve(static_cast<std::size_t>(n) * n);
  for (int query = 0; query < n; ++query)
    for (int key = 0; key < n; ++key) {
      MatC assign;
      if (variant == TestVariant::kHadamard) {
        assign = block_diag({key_prep[key], query_prep[query]});
      } else {
        assign = block_diag({kron(query_prep[query], key_prep[key]),
                             kron(key_prep[key], query_prep[query])});
      }
      test.branch.push_back(mix * assign * mix);
    }
  // branch is filled query-major above; reorder to key + n * query.
  std::vector<MatC> ordered(test.branch.size());
  for (int query = 0; query < n; ++query)
    for (int key = 0; key < n; ++key)
      ordered[static_cast<std::size_t>(key + n * query)] =
          std::move(test.branch[static_cast<std::size_t>(query * n + key)]);
  test.branch = std::move(ordered);
  return test;
}

const MatC& GroverOperator::branch_block(int key, int query) const {
  return branch[static_cast<std::size_t>(key + n * query)];
}

MatC GroverOperator::to_matrix() const { return branch_embed(n, branch); }

GroverOperator build_grover(const ParallelTest& test) {
  GroverOperator g;
  g.n = test.n;
  g.work_qubits = test.work_qubits;
  const Eigen::Index dim = Eigen::Index{1} << test.work_qubits;
  MatC c1 = MatC::Identity(dim, dim);
  for (Eigen::Index r = dim / 2; r < dim; ++r) c1(r, r) = -1.0;
  MatC c2 = MatC::Identity(dim, dim);
  c2(0, 0) = -1.0;
  g.branch.reserve(test.branch.size());
  for (const MatC& u : test.branch)
    g.branch.push_back(u * c2 * u.adjoint() * c1);
  return g;
}

std::vector<MatC> grover_powers(const GroverOperator& g, int amp_bits) {
  const std::size_t branches = g.branch.size();
  const std::size_t count = std::size_t{1} << amp_bits;
  const Eigen::Index dim = g.branch[0].rows();
  std::vector<MatC> powers(branches * count);
  for (std::size_t b = 0; b < branches; ++b) {
    const Eigen::ComplexSchur<MatC> schur(g.branch[b]);
    const MatC& q = schur.matrixU();
    VecD phases(dim);
    for (Eigen::Index k = 0; k < dim; ++k)
      phases[k] = std::arg(schur.matrixT()(k, k));
    for (std::size_t c = 0; c < count; ++c) {
      VecC scaled(dim);
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double phi = phases[k] * static_cast<double>(c);
        scaled[k] = cplx{std::cos(phi), std::sin(phi)};
      }
      powers[b + branches * c] = q * scaled.asDiagonal() * q.adjoint();
    }
  }
  return powers;
}

CircuitStep parallel_test_step(const ParallelTest& test,
                               const OracleWiring& wiring) {
  CircuitStep step;
  step.targets = wiring.work;
  step.selectors = {wiring.key, wiring.query};
  step.blocks = test.branch;
  return step;
}

std::vector<CircuitStep> phase_estimation_steps(const GroverOperator& g,
                                                const OracleWiring& wiring,
                                                int amp_bits) {
  if (amp_bits < 3)
    throw ShapeError("phase estimation needs at least 3 amplitude qubits");
  std::vector<CircuitStep> steps;
  steps.push_back(plain_step(hadamard_pow(amp_bits), {wiring.amp}));
  CircuitStep powers;
  powers.targets = wiring.work;
  powers.selectors = {wiring.key, wiring.query, wiring.amp};
  powers.blocks = grover_powers(g, amp_bits);
  steps.push_back(std::move(powers));
  steps.push_back(plain_step(
      fourier_matrix(Eigen::Index{1} << amp_bits).adjoint(), {wiring.amp}));
  return steps;
}

CircuitStep score_word_step(const OracleWiring& wiring, int amp_bits,
                            int word_bits) {
  const std::size_t codewords = std::size_t{1} << amp_bits;
  const Eigen::Index dim = Eigen::Index{1} << word_bits;
  CircuitStep step;
  step.targets = {wiring.val};
  step.selectors = {wiring.amp};
  step.blocks.reserve(codewords);
  for (std::size_t c = 0; c < codewords; ++c) {
    const std::uint64_t pattern = encode_word(
        quantize_value(value_from_codeword(c, amp_bits), word_bits),
        word_bits);
    MatC perm = MatC::Zero(dim, dim);
    for (Eigen::Index w = 0; w < dim; ++w)
      perm(static_cast<Eigen::Index>(static_cast<std::uint64_t>(w) ^ pattern),
           w) = 1.0;
    step.blocks.push_back(std::move(perm));
  }
  return step;
}

StateVector phase_estimate(const GroverOperator& g, StateVector state,
                           const OracleWiring& wiring, int amp_bits) {
  if (state.layout.width(wiring.amp) != amp_bits)
    throw ShapeError("amplitude register width does not match");
  return apply_steps(std::move(state),
                     phase_estimation_steps(g, wiring, amp_bits));
}

StateVector apply_score_oracle(StateVector state, const OracleWiring& wiring,
                               int amp_bits, int word_bits) {
  return apply_step(std::move(state),
                    score_word_step(wiring, amp_bits, word_bits));
}

RegisterLayout ScoreOracle::layout() const {
  const int index_qubits = ceil_log2(test.n);
  std::vector<Register> regs;
  regs.push_back({wiring.key, index_qubits});
  regs.push_back({wiring.query, index_qubits});
  for (std::size_t w = 0; w + 1 < wiring.work.size(); ++w)
    regs.push_back({wiring.work[w], test.data_qubits});
  regs.push_back({wiring.work.back(), 1});
  regs.push_back({wiring.amp, amp_bits});
  regs.push_back({wiring.val, word_bits});
  return RegisterLayout(regs);
}

std::vector<CircuitStep> ScoreOracle::steps() const {
  std::vector<CircuitStep> out;
  const CircuitStep load = parallel_test_step(test, wiring);
  const std::vector<CircuitStep> pe =
      phase_estimation_steps(grover, wiring, amp_bits);
  out.push_back(load);
  out.insert(out.end(), pe.begin(), pe.end());
  out.push_back(score_word_step(wiring, amp_bits, word_bits));
  const std::vector<CircuitStep> unpe = adjoint_steps(pe);
  out.insert(out.end(), unpe.begin(), unpe.end());
  out.push_back(adjoint_step(load));
  return out;
}

ScoreOracle make_score_oracle(ParallelTest test, int t_bits, int word_bits,
                              OracleWiring wiring) {
  if (t_bits < 2 || word_bits < 2)
    throw ShapeError("score oracle needs at least 2 bits per register");
  if (test.variant == TestVariant::kSwap && wiring.work.size() == 2)
    wiring.work.insert(wiring.work.begin() + 1, wiring.work[0] + "2");
  if (wiring.work.size() !=
      (test.variant == TestVariant::kHadamard ? 2u : 3u))
    throw ShapeError("oracle wiring does not match the test variant");
  ScoreOracle oracle;
  oracle.amp_bits = std::max(t_bits, word_bits + 2);
  oracle.word_bits = word_bits;
  oracle.grover = build_grover(test);
  oracle.test = std::move(test);
  oracle.wiring = std::move(wiring);
  return oracle;
}

StateVector o_attention(StateVector state, const ScoreOracle& oracle) {
  return apply_steps(std::move(state), oracle.steps());
}

MatD stored_score_matrix(const StateVector& state, const ScoreOracle& oracle) {
  const int n = oracle.test.n;
  MatD out(n, n);
  for (int key = 0; key < n; ++key)
    for (int query = 0; query < n; ++query) {
      const std::vector<double> dist = measure_distribution_where(
          state, oracle.wiring.val,
          {{oracle.wiring.key, static_cast<std::uint64_t>(key)},
           {oracle.wiring.query, static_cast<std::uint64_t>(query)}});
      const std::size_t modal = static_cast<std::size_t>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
      out(key, query) =
          dequantize_value(decode_word(modal, oracle.word_bits),
                           oracle.word_bits) *
          oracle.test.lambda_hat;
    }
  return out;
}

}  // namespace qf
