#include "qformer/block_encoding.hpp"

#include <cmath>
#include <utility>

#include "qformer/fixedpoint.hpp"
#include "qformer/linalg.hpp"

namespace qf {

namespace {

int exact_log2(int value) {
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

// Permutation exchanging the two equally wide registers it targets.
MatC swap_permutation(int n) {
  const Eigen::Index dim = Eigen::Index{n} * n;
  MatC perm = MatC::Zero(dim, dim);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) perm(b + n * a, a + n * b) = 1.0;
  return perm;
}

MatC value_rotation(double value) {
  const double rest = std::sqrt(std::max(0.0, 1.0 - value * value));
  MatC rot(2, 2);
  rot << value, -rest, rest, value;
  return rot;
}

}  // namespace

int BlockEncoding::ancilla_qubits() const {
  return layout.total_qubits() - layout.width(system);
}

double rotation_value(std::uint64_t codeword, int amp_bits, int b_bits) {
  return dequantize_value(
      quantize_value(value_from_codeword(codeword, amp_bits), b_bits),
      b_bits);
}

BlockEncoding block_encode_scores(const MatD& x, const MatD& u_k,
                                  const MatD& u_q, int p, double lambda_hat,
                                  int t_bits, int b_bits, bool masked) {
  if (t_bits < 3 || b_bits < 2)
    throw ShapeError("score encoding needs t_bits >= 3 and b_bits >= 2");
  ParallelTest test =
      build_parallel_test(x, u_k, u_q, p, lambda_hat, TestVariant::kHadamard);
  const int n = test.n;
  const int index_qubits = exact_log2(n);
  const int amp_bits = std::max(t_bits, b_bits + 2);

  OracleWiring wiring;
  wiring.key = "aidx";
  wiring.query = "i";

  BlockEncoding out;
  out.system = "i";
  out.ancillas = {"aidx", "data", "test", "amp", "rot"};
  out.layout = RegisterLayout{{"i", index_qubits},
                              {"aidx", index_qubits},
                              {"data", test.data_qubits},
                              {"test", 1},
                              {"amp", amp_bits},
                              {"rot", 1}};
  out.alpha = static_cast<double>(n) * lambda_hat;
  out.epsilon = out.alpha * std::pow(2.0, 1 - b_bits);

  const GroverOperator grover = build_grover(test);
  const CircuitStep spread = plain_step(hadamard_spread(index_qubits), {"aidx"});
  const CircuitStep load = parallel_test_step(test, wiring);
  const std::vector<CircuitStep> pe =
      phase_estimation_steps(grover, wiring, amp_bits);

  CircuitStep rotate;
  rotate.targets = {"rot"};
  rotate.selectors = {"amp"};
  const std::size_t codewords = std::size_t{1} << amp_bits;
  if (masked) {
    rotate.selectors = {"amp", "aidx", "i"};
    rotate.blocks.reserve(codewords * n * n);
    // Selector value = codeword + 2^amp_bits * (key row + n * query column),
    // so the push order below is query-major, then key, then codeword.
    // Pairs whose query position precedes the key position rotate by zero.
    for (int query = 0; query < n; ++query)
      for (int key = 0; key < n; ++key)
        for (std::size_t c = 0; c < codewords; ++c)
          rotate.blocks.push_back(value_rotation(
              query < key ? 0.0 : rotation_value(c, amp_bits, b_bits)));
  } else {
    rotate.blocks.reserve(codewords);
    for (std::size_t c = 0; c < codewords; ++c)
      rotate.blocks.push_back(
          value_rotation(rotation_value(c, amp_bits, b_bits)));
  }

  out.steps.push_back(spread);
  out.steps.push_back(load);
  out.steps.insert(out.steps.end(), pe.begin(), pe.end());
  out.steps.push_back(std::move(rotate));
  const std::vector<CircuitStep> unpe = adjoint_steps(pe);
  out.steps.insert(out.steps.end(), unpe.begin(), unpe.end());
  out.steps.push_back(adjoint_step(load));
  out.steps.push_back(plain_step(swap_permutation(n), {"aidx", "i"}));
  out.steps.push_back(spread);
  return out;
}

MatC encoded_block(const BlockEncoding& encoding) {
  const int n = 1 << encoding.layout.width(encoding.system);
  MatC block(n, n);
  for (int col = 0; col < n; ++col) {
    StateVector state = zero_state(encoding.layout);
    std::swap(state.amplitudes[0],
              state.amplitudes[encoding.layout.basis_index(
                  {{encoding.system, static_cast<std::uint64_t>(col)}})]);
    state = apply_steps(std::move(state), encoding.steps);
    for (int row = 0; row < n; ++row)
      block(row, col) = amplitude_at(
          state, {{encoding.system, static_cast<std::uint64_t>(row)}});
  }
  return block;
}

double verify_block_encoding(const BlockEncoding& encoding,
                             const MatD& target) {
  if (target.rows() != target.cols() ||
      target.rows() != (1 << encoding.layout.width(encoding.system)))
    throw ShapeError("target does not match the system register");
  const MatC block = encoded_block(encoding);
  return max_abs(MatC(encoding.alpha * block - target.cast<cplx>()));
}

BlockEncoding lcu_combine(const std::vector<BlockEncoding>& terms,
                          const VecD& weights,
                          const std::string& select_name) {
  if (terms.empty()) throw ShapeError("no terms to combine");
  if (static_cast<std::size_t>(weights.size()) != terms.size())
    throw ShapeError("one weight per term required");
  double total = 0.0;
  for (Eigen::Index m = 0; m < weights.size(); ++m) {
    if (weights[m] < 0.0) throw NumericError("weights must be nonnegative");
    total += weights[m];
  }
  if (total <= 0.0) throw NumericError("weights must have a positive sum");
  for (const BlockEncoding& term : terms) {
    if (!(term.layout == terms.front().layout) ||
        term.system != terms.front().system)
      throw ShapeError("combined terms must share layout and system");
    if (term.layout.has(select_name))
      throw ShapeError("selector name collides with a term register: " +
                       select_name);
  }

  const int bits = std::max(
      1, exact_log2(static_cast<int>(terms.size())));
  const std::size_t slots = std::size_t{1} << bits;
  VecD coeffs = VecD::Zero(static_cast<Eigen::Index>(slots));
  for (Eigen::Index m = 0; m < weights.size(); ++m)
    coeffs[m] = std::sqrt(weights[m] / total);

  BlockEncoding out;
  out.system = terms.front().system;
  out.ancillas = terms.front().ancillas;
  out.ancillas.push_back(select_name);
  std::vector<Register> regs = terms.front().layout.registers();
  regs.push_back({select_name, bits});
  out.layout = RegisterLayout(regs);
  out.alpha = total;
  out.epsilon = 0.0;
  for (std::size_t m = 0; m < terms.size(); ++m)
    out.epsilon += weights[m] * terms[m].epsilon / terms[m].alpha;

  const CircuitStep prepare =
      plain_step(complete_orthogonal(coeffs).cast<cplx>(), {select_name});
  out.steps.push_back(prepare);
  for (std::size_t m = 0; m < terms.size(); ++m)
    for (const CircuitStep& step : terms[m].steps)
      out.steps.push_back(
          controlled_on_value(step, select_name, slots, m));
  out.steps.push_back(adjoint_step(prepare));
  return out;
}

}  // namespace qf
