#include "qformer/encoding.hpp"

#include <cmath>

#include "qformer/linalg.hpp"

namespace qf {
namespace {

bool is_power_of_two(Eigen::Index x) { return x > 0 && (x & (x - 1)) == 0; }

// H^{(x) log2(dim)}.
MatC hadamard_stack(Eigen::Index dim) {
  MatC h = MatC::Identity(1, 1);
  while (h.rows() < dim) h = kron(hadamard(), h);
  return h;
}

}  // namespace

UnitaryOp build_cqsp(const MatD& columns) {
  if (!is_power_of_two(columns.rows()) || !is_power_of_two(columns.cols()))
    throw ShapeError("indexed preparation needs power-of-two dimensions");
  std::vector<MatC> blocks;
  blocks.reserve(columns.cols());
  for (Eigen::Index i = 0; i < columns.cols(); ++i) {
    const double norm = columns.col(i).norm();
    if (norm < 1e-12) {
      blocks.push_back(MatC::Identity(columns.rows(), columns.rows()));
      continue;
    }
    const VecD unit = columns.col(i) / norm;
    blocks.push_back(complete_orthogonal(unit).cast<cplx>());
  }
  return UnitaryOp::from_matrix(block_diag(blocks));
}

UnitaryOp matrix_prep_unitary(const MatD& x) {
  const double total = x.norm();
  if (total < 1e-300) throw NumericError("cannot encode a zero matrix");
  VecD weights(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) weights(i) = x.col(i).norm() / total;
  const MatC mix = complete_orthogonal(weights).cast<cplx>();
  const MatC spread = kron(mix, MatC::Identity(x.rows(), x.rows()));
  return UnitaryOp::from_matrix(build_cqsp(x).matrix() * spread);
}

UnitaryOp positional_prep_unitary(int d, int n) {
  if (d < 2 || !is_power_of_two(d) || !is_power_of_two(n))
    throw ShapeError("positional encoding needs power-of-two d >= 2 and n");
  const int half = d / 2;
  // |0> -> |1> on the low data qubit, uniform over row pairs and positions.
  const MatC spread =
      kron(hadamard_stack(n), kron(hadamard_stack(half), pauli_x()));
  // One rotation per (row pair j, position i), keyed on the high bits.
  std::vector<MatC> rotations;
  rotations.reserve(static_cast<std::size_t>(n) * half);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < half; ++j) {
      const double freq = std::pow(10000.0, -2.0 * j / d);
      rotations.push_back(rotation_y(-2.0 * i * freq));
    }
  return UnitaryOp::from_matrix(block_diag(rotations) * spread);
}

StateVector prepare_matrix_state(const MatD& x, StateVector state,
                                 const std::string& data_reg,
                                 const std::string& index_reg) {
  state = apply_unitary(std::move(state), matrix_prep_unitary(x),
                        {data_reg, index_reg});
  state.global_scale *= x.norm();
  return state;
}

StateVector prepare_positional_state(int d, int n, StateVector state,
                                     const std::string& data_reg,
                                     const std::string& index_reg) {
  state = apply_unitary(std::move(state), positional_prep_unitary(d, n),
                        {data_reg, index_reg});
  state.global_scale *= std::sqrt(0.5 * d * n);
  return state;
}

std::pair<StateVector, double> prepare_summed_state(
    const MatD& x, StateVector state, const std::string& data_reg,
    const std::string& index_reg, const std::string& mix_reg) {
  const int d = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  const double weight_x = x.norm();
  const double weight_p = std::sqrt(0.5 * d * n);
  // Branch amplitudes proportional to the square roots of the Frobenius
  // norms make the post-selected sum weight both terms equally.
  const double mu = std::atan(std::sqrt(weight_p / weight_x));
  const UnitaryOp mixer = UnitaryOp::from_matrix(rotation_y(2.0 * mu));

  state = apply_unitary(std::move(state), mixer, {mix_reg});
  if (weight_x > 0.0) {
    state = apply_controlled(std::move(state), matrix_prep_unitary(x), mix_reg,
                             0, {data_reg, index_reg});
  }
  state = apply_controlled(std::move(state), positional_prep_unitary(d, n),
                           mix_reg, 1, {data_reg, index_reg});
  state = apply_unitary(std::move(state), mixer.adjoint(), {mix_reg});

  auto [picked, prob] = post_select(std::move(state), mix_reg, 0);
  picked.global_scale *= weight_x + weight_p;
  return {std::move(picked), prob};
}

}  // namespace qf
