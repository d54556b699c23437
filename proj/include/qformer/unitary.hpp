#pragma once

// Explicit-matrix unitary operators. Circuits in this library act on small
// register subsets (<= 12 qubits per operator), so a dense matrix plus the
// target register names is the whole representation; larger constructions
// are composed by applying a sequence of these.

#include <string>
#include <utility>
#include <vector>

#include "qformer/common.hpp"
#include "qformer/linalg.hpp"

namespace qf {

class UnitaryOp {
 public:
  // Checks squareness, power-of-two dimension, and unitarity within tol.
  static UnitaryOp from_matrix(MatC matrix, double tol = 1e-10);

  static UnitaryOp identity(int qubits);

  int qubits() const { return qubits_; }
  Eigen::Index dimension() const { return mat_.rows(); }
  const MatC& matrix() const { return mat_; }

  UnitaryOp adjoint() const;

 private:
  UnitaryOp(MatC matrix, int qubits)
      : mat_(std::move(matrix)), qubits_(qubits) {}

  MatC mat_;
  int qubits_ = 0;
};

// Common fixed gates.
MatC pauli_x();
MatC pauli_z();
MatC hadamard();
// R_y(angle) = [[cos(a/2), -sin(a/2)], [sin(a/2), cos(a/2)]].
MatC rotation_y(double angle);

}  // namespace qf
