#include "qformer/unitary.hpp"

#include <cmath>

namespace qf {

namespace {

int log2_exact(Eigen::Index dim) {
  int bits = 0;
  while ((Eigen::Index{1} << bits) < dim) ++bits;
  if ((Eigen::Index{1} << bits) != dim)
    throw ShapeError("unitary dimension must be a power of two");
  return bits;
}

}  // namespace

UnitaryOp UnitaryOp::from_matrix(MatC matrix, double tol) {
  if (matrix.rows() != matrix.cols())
    throw ShapeError("unitary matrix must be square");
  const int qubits = log2_exact(matrix.rows());
  if (!is_unitary(matrix, tol))
    throw NumericError("matrix is not unitary within tolerance");
  return UnitaryOp(std::move(matrix), qubits);
}

UnitaryOp UnitaryOp::identity(int qubits) {
  const Eigen::Index dim = Eigen::Index{1} << qubits;
  return UnitaryOp(MatC::Identity(dim, dim), qubits);
}

UnitaryOp UnitaryOp::adjoint() const { return UnitaryOp(mat_.adjoint(), qubits_); }

MatC pauli_x() {
  MatC x(2, 2);
  x << 0, 1, 1, 0;
  return x;
}

MatC pauli_z() {
  MatC z(2, 2);
  z << 1, 0, 0, -1;
  return z;
}

MatC hadamard() {
  const double s = 1.0 / std::sqrt(2.0);
  MatC h(2, 2);
  h << s, s, s, -s;
  return h;
}

MatC rotation_y(double angle) {
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  MatC r(2, 2);
  r << c, -s, s, c;
  return r;
}

}  // namespace qf
