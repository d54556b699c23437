#include "qformer/linalg.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace qf {

MatC expm_hermitian(const MatC& hamiltonian, double t, double tol) {
  if (hamiltonian.rows() != hamiltonian.cols())
    throw ShapeError("expm_hermitian: matrix must be square");
  if (max_abs(hamiltonian - hamiltonian.adjoint()) > tol)
    throw NumericError("expm_hermitian: generator is not Hermitian");
  Eigen::SelfAdjointEigenSolver<MatC> eig(hamiltonian);
  const VecD& lambda = eig.eigenvalues();
  VecC phases(lambda.size());
  for (Eigen::Index idx = 0; idx < lambda.size(); ++idx)
    phases[idx] = std::exp(cplx(0.0, -t * lambda[idx]));
  return eig.eigenvectors() * phases.asDiagonal() *
         eig.eigenvectors().adjoint();
}

MatD complete_orthogonal(const VecD& first_column) {
  const Eigen::Index n = first_column.size();
  if (std::abs(first_column.norm() - 1.0) > 1e-9)
    throw NumericError("complete_orthogonal: column is not a unit vector");
  // Householder reflection H mapping e0 to the column; H is orthogonal and
  // symmetric, and H e0 = column exactly (up to roundoff).
  VecD v = first_column;
  v[0] -= 1.0;
  const double vnorm2 = v.squaredNorm();
  MatD result = MatD::Identity(n, n);
  if (vnorm2 > 1e-30) result -= (2.0 / vnorm2) * (v * v.transpose());
  return result;
}

MatC block_diag(const std::vector<MatC>& blocks) {
  if (blocks.empty()) throw ShapeError("block_diag: no blocks");
  const Eigen::Index dim = blocks.front().rows();
  for (const MatC& b : blocks)
    if (b.rows() != dim || b.cols() != dim)
      throw ShapeError("block_diag: blocks must be square and equally sized");
  MatC result = MatC::Zero(dim * blocks.size(), dim * blocks.size());
  for (std::size_t idx = 0; idx < blocks.size(); ++idx)
    result.block(idx * dim, idx * dim, dim, dim) = blocks[idx];
  return result;
}

MatC kron(const MatC& a, const MatC& b) {
  MatC result(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      result.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) =
          a(i, j) * b;
  return result;
}

bool is_unitary(const MatC& u, double tol) {
  if (u.rows() != u.cols()) return false;
  const MatC delta =
      u * u.adjoint() - MatC::Identity(u.rows(), u.cols());
  return max_abs(delta) <= tol;
}

double max_abs(const MatC& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace qf
