#pragma once

// Layered variational ansatz U(theta) = product of e^{-i theta_{lk} H_k}
// factors, plus the plane-rotation chains used to realize the model's real
// orthogonal weight matrices and state-preparation columns in closed form.

#include <utility>
#include <vector>

#include "qformer/unitary.hpp"

namespace qf {

// L layers sharing one generator list; theta[l*K + k] parameterizes factor
// (l, k). Factors act on the state in increasing (l, k) order, i.e.
// U = e^{-i theta_{L-1,K-1} H_{K-1}} ... e^{-i theta_{0,0} H_0}.
struct AnsatzSpec {
  int layers = 1;
  std::vector<MatC> generators;
  std::vector<double> theta;
};

// Product of exponentials in the stated order. Throws NumericError for
// non-Hermitian generators, ShapeError for size or count mismatches.
UnitaryOp build_ansatz(const AnsatzSpec& spec);

// Hermitian generator i(|a><b| - |b><a|); e^{-i theta H} is the real plane
// rotation by theta in coordinates (a, b).
MatC givens_generator(int dim, int a, int b);

// An ordered list of coordinate planes whose rotations, multiplied in order
// (first plane applied to a vector first), realize a real orthogonal matrix.
struct PlaneRotationChain {
  int dim = 0;
  std::vector<std::pair<int, int>> planes;

  std::size_t angle_count() const { return planes.size(); }

  // Closed-form realization (no matrix exponentials); equals
  // build_ansatz(to_ansatz(theta)) restricted to real entries.
  MatD realize(const std::vector<double>& theta) const;

  // Same chain expressed as a single-layer AnsatzSpec over Givens generators.
  AnsatzSpec to_ansatz(const std::vector<double>& theta) const;
};

// Every coordinate plane (a < b) once: dim(dim-1)/2 angles, enough to reach
// any rotation in SO(dim).
PlaneRotationChain so_chain(int dim);

// Adjacent planes (0,1),(1,2),...: dim-1 angles; applied to e_0 this sweeps
// every real unit vector (hyperspherical parameterization), used for
// trainable state-preparation columns.
PlaneRotationChain state_prep_chain(int dim);

}  // namespace qf
