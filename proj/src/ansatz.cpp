#include "qformer/ansatz.hpp"

#include <cmath>

namespace qf {

UnitaryOp build_ansatz(const AnsatzSpec& spec) {
  if (spec.layers < 1) throw ShapeError("ansatz needs at least one layer");
  if (spec.generators.empty())
    throw ShapeError("ansatz needs at least one generator");
  const Eigen::Index dim = spec.generators.front().rows();
  for (const MatC& h : spec.generators)
    if (h.rows() != dim || h.cols() != dim)
      throw ShapeError("ansatz generators must share one square dimension");
  const std::size_t expected =
      static_cast<std::size_t>(spec.layers) * spec.generators.size();
  if (spec.theta.size() != expected)
    throw ShapeError("ansatz expects " + std::to_string(expected) +
                     " parameters, got " + std::to_string(spec.theta.size()));
  MatC u = MatC::Identity(dim, dim);
  for (int l = 0; l < spec.layers; ++l)
    for (std::size_t k = 0; k < spec.generators.size(); ++k) {
      const double angle = spec.theta[l * spec.generators.size() + k];
      u = expm_hermitian(spec.generators[k], angle) * u;
    }
  return UnitaryOp::from_matrix(std::move(u));
}

MatC givens_generator(int dim, int a, int b) {
  if (a < 0 || b < 0 || a >= dim || b >= dim || a == b)
    throw ShapeError("givens_generator: invalid plane");
  MatC h = MatC::Zero(dim, dim);
  h(a, b) = cplx(0.0, 1.0);
  h(b, a) = cplx(0.0, -1.0);
  return h;
}

MatD PlaneRotationChain::realize(const std::vector<double>& theta) const {
  if (theta.size() != planes.size())
    throw ShapeError("chain expects " + std::to_string(planes.size()) +
                     " angles, got " + std::to_string(theta.size()));
  MatD u = MatD::Identity(dim, dim);
  for (std::size_t idx = 0; idx < planes.size(); ++idx) {
    const auto [a, b] = planes[idx];
    const double c = std::cos(theta[idx]);
    const double s = std::sin(theta[idx]);
    // Left-multiply by the plane rotation: rows a and b of u change.
    for (int col = 0; col < dim; ++col) {
      const double ua = u(a, col);
      const double ub = u(b, col);
      u(a, col) = c * ua + s * ub;
      u(b, col) = -s * ua + c * ub;
    }
  }
  return u;
}

AnsatzSpec PlaneRotationChain::to_ansatz(const std::vector<double>& theta)
    const {
  AnsatzSpec spec;
  spec.layers = 1;
  spec.generators.reserve(planes.size());
  for (const auto& [a, b] : planes)
    spec.generators.push_back(givens_generator(dim, a, b));
  spec.theta = theta;
  return spec;
}

PlaneRotationChain so_chain(int dim) {
  PlaneRotationChain chain;
  chain.dim = dim;
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b) chain.planes.emplace_back(a, b);
  return chain;
}

PlaneRotationChain state_prep_chain(int dim) {
  PlaneRotationChain chain;
  chain.dim = dim;
  for (int a = 0; a + 1 < dim; ++a) chain.planes.emplace_back(a, a + 1);
  return chain;
}

}  // namespace qf
