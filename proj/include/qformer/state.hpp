#pragma once

// Dense statevector simulation over named registers.
//
// A StateVector stores unit-norm amplitudes plus a classically tracked
// global_scale: the physical (unnormalized) vector the state represents is
// global_scale * amplitudes. Unitaries leave the scale alone; post-selection
// multiplies it by sqrt(branch probability), so after projecting ancillas the
// scale recovers the norm of the encoded data.
//
// All operations consume their input by value and return the transformed
// state; there is no shared mutable state, so values move freely between
// threads.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qformer/layout.hpp"
#include "qformer/unitary.hpp"

namespace qf {

inline constexpr int kDefaultMaxQubits = 26;

struct StateVector {
  RegisterLayout layout;
  std::vector<cplx> amplitudes;
  double global_scale = 1.0;

  std::size_t dimension() const { return amplitudes.size(); }
  double norm() const;
};

// |0...0> over the layout. Throws CapacityError above max_qubits.
StateVector zero_state(const RegisterLayout& layout,
                       int max_qubits = kDefaultMaxQubits);

// Applies op to the named target registers (identity elsewhere). The target
// bit order is the concatenation of the listed registers, first register
// least significant; op dimension must equal 2^(total target width).
StateVector apply_unitary(StateVector state, const UnitaryOp& op,
                          const std::vector<std::string>& targets);

// Applies op on the branch where the control register equals control_value;
// identity on every other branch. Control must be disjoint from targets.
StateVector apply_controlled(StateVector state, const UnitaryOp& op,
                             const std::string& control,
                             std::uint64_t control_value,
                             const std::vector<std::string>& targets);

// Uniformly controlled (multiplexed) gate: for every basis value s of the
// selector registers, applies blocks[s] to the target registers on that
// branch. Selector bits combine with the first listed register least
// significant, matching layout order. blocks.size() must equal the selector
// dimension and every block must be unitary on the target space.
StateVector apply_multiplexed(StateVector state,
                              const std::vector<MatC>& blocks,
                              const std::vector<std::string>& targets,
                              const std::vector<std::string>& selectors);

// One circuit layer: a plain unitary (empty selectors, one block) or a
// multiplexed gate. Chains of steps describe every composite circuit in the
// library so they can be adjointed and wrapped in extra controls uniformly.
struct CircuitStep {
  std::vector<std::string> targets;
  std::vector<std::string> selectors;
  std::vector<MatC> blocks;
};

CircuitStep plain_step(MatC matrix, std::vector<std::string> targets);

StateVector apply_step(StateVector state, const CircuitStep& step);
StateVector apply_steps(StateVector state,
                        const std::vector<CircuitStep>& steps);

// Blockwise adjoint of one step; adjoint_steps also reverses the order, so
// apply_steps(apply_steps(s, c), adjoint_steps(c)) restores s.
CircuitStep adjoint_step(CircuitStep step);
std::vector<CircuitStep> adjoint_steps(std::vector<CircuitStep> steps);

// Gates the step on `control` holding the given value: the original blocks
// run on that branch and every other control value gets the identity.
// control_dim is the control register's dimension (2^width).
CircuitStep controlled_on_value(CircuitStep step, const std::string& control,
                                std::size_t control_dim, std::uint64_t value);
CircuitStep controlled_on_zero(CircuitStep step, const std::string& control,
                               std::size_t control_dim);

// Projects the named register onto |outcome>, removes it from the layout,
// renormalizes, and multiplies global_scale by sqrt(probability). Throws
// NumericError when the branch probability is below 1e-14.
std::pair<StateVector, double> post_select(StateVector state,
                                           const std::string& reg,
                                           std::uint64_t outcome);

// post_select of |0> on each named register in turn; returns the surviving
// state and the combined branch probability.
std::pair<StateVector, double> post_select_zero(
    StateVector state, const std::vector<std::string>& regs);

// |<a|b>|^2. Layouts must match.
double fidelity(const StateVector& a, const StateVector& b);

// Marginal Born probabilities of one register (sums to 1).
std::vector<double> measure_distribution(const StateVector& state,
                                         const std::string& reg);

// Unnormalized marginal of one register restricted to the branch where every
// register in `given` holds the paired value; entries sum to the branch
// probability.
std::vector<double> measure_distribution_where(
    const StateVector& state, const std::string& reg,
    const std::vector<std::pair<std::string, std::uint64_t>>& given);

// Amplitude of the basis state with the named register values (unnamed
// registers read as 0).
cplx amplitude_at(const StateVector& state,
                  std::initializer_list<std::pair<std::string, std::uint64_t>>
                      values);

}  // namespace qf
