#pragma once

// Named-register layouts over a linear qubit array.
//
// Conventions used everywhere in this library:
//   - Registers occupy contiguous, disjoint qubit ranges covering the whole
//     array, in the order they are listed: the first register holds the
//     least significant bits of a basis index.
//   - Within a register, bit 0 of the register value is its lowest qubit.
// So for layout {("k",2),("i",2)}, basis index = (i << 2) | k.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "qformer/common.hpp"

namespace qf {

struct Register {
  std::string name;
  int qubits = 0;
};

class RegisterLayout {
 public:
  RegisterLayout() = default;

  // Validates: unique non-empty names, widths >= 0. A zero-width register is
  // legal (it indexes a one-element range) so callers can treat degenerate
  // dimensions, e.g. a single-head head register, uniformly.
  explicit RegisterLayout(std::vector<Register> registers);
  RegisterLayout(std::initializer_list<Register> registers)
      : RegisterLayout(std::vector<Register>(registers)) {}

  int total_qubits() const { return total_; }
  std::size_t dimension() const { return std::size_t{1} << total_; }

  bool has(const std::string& name) const;
  // Both lookups throw ShapeError for unknown names.
  int width(const std::string& name) const;
  int offset(const std::string& name) const;

  const std::vector<Register>& registers() const { return regs_; }

  // Layout with one register removed; the others keep their order.
  RegisterLayout without(const std::string& name) const;

  // Basis index with the named registers set to the given values and every
  // unnamed register zero. Values must fit their register widths.
  std::size_t basis_index(
      std::initializer_list<std::pair<std::string, std::uint64_t>> values)
      const;

  // Value of one register inside a global basis index.
  std::uint64_t value_at(std::size_t basis, const std::string& name) const;

  bool operator==(const RegisterLayout& other) const;

 private:
  int find(const std::string& name) const;

  std::vector<Register> regs_;
  std::vector<int> offsets_;
  int total_ = 0;
};

}  // namespace qf
