#include "qformer/layout.hpp"

#include <algorithm>

namespace qf {

RegisterLayout::RegisterLayout(std::vector<Register> registers)
    : regs_(std::move(registers)) {
  offsets_.reserve(regs_.size());
  for (const Register& reg : regs_) {
    if (reg.name.empty()) throw ShapeError("register name must be non-empty");
    if (reg.qubits < 0) throw ShapeError("register width must be >= 0");
    offsets_.push_back(total_);
    total_ += reg.qubits;
  }
  for (std::size_t a = 0; a < regs_.size(); ++a)
    for (std::size_t b = a + 1; b < regs_.size(); ++b)
      if (regs_[a].name == regs_[b].name)
        throw ShapeError("duplicate register name: " + regs_[a].name);
}

bool RegisterLayout::has(const std::string& name) const {
  return std::any_of(regs_.begin(), regs_.end(),
                     [&](const Register& r) { return r.name == name; });
}

int RegisterLayout::find(const std::string& name) const {
  for (std::size_t idx = 0; idx < regs_.size(); ++idx)
    if (regs_[idx].name == name) return static_cast<int>(idx);
  throw ShapeError("unknown register: " + name);
}

int RegisterLayout::width(const std::string& name) const {
  return regs_[find(name)].qubits;
}

int RegisterLayout::offset(const std::string& name) const {
  return offsets_[find(name)];
}

RegisterLayout RegisterLayout::without(const std::string& name) const {
  const int drop = find(name);
  std::vector<Register> kept;
  kept.reserve(regs_.size() - 1);
  for (std::size_t idx = 0; idx < regs_.size(); ++idx)
    if (static_cast<int>(idx) != drop) kept.push_back(regs_[idx]);
  return RegisterLayout(std::move(kept));
}

std::size_t RegisterLayout::basis_index(
    std::initializer_list<std::pair<std::string, std::uint64_t>> values)
    const {
  std::size_t basis = 0;
  for (const auto& [name, value] : values) {
    const int idx = find(name);
    const int bits = regs_[idx].qubits;
    if (value >= (std::uint64_t{1} << bits))
      throw ShapeError("value " + std::to_string(value) +
                       " does not fit register " + name);
    basis |= static_cast<std::size_t>(value) << offsets_[idx];
  }
  return basis;
}

std::uint64_t RegisterLayout::value_at(std::size_t basis,
                                       const std::string& name) const {
  const int idx = find(name);
  const std::uint64_t mask = (std::uint64_t{1} << regs_[idx].qubits) - 1;
  return (basis >> offsets_[idx]) & mask;
}

bool RegisterLayout::operator==(const RegisterLayout& other) const {
  if (regs_.size() != other.regs_.size()) return false;
  for (std::size_t idx = 0; idx < regs_.size(); ++idx)
    if (regs_[idx].name != other.regs_[idx].name ||
        regs_[idx].qubits != other.regs_[idx].qubits)
      return false;
  return true;
}

}  // namespace qf
