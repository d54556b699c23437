#include "qformer/state.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "qformer/linalg.hpp"

namespace qf {

int thread_cap() {
  const char* env = std::getenv("QFORMER_THREADS");
  if (env == nullptr) return 1;
  const int parsed = std::atoi(env);
  return parsed >= 1 ? std::min(parsed, 64) : 1;
}

namespace {

// Runs fn over [0, total) split into contiguous chunks, one per worker.
// Chunk boundaries are aligned to `align` so the per-call work partitions
// (and therefore every intermediate matrix shape) are identical for every
// worker count; each chunk touches a disjoint slice of the state.
template <typename Fn>
void parallel_chunks(std::size_t total, std::size_t align, const Fn& fn) {
  const int workers =
      static_cast<int>(std::min<std::size_t>(thread_cap(), total ? total : 1));
  if (workers <= 1) {
    fn(std::size_t{0}, total);
    return;
  }
  std::size_t chunk = (total + workers - 1) / workers;
  chunk = (chunk + align - 1) / align * align;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(total, w * chunk);
    const std::size_t end = std::min(total, begin + chunk);
    if (begin == end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (std::thread& t : pool) t.join();
}

// Qubit positions of the named registers, concatenated in listed order
// (register-internal LSB first). Rejects duplicate target registers.
std::vector<int> target_positions(const RegisterLayout& layout,
                                  const std::vector<std::string>& targets) {
  std::vector<int> positions;
  for (std::size_t a = 0; a < targets.size(); ++a)
    for (std::size_t b = a + 1; b < targets.size(); ++b)
      if (targets[a] == targets[b])
        throw ShapeError("duplicate target register: " + targets[a]);
  for (const std::string& name : targets) {
    const int off = layout.offset(name);
    for (int bit = 0; bit < layout.width(name); ++bit)
      positions.push_back(off + bit);
  }
  return positions;
}

// Scatters the bits of value onto the given positions.
std::size_t deposit(std::size_t value, const std::vector<int>& positions) {
  std::size_t out = 0;
  for (std::size_t b = 0; b < positions.size(); ++b)
    out |= ((value >> b) & 1u) << positions[b];
  return out;
}

struct KernelPlan {
  std::vector<std::size_t> target_offsets;  // deposit(t, tpos) for all t
  std::vector<int> rest_positions;
  std::size_t rest_count = 0;
  std::size_t target_dim = 0;
};

KernelPlan make_plan(const RegisterLayout& layout,
                     const std::vector<int>& tpos) {
  KernelPlan plan;
  plan.target_dim = std::size_t{1} << tpos.size();
  plan.target_offsets.resize(plan.target_dim);
  for (std::size_t t = 0; t < plan.target_dim; ++t)
    plan.target_offsets[t] = deposit(t, tpos);
  std::vector<bool> is_target(layout.total_qubits(), false);
  for (int p : tpos) is_target[p] = true;
  for (int p = 0; p < layout.total_qubits(); ++p)
    if (!is_target[p]) plan.rest_positions.push_back(p);
  plan.rest_count = std::size_t{1} << plan.rest_positions.size();
  return plan;
}

// Core kernel: for every rest index accepted by `admit`, applies the dense
// matrix to the target-register slice. Slices are batched into matrix
// products along fixed global blocks of rest indices, so every product has
// a shape determined only by the admit pattern, not by the worker count.
template <typename Admit>
void apply_kernel(std::vector<cplx>& amps, const MatC& u,
                  const KernelPlan& plan, const Admit& admit) {
  const std::size_t dim_t = plan.target_dim;
  const std::size_t batch = std::max<std::size_t>(1, std::size_t{16384} / dim_t);
  parallel_chunks(plan.rest_count, batch, [&](std::size_t begin,
                                              std::size_t end) {
    MatC gathered(dim_t, batch);
    std::vector<std::size_t> bases(batch);
    for (std::size_t block = begin; block < end; block += batch) {
      const std::size_t stop = std::min(end, block + batch);
      std::size_t filled = 0;
      for (std::size_t r = block; r < stop; ++r) {
        const std::size_t base = deposit(r, plan.rest_positions);
        if (!admit(base)) continue;
        for (std::size_t t = 0; t < dim_t; ++t)
          gathered(static_cast<Eigen::Index>(t),
                   static_cast<Eigen::Index>(filled)) =
              amps[base + plan.target_offsets[t]];
        bases[filled] = base;
        ++filled;
      }
      if (filled == 0) continue;
      const MatC transformed =
          u * gathered.leftCols(static_cast<Eigen::Index>(filled));
      for (std::size_t c = 0; c < filled; ++c)
        for (std::size_t t = 0; t < dim_t; ++t)
          amps[bases[c] + plan.target_offsets[t]] =
              transformed(static_cast<Eigen::Index>(t),
                          static_cast<Eigen::Index>(c));
    }
  });
}

}  // namespace

double StateVector::norm() const {
  double sum = 0.0;
  for (const cplx& a : amplitudes) sum += std::norm(a);
  return std::sqrt(sum);
}

StateVector zero_state(const RegisterLayout& layout, int max_qubits) {
  if (layout.total_qubits() > max_qubits)
    throw CapacityError("layout needs " +
                        std::to_string(layout.total_qubits()) +
                        " qubits, budget is " + std::to_string(max_qubits));
  StateVector state;
  state.layout = layout;
  state.amplitudes.assign(layout.dimension(), cplx{0.0, 0.0});
  state.amplitudes[0] = cplx{1.0, 0.0};
  state.global_scale = 1.0;
  return state;
}

StateVector apply_unitary(StateVector state, const UnitaryOp& op,
                          const std::vector<std::string>& targets) {
  const std::vector<int> tpos = target_positions(state.layout, targets);
  if (op.qubits() != static_cast<int>(tpos.size()))
    throw ShapeError("operator acts on " + std::to_string(op.qubits()) +
                     " qubits but targets span " +
                     std::to_string(tpos.size()));
  const KernelPlan plan = make_plan(state.layout, tpos);
  apply_kernel(state.amplitudes, op.matrix(), plan,
               [](std::size_t) { return true; });
  return state;
}

StateVector apply_controlled(StateVector state, const UnitaryOp& op,
                             const std::string& control,
                             std::uint64_t control_value,
                             const std::vector<std::string>& targets) {
  for (const std::string& name : targets)
    if (name == control)
      throw ShapeError("control register overlaps targets: " + control);
  const int cwidth = state.layout.width(control);
  if (control_value >= (std::uint64_t{1} << cwidth))
    throw ShapeError("control value does not fit register " + control);
  const std::vector<int> tpos = target_positions(state.layout, targets);
  if (op.qubits() != static_cast<int>(tpos.size()))
    throw ShapeError("operator acts on " + std::to_string(op.qubits()) +
                     " qubits but targets span " +
                     std::to_string(tpos.size()));
  const int coffset = state.layout.offset(control);
  const std::size_t cmask = ((std::size_t{1} << cwidth) - 1) << coffset;
  const std::size_t cexpect = static_cast<std::size_t>(control_value)
                              << coffset;
  const KernelPlan plan = make_plan(state.layout, tpos);
  apply_kernel(state.amplitudes, op.matrix(), plan, [&](std::size_t base) {
    return (base & cmask) == cexpect;
  });
  return state;
}

StateVector apply_multiplexed(StateVector state,
                              const std::vector<MatC>& blocks,
                              const std::vector<std::string>& targets,
                              const std::vector<std::string>& selectors) {
  if (selectors.empty()) {
    if (blocks.size() != 1)
      throw ShapeError("multiplexed gate without selectors needs one block");
    return apply_unitary(std::move(state), UnitaryOp::from_matrix(blocks[0]),
                         targets);
  }
  std::vector<std::string> combined = targets;
  combined.insert(combined.end(), selectors.begin(), selectors.end());
  const std::vector<int> tpos = target_positions(state.layout, targets);
  const std::vector<int> spos = target_positions(state.layout, selectors);
  target_positions(state.layout, combined);
  const std::size_t dim_t = std::size_t{1} << tpos.size();
  const std::size_t sel_dim = std::size_t{1} << spos.size();
  if (blocks.size() != sel_dim)
    throw ShapeError("multiplexed gate has " + std::to_string(blocks.size()) +
                     " blocks for selector dimension " +
                     std::to_string(sel_dim));
  for (const MatC& block : blocks) {
    if (block.rows() != static_cast<Eigen::Index>(dim_t) ||
        block.cols() != static_cast<Eigen::Index>(dim_t))
      throw ShapeError("multiplexed block dimension mismatch");
    if (!is_unitary(block, 1e-10))
      throw NumericError("multiplexed block is not unitary");
  }

  // Exact identity blocks act trivially on their slice and are skipped, so a
  // controlled step costs only its active branches.
  std::vector<char> trivial(blocks.size());
  bool all_trivial = true;
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    trivial[s] = blocks[s].isIdentity(0.0) ? 1 : 0;
    all_trivial = all_trivial && trivial[s];
  }
  if (all_trivial) return state;

  std::vector<std::size_t> target_offsets(dim_t);
  for (std::size_t t = 0; t < dim_t; ++t)
    target_offsets[t] = deposit(t, tpos);
  std::vector<bool> used(state.layout.total_qubits(), false);
  for (int p : tpos) used[p] = true;
  for (int p : spos) used[p] = true;
  std::vector<int> free_positions;
  for (int p = 0; p < state.layout.total_qubits(); ++p)
    if (!used[p]) free_positions.push_back(p);
  const std::size_t free_count = std::size_t{1} << free_positions.size();
  const std::size_t batch = std::max<std::size_t>(1, std::size_t{16384} / dim_t);
  std::vector<cplx>& amps = state.amplitudes;

  // Each selector value owns a disjoint state slice, and the slice is swept
  // in fixed global batches, so results are bit-identical for every worker
  // count and for either parallelization axis.
  const auto sweep_selector = [&](std::size_t s, std::size_t begin,
                                  std::size_t end, MatC& gathered) {
    if (trivial[s]) return;
    const std::size_t sel_base = deposit(s, spos);
    const MatC& u = blocks[s];
    for (std::size_t block = begin; block < end; block += batch) {
      const std::size_t stop = std::min(end, block + batch);
      const std::size_t filled = stop - block;
      for (std::size_t f = block; f < stop; ++f) {
        const std::size_t base = deposit(f, free_positions) | sel_base;
        for (std::size_t t = 0; t < dim_t; ++t)
          gathered(static_cast<Eigen::Index>(t),
                   static_cast<Eigen::Index>(f - block)) =
              amps[base + target_offsets[t]];
      }
      const MatC transformed =
          u * gathered.leftCols(static_cast<Eigen::Index>(filled));
      for (std::size_t f = block; f < stop; ++f) {
        const std::size_t base = deposit(f, free_positions) | sel_base;
        for (std::size_t t = 0; t < dim_t; ++t)
          amps[base + target_offsets[t]] =
              transformed(static_cast<Eigen::Index>(t),
                          static_cast<Eigen::Index>(f - block));
      }
    }
  };

  const std::size_t workers = static_cast<std::size_t>(thread_cap());
  if (sel_dim >= 2 * workers) {
    parallel_chunks(sel_dim, 1, [&](std::size_t begin, std::size_t end) {
      MatC gathered(dim_t, batch);
      for (std::size_t s = begin; s < end; ++s)
        sweep_selector(s, 0, free_count, gathered);
    });
  } else {
    for (std::size_t s = 0; s < sel_dim; ++s) {
      if (trivial[s]) continue;
      parallel_chunks(free_count, batch,
                      [&](std::size_t begin, std::size_t end) {
                        MatC gathered(dim_t, batch);
                        sweep_selector(s, begin, end, gathered);
                      });
    }
  }
  return state;
}

CircuitStep plain_step(MatC matrix, std::vector<std::string> targets) {
  CircuitStep step;
  step.targets = std::move(targets);
  step.blocks.push_back(std::move(matrix));
  return step;
}

StateVector apply_step(StateVector state, const CircuitStep& step) {
  return apply_multiplexed(std::move(state), step.blocks, step.targets,
                           step.selectors);
}

StateVector apply_steps(StateVector state,
                        const std::vector<CircuitStep>& steps) {
  for (const CircuitStep& step : steps)
    state = apply_step(std::move(state), step);
  return state;
}

CircuitStep adjoint_step(CircuitStep step) {
  for (MatC& block : step.blocks) block = block.adjoint().eval();
  return step;
}

std::vector<CircuitStep> adjoint_steps(std::vector<CircuitStep> steps) {
  std::reverse(steps.begin(), steps.end());
  for (CircuitStep& step : steps) step = adjoint_step(std::move(step));
  return steps;
}

CircuitStep controlled_on_value(CircuitStep step, const std::string& control,
                                std::size_t control_dim,
                                std::uint64_t value) {
  if (control_dim == 0 || (control_dim & (control_dim - 1)) != 0)
    throw ShapeError("control dimension must be a power of two");
  if (value >= control_dim)
    throw ShapeError("control value does not fit register " + control);
  for (const std::string& name : step.targets)
    if (name == control)
      throw ShapeError("control register overlaps targets: " + control);
  for (const std::string& name : step.selectors)
    if (name == control)
      throw ShapeError("control register already selects: " + control);
  const std::size_t base = step.blocks.size();
  const Eigen::Index dim = step.blocks[0].rows();
  step.selectors.push_back(control);
  const MatC ident = MatC::Identity(dim, dim);
  std::vector<MatC> gated;
  gated.reserve(base * control_dim);
  for (std::size_t c = 0; c < control_dim; ++c)
    for (std::size_t b = 0; b < base; ++b)
      gated.push_back(c == value ? std::move(step.blocks[b]) : ident);
  step.blocks = std::move(gated);
  return step;
}

CircuitStep controlled_on_zero(CircuitStep step, const std::string& control,
                               std::size_t control_dim) {
  return controlled_on_value(std::move(step), control, control_dim, 0);
}

std::pair<StateVector, double> post_select(StateVector state,
                                           const std::string& reg,
                                           std::uint64_t outcome) {
  const int width = state.layout.width(reg);
  const int offset = state.layout.offset(reg);
  if (outcome >= (std::uint64_t{1} << width))
    throw ShapeError("outcome does not fit register " + reg);

  const std::size_t low_mask = (std::size_t{1} << offset) - 1;
  const std::size_t sel = static_cast<std::size_t>(outcome) << offset;

  StateVector result;
  result.layout = state.layout.without(reg);
  result.amplitudes.resize(result.layout.dimension());

  double branch = 0.0;
  for (std::size_t n = 0; n < result.amplitudes.size(); ++n) {
    const std::size_t old_index =
        (n & low_mask) | sel | ((n & ~low_mask) << width);
    result.amplitudes[n] = state.amplitudes[old_index];
    branch += std::norm(result.amplitudes[n]);
  }
  if (branch < 1e-14)
    throw NumericError("post-selection branch probability " +
                       std::to_string(branch) + " on register " + reg);
  const double inv = 1.0 / std::sqrt(branch);
  for (cplx& a : result.amplitudes) a *= inv;
  result.global_scale = state.global_scale * std::sqrt(branch);
  return {std::move(result), branch};
}

std::pair<StateVector, double> post_select_zero(
    StateVector state, const std::vector<std::string>& regs) {
  double probability = 1.0;
  for (const std::string& reg : regs) {
    auto [next, p] = post_select(std::move(state), reg, 0);
    state = std::move(next);
    probability *= p;
  }
  return {std::move(state), probability};
}

double fidelity(const StateVector& a, const StateVector& b) {
  if (!(a.layout == b.layout))
    throw ShapeError("fidelity: register layouts differ");
  cplx overlap{0.0, 0.0};
  for (std::size_t idx = 0; idx < a.amplitudes.size(); ++idx)
    overlap += std::conj(a.amplitudes[idx]) * b.amplitudes[idx];
  return std::norm(overlap);
}

std::vector<double> measure_distribution(const StateVector& state,
                                         const std::string& reg) {
  const int width = state.layout.width(reg);
  const int offset = state.layout.offset(reg);
  const std::size_t mask = (std::size_t{1} << width) - 1;
  std::vector<double> probs(std::size_t{1} << width, 0.0);
  for (std::size_t idx = 0; idx < state.amplitudes.size(); ++idx)
    probs[(idx >> offset) & mask] += std::norm(state.amplitudes[idx]);
  return probs;
}

std::vector<double> measure_distribution_where(
    const StateVector& state, const std::string& reg,
    const std::vector<std::pair<std::string, std::uint64_t>>& given) {
  const int width = state.layout.width(reg);
  const int offset = state.layout.offset(reg);
  std::size_t mask = 0;
  std::size_t expect = 0;
  for (const auto& [name, value] : given) {
    const int w = state.layout.width(name);
    const int off = state.layout.offset(name);
    if (value >= (std::uint64_t{1} << w))
      throw ShapeError("value does not fit register " + name);
    mask |= ((std::size_t{1} << w) - 1) << off;
    expect |= static_cast<std::size_t>(value) << off;
  }
  const std::size_t reg_mask = (std::size_t{1} << width) - 1;
  std::vector<double> probs(std::size_t{1} << width, 0.0);
  for (std::size_t idx = 0; idx < state.amplitudes.size(); ++idx)
    if ((idx & mask) == expect)
      probs[(idx >> offset) & reg_mask] += std::norm(state.amplitudes[idx]);
  return probs;
}

cplx amplitude_at(const StateVector& state,
                  std::initializer_list<std::pair<std::string, std::uint64_t>>
                      values) {
  return state.amplitudes[state.layout.basis_index(values)];
}

}  // namespace qf
