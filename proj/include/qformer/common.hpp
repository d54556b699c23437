#pragma once

// Shared basics: numeric aliases, error taxonomy, deterministic RNG, and the
// global thread cap honored by the amplitude kernels.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qf {

inline constexpr const char* kVersion = "0.1.0";

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using MatD = Eigen::MatrixXd;
using VecC = Eigen::VectorXcd;
using VecD = Eigen::VectorXd;

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A register layout would exceed the configured qubit budget.
struct CapacityError : Error {
  using Error::Error;
};

// Dimension or register-shape disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Numerically impossible request (non-unitary matrix, vanishing
// post-selection branch, zero-norm column, ...).
struct NumericError : Error {
  using Error::Error;
};

// File or serialization failure.
struct IoError : Error {
  using Error::Error;
};

// Deterministic random source. Wraps std::mt19937_64 (fully specified by the
// standard) and derives uniforms/normals with explicit arithmetic so streams
// are identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling keeps the distribution exact for any n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  // Standard normal via Box-Muller on explicit uniforms.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Number of worker threads amplitude kernels may use, read from
// QFORMER_THREADS at each call; unset or invalid values fall back to 1.
// Results are bit-identical for every cap: work is partitioned into fixed
// blocks and threads only pick up disjoint block ranges.
int thread_cap();

}  // namespace qf
