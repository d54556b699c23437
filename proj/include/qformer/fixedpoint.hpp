#pragma once

// Fixed-point conventions shared by the score oracle, block-encodings, and
// the FFN value register.
//
//   - Value words: signed, b bits, two's complement, representing
//     word / 2^(b-1) in [-1, 1). Rounded to nearest, clipped at the ends.
//   - Angle codewords: unsigned, t bits, representing the phase fraction
//     phi / 2pi of a Grover eigenphase phi = 2*theta; codeword
//     c = round(theta * 2^t / pi) mod 2^t.
//   - An eigenphase pair +-2theta yields codewords c and 2^t - c; the stored
//     value -cos(2pi c / 2^t) is even in c, so both branches decode alike.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "qformer/common.hpp"

namespace qf {

inline constexpr double kPi = 3.14159265358979323846;

// Signed word for value in [-1, 1): round(value * 2^(b-1)) clipped to
// [-2^(b-1), 2^(b-1) - 1].
inline int quantize_value(double value, int bits) {
  const double scaled = value * static_cast<double>(1 << (bits - 1));
  const long word = std::lround(scaled);
  const long lo = -(1L << (bits - 1));
  const long hi = (1L << (bits - 1)) - 1;
  return static_cast<int>(std::clamp(word, lo, hi));
}

inline double dequantize_value(int word, int bits) {
  return static_cast<double>(word) / static_cast<double>(1 << (bits - 1));
}

// Register image of a signed word: low b bits of its two's complement.
inline std::uint64_t encode_word(int word, int bits) {
  return static_cast<std::uint64_t>(word) & ((std::uint64_t{1} << bits) - 1);
}

inline int decode_word(std::uint64_t raw, int bits) {
  const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
  const long value = static_cast<long>(raw & ((std::uint64_t{1} << bits) - 1));
  return static_cast<int>(raw & sign ? value - (1L << bits) : value);
}

// theta in [0, pi/2] with overlap y = -cos(2 theta), y clamped to [-1, 1].
inline double theta_from_overlap(double y) {
  return 0.5 * std::acos(std::clamp(-y, -1.0, 1.0));
}

// Nearest t-bit codeword of the phase fraction 2theta / 2pi.
inline std::uint64_t codeword_from_theta(double theta, int t_bits) {
  const double grid = theta * static_cast<double>(std::uint64_t{1} << t_bits) /
                      kPi;
  const auto rounded = static_cast<std::int64_t>(std::llround(grid));
  const std::int64_t size = std::int64_t{1} << t_bits;
  return static_cast<std::uint64_t>(((rounded % size) + size) % size);
}

// Overlap value decoded from a codeword: -cos(2pi c / 2^t).
inline double value_from_codeword(std::uint64_t codeword, int t_bits) {
  const double phase = 2.0 * kPi * static_cast<double>(codeword) /
                       static_cast<double>(std::uint64_t{1} << t_bits);
  return -std::cos(phase);
}

// Smallest power of two >= x (and >= 2^-20 so scales stay positive).
inline double power_of_two_at_least(double x) {
  double lambda = std::pow(2.0, -20);
  while (lambda < x) lambda *= 2.0;
  return lambda;
}

// End-to-end word a score oracle stores for a score with known scale: the
// overlap score/lambda_hat passed through the t-bit phase grid and then
// b-bit value quantization. Mirrors the circuit exactly, including the grid.
inline int grid_quantized_word(double score, double lambda_hat, int t_bits,
                               int b_bits) {
  const double y = std::clamp(score / lambda_hat, -1.0, 1.0);
  const std::uint64_t c = codeword_from_theta(theta_from_overlap(y), t_bits);
  return quantize_value(value_from_codeword(c, t_bits), b_bits);
}

}  // namespace qf
