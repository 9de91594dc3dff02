#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mcmult {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolVec = Eigen::Array<bool, Eigen::Dynamic, 1>;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Invalid user-supplied configuration (bad hyperparameters, unknown keys).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An API precondition was violated by the caller.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A softmax row (or an attention source) is fully masked.
struct MaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem / serialization failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numeric check failed at runtime (non-finite loss, gradient check above tolerance).
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline std::string shape_string(const Matrix& m) {
  return shape_string(m.rows(), m.cols());
}

using Rng = std::mt19937_64;

// Uniform draw in [0,1) from the top 53 bits; identical on every platform,
// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<std::int64_t>(rng() % span);
}

// Box-Muller; draws two uniforms per sample.
inline double normal01(Rng& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace mcmult
