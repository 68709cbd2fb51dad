#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace hha {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Index of a discrete mode (rSLDS latent) or planner state.
using Mode = int;

inline constexpr Mode kNoMode = -1;

/// Raised when approximate inference or parameter learning cannot proceed
/// (non-finite potentials, indefinite Hessians, ...).
class FittingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by linear-algebra kernels on singular or indefinite systems.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on violated preconditions (shape mismatches, out-of-range indices).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace hha
