#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ot {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Throws std::invalid_argument when a validation condition fails.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Throws std::runtime_error when a numerical guarantee fails.
inline void ensure(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace ot
