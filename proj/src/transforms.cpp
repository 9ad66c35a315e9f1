#include "rpace/transforms.hpp"

#include <cmath>

#include "rpace/errors.hpp"

namespace rpace {

Eigen::VectorXd transform_compositional(const Eigen::VectorXd& row) {
  for (int j = 0; j < row.size(); ++j) {
    if (row[j] < 0.0) {
      throw InvalidInputError("transform", "compositional entry " + std::to_string(j + 1) +
                                               " is negative (" + std::to_string(row[j]) +
                                               ")");
    }
  }
  const double sum = row.sum();
  if (std::abs(sum - 1.0) > 1e-6) {
    throw InvalidInputError("transform", "composition sums to " + std::to_string(sum) +
                                             ", expected 1 within 1e-6");
  }
  return (row / sum).cwiseSqrt();
}

Eigen::VectorXd transform_preshape(const Eigen::VectorXd& row) {
  const double norm = row.norm();
  if (norm < 1e-12) {
    throw InvalidInputError("transform", "cannot normalize a zero measurement row");
  }
  return row / norm;
}

}  // namespace rpace
