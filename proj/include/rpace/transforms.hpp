#pragma once

#include <Eigen/Dense>

namespace rpace {

// Square-root transform of a compositional row (nonnegative, sums to 1 within
// 1e-6; small deviations are renormalized). Output lies on the unit sphere;
// zero categories are preserved.
Eigen::VectorXd transform_compositional(const Eigen::VectorXd& row);

// Preshape transform: size normalization by the Euclidean norm.
Eigen::VectorXd transform_preshape(const Eigen::VectorXd& row);

}  // namespace rpace
