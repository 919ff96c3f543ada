#pragma once

#include <Eigen/Dense>

namespace obpc {

/// Largest state/output/input dimension handled by the small-matrix routines.
inline constexpr int kMaxDim = 8;

// Dynamic size with a fixed upper bound: no heap traffic in the integrator hot loops.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

}  // namespace obpc
