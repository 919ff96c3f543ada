#pragma once

#include <functional>

#include <Eigen/Dense>

namespace obpc {

struct NelderMeadOptions {
    int max_iterations = 3000;
    /// Convergence on the spread of simplex values (relative to 1 + |f_best|)
    /// and on the simplex diameter (sqrt of this, relative to 1 + |x_best|).
    double tolerance = 1e-10;
    /// Initial edge length as a fraction of the box width per coordinate.
    double initial_step = 0.1;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    int iterations = 0;
};

/// Nelder-Mead with adaptive coefficients, every trial point projected onto
/// the box [lo, hi]. Coordinates with lo == hi stay fixed. Non-finite
/// objective values are treated as +inf.
NelderMeadResult nelder_mead_box(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi, const NelderMeadOptions& options = {});

}  // namespace obpc
