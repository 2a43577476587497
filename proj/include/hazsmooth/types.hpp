#pragma once

#include <Eigen/Dense>

namespace hazsmooth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace hazsmooth
