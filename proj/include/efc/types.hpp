#pragma once

#include <Eigen/Dense>

namespace efc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace efc
