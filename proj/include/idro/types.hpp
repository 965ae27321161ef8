#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>

namespace idro {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace idro
