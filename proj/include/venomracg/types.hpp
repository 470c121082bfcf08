#pragma once

#include <Eigen/Core>

namespace venomracg {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVectorX = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatrixXd = MatrixX<double>;
using VectorXd = VectorX<double>;
using RowVectorXd = RowVectorX<double>;

} // namespace venomracg
