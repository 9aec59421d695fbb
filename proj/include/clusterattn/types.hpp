#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace clusterattn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Column-major: per-cluster columns iterate cheaply.
template <typename Scalar>
using SparseMatrixX = Eigen::SparseMatrix<Scalar>;

using MatrixXb = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace clusterattn
