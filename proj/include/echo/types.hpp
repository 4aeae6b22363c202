#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace echo {

// Dense row-major matrix templated on scalar. double is the working type for
// every training and verification path; float exists as a storage type for
// checkpoints.
template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = MatT<double>;
using MatF = MatT<float>;
using Index = Eigen::Index;

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_str(Index rows, Index cols) {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

inline std::string shape_str(const Mat& m) {
    return shape_str(m.rows(), m.cols());
}

}  // namespace echo
