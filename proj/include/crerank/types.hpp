#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace crerank {

// Dense item index into an ItemVocab; contiguous from 0.
using ItemIndex = std::uint32_t;

// Matrices are row-major so checkpoint serialization is a straight scan.
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

using Eigen::Index;

}  // namespace crerank
