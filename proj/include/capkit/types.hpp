#ifndef CAPKIT_TYPES_HPP_
#define CAPKIT_TYPES_HPP_

#include <Eigen/Dense>

namespace capkit {

using Scalar = double;

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Mat = MatrixX<Scalar>;
using Vec = VectorX<Scalar>;
using Index = Eigen::Index;

} // namespace capkit

#endif
