#pragma once

#include <Eigen/Core>

namespace aml::detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;

}  // namespace aml::detail
