#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace clarify {

enum class DistanceMetric { kL2, kSquaredL2 };

inline std::string_view metric_name(DistanceMetric m) {
  return m == DistanceMetric::kL2 ? "l2" : "squared_l2";
}

inline DistanceMetric parse_metric(std::string_view s) {
  if (s == "l2") return DistanceMetric::kL2;
  if (s == "squared_l2") return DistanceMetric::kSquaredL2;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar distance(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b, DistanceMetric metric) {
  const auto sq = (a - b).squaredNorm();
  return metric == DistanceMetric::kL2 ? std::sqrt(sq) : sq;
}

// Gradient of distance(a, b) with respect to a; the gradient with respect to
// b is its negation. L2 at a == b takes the zero subgradient.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> distance_grad(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    DistanceMetric metric) {
  using Scalar = typename DerivedA::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> diff = a - b;
  if (metric == DistanceMetric::kSquaredL2) return Scalar(2) * diff;
  const Scalar n = diff.norm();
  if (n == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(diff.size());
  return diff / n;
}

}  // namespace clarify
