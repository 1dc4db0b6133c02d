#pragma once

#include <Eigen/Dense>

namespace clarify {

// Ranks starting at 1; tied values share their average rank.
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& x);

double pearson(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

// Pearson correlation of average ranks. Returns 0 when either input is
// constant.
double spearman(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

// Affine map of the range onto [0, 1]; a constant input maps to 0.5.
Eigen::VectorXd minmax_normalize(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace clarify
