// Contrastive objectives evaluated directly on an embedding matrix whose
// columns are segment embeddings. Each kernel returns the loss value and,
// when `grad` is non-null, adds `weight * dLoss/dZ` into it.
#pragma once

#include <span>
#include <stdexcept>

#include <Eigen/Dense>

#include "clarify/metric.hpp"

namespace clarify {

struct IndexPair {
  int first = 0;
  int second = 0;
};

// Column indices of (z+, z-) from one clear query and (z+', z-') from another.
struct IndexQuad {
  int pos = 0;
  int neg = 0;
  int pos2 = 0;
  int neg2 = 0;
};

template <typename Scalar>
using EmbeddingMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar mean_pair_distance(const Eigen::MatrixBase<Derived>& z, std::span<const IndexPair> pairs,
                          DistanceMetric metric, EmbeddingMatrix<Scalar>* grad, Scalar coeff) {
  if (pairs.empty()) return Scalar(0);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(pairs.size());
  Scalar total(0);
  for (const auto& p : pairs) {
    total += distance(z.col(p.first), z.col(p.second), metric);
    if (grad) {
      const auto g = distance_grad(z.col(p.first), z.col(p.second), metric);
      grad->col(p.first) += coeff * inv * g;
      grad->col(p.second) -= coeff * inv * g;
    }
  }
  return total * inv;
}

}  // namespace detail

// Ambiguity loss: -mean_clear l(z0, z1) + mean_ambiguous l(z0, z1). An empty
// subset contributes zero.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar ambiguity_loss(const Eigen::MatrixBase<Derived>& z, std::span<const IndexPair> clear,
                      std::span<const IndexPair> ambiguous, DistanceMetric metric,
                      EmbeddingMatrix<Scalar>* grad = nullptr, Scalar weight = Scalar(1)) {
  return -detail::mean_pair_distance(z, clear, metric, grad, -weight) +
         detail::mean_pair_distance(z, ambiguous, metric, grad, weight);
}

// Quadrilateral loss: -mean[l(z+, z-') + l(z+', z-) - l(z+, z+') - l(z-, z-')].
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar quadrilateral_loss(const Eigen::MatrixBase<Derived>& z, std::span<const IndexQuad> quads,
                          DistanceMetric metric, EmbeddingMatrix<Scalar>* grad = nullptr,
                          Scalar weight = Scalar(1)) {
  if (quads.empty()) return Scalar(0);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(quads.size());
  Scalar total(0);
  auto term = [&](int a, int b, Scalar sign) {
    total += sign * distance(z.col(a), z.col(b), metric);
    if (grad) {
      const auto g = distance_grad(z.col(a), z.col(b), metric);
      grad->col(a) -= weight * inv * sign * g;
      grad->col(b) += weight * inv * sign * g;
    }
  };
  for (const auto& q : quads) {
    term(q.pos, q.neg2, Scalar(1));
    term(q.pos2, q.neg, Scalar(1));
    term(q.pos, q.pos2, Scalar(-1));
    term(q.neg, q.neg2, Scalar(-1));
  }
  return -total * inv;
}

// Norm loss: mean max(||z||, 1). At ||z|| == 1 exactly the gradient of the
// norm branch is used.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar norm_loss(const Eigen::MatrixBase<Derived>& z, std::span<const int> columns,
                 EmbeddingMatrix<Scalar>* grad = nullptr, Scalar weight = Scalar(1)) {
  if (columns.empty()) return Scalar(0);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(columns.size());
  Scalar total(0);
  for (int c : columns) {
    const Scalar n = z.col(c).norm();
    if (n >= Scalar(1)) {
      total += n;
      if (grad) grad->col(c) += weight * inv * z.col(c) / n;
    } else {
      total += Scalar(1);
    }
  }
  return total * inv;
}

}  // namespace clarify
