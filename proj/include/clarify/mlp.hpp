// Small feedforward networks with hand-written backpropagation over a flat
// parameter vector, plus the two first-order optimizers used for training.
#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "clarify/core.hpp"

namespace clarify {

enum class Activation { kIdentity, kTanh, kRelu };

// Layer widths [in, h1, ..., out]. Parameters are laid out layer by layer as
// a column-major (out x in) weight followed by an out-long bias. Batches are
// matrices whose columns are samples.
class MlpShape {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> outputs; // post-activation output of each layer
  };

  MlpShape() = default;
  MlpShape(std::vector<int> widths, Activation hidden, Activation output);

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  Eigen::Index num_params() const { return num_params_; }
  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  // Gaussian weights scaled by 1/sqrt(fan_in), zero biases.
  void init(std::span<double> params, Rng& rng) const;

  Eigen::MatrixXd forward(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x,
                          Cache* cache = nullptr) const;

  // Accumulates into dparams and returns the gradient w.r.t. the input.
  Eigen::MatrixXd backward(std::span<const double> params, const Cache& cache,
                           const Eigen::Ref<const Eigen::MatrixXd>& dy,
                           std::span<double> dparams) const;

 private:
  Eigen::Map<const Eigen::MatrixXd> weight(std::span<const double> p, int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::span<const double> p, int layer) const;
  Activation activation_of(int layer) const {
    return layer + 1 == num_layers() ? output_ : hidden_;
  }

  std::vector<int> widths_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index num_params_ = 0;
  Activation hidden_ = Activation::kTanh;
  Activation output_ = Activation::kIdentity;
};

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> as_span(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

enum class OptimizerKind { kGradientDescent, kAdam };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::kGradientDescent;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerOptions&) const = default;
};

// Fixed-step gradient descent or the adaptive-moment rule, over a flat vector.
class Optimizer {
 public:
  Optimizer(Eigen::Index n, OptimizerOptions options);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  OptimizerOptions opt_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace clarify
