#include "clarify/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace clarify {

namespace {

void apply(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kTanh: z = z.array().tanh(); break;
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
  }
}

// dL/dpre given dL/dout and the activation output.
void apply_grad(Activation act, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kTanh: grad.array() *= 1.0 - out.array().square(); break;
    case Activation::kRelu: grad = (out.array() > 0.0).select(grad, 0.0); break;
  }
}

}  // namespace

MlpShape::MlpShape(std::vector<int> widths, Activation hidden, Activation output)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  if (widths_.size() < 2) throw std::invalid_argument("mlp needs at least input and output widths");
  for (int w : widths_)
    if (w < 1) throw std::invalid_argument("mlp widths must be positive");
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(num_params_);
    num_params_ += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
  }
}

Eigen::Map<const Eigen::MatrixXd> MlpShape::weight(std::span<const double> p, int layer) const {
  return {p.data() + offsets_[layer], widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Eigen::VectorXd> MlpShape::bias(std::span<const double> p, int layer) const {
  return {p.data() + offsets_[layer] + static_cast<Eigen::Index>(widths_[layer + 1]) * widths_[layer],
          widths_[layer + 1]};
}

void MlpShape::init(std::span<double> params, Rng& rng) const {
  if (static_cast<Eigen::Index>(params.size()) != num_params_)
    throw std::invalid_argument("parameter span has wrong size");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < num_layers(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const Eigen::Index n_w = static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l];
    double* w = params.data() + offsets_[l];
    for (Eigen::Index i = 0; i < n_w; ++i) w[i] = scale * gauss(rng);
    for (int i = 0; i < widths_[l + 1]; ++i) w[n_w + i] = 0.0;
  }
}

Eigen::MatrixXd MlpShape::forward(std::span<const double> params,
                                  const Eigen::Ref<const Eigen::MatrixXd>& x, Cache* cache) const {
  if (x.rows() != input_dim()) throw std::invalid_argument("mlp input has wrong dimension");
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Eigen::MatrixXd h = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(params, l) * h;
    z.colwise() += bias(params, l);
    apply(activation_of(l), z);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->outputs.push_back(z);
    }
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd MlpShape::backward(std::span<const double> params, const Cache& cache,
                                   const Eigen::Ref<const Eigen::MatrixXd>& dy,
                                   std::span<double> dparams) const {
  Eigen::MatrixXd grad = dy;
  for (int l = num_layers() - 1; l >= 0; --l) {
    apply_grad(activation_of(l), cache.outputs[l], grad);
    const Eigen::Index n_w = static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l];
    Eigen::Map<Eigen::MatrixXd> dw(dparams.data() + offsets_[l], widths_[l + 1], widths_[l]);
    Eigen::Map<Eigen::VectorXd> db(dparams.data() + offsets_[l] + n_w, widths_[l + 1]);
    dw.noalias() += grad * cache.inputs[l].transpose();
    db += grad.rowwise().sum();
    grad = weight(params, l).transpose() * grad;
  }
  return grad;
}

Optimizer::Optimizer(Eigen::Index n, OptimizerOptions options) : opt_(options) {
  if (opt_.kind == OptimizerKind::kAdam) {
    m_ = Eigen::VectorXd::Zero(n);
    v_ = Eigen::VectorXd::Zero(n);
  }
}

void Optimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (opt_.kind == OptimizerKind::kGradientDescent) {
    params.noalias() -= opt_.lr * grad;
    return;
  }
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  params.array() -= opt_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
}

}  // namespace clarify
