#include "structfusion/optim.hpp"

#include <cmath>

namespace structfusion {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    if (p->grad.size()) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      if (p->grad.size()) p->grad *= s;
  }
  return norm;
}

}  // namespace structfusion
