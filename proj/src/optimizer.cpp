#include "cvdm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cvdm {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  for (const Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

double Adam::step() {
  double sq = 0.0;
  for (const Parameter* p : params_) sq += p->grad.data().square().sum();
  const double norm = std::sqrt(sq);
  const double scale = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Eigen::ArrayXd g = params_[k]->grad.data() * scale;
    Eigen::ArrayXd& m = m_[k].data();
    Eigen::ArrayXd& v = v_[k].data();
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.square();
    params_[k]->value.data() -= config_.learning_rate * (m / c1) / ((v / c2).sqrt() + config_.eps);
  }
  return norm;
}

}  // namespace cvdm
