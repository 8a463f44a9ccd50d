#include "soflow/optimizer.hpp"

#include <cmath>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::optim {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

Adam::Adam(AdamConfig cfg, const nn::ModelParams& like) : cfg_(cfg) {
  cfg_.validate();
  for (const Tensor& t : like.tensors()) {
    m_.emplace_back(t.shape(), 0.0);
    v_.emplace_back(t.shape(), 0.0);
  }
}

void Adam::step(nn::ModelParams& params, std::span<const Tensor> grads) {
  auto& tensors = params.tensors();
  if (grads.size() != tensors.size() || m_.size() != tensors.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(tensors.size()) + " tensors");
  }
  ++steps_;
  const double k = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, k);
  const double c2 = 1.0 - std::pow(cfg_.beta2, k);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!(grads[i].shape() == tensors[i].shape())) {
      throw ShapeError("adam: gradient " + std::to_string(i) + " has shape " +
                       grads[i].shape().str() + ", parameter has " + tensors[i].shape().str());
    }
    Tensor& p = tensors[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (steps < 0) throw DomainError("adam: negative step count");
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw ShapeError("adam: moment count does not match the parameters");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m[i].shape() == m_[i].shape()) || !(v[i].shape() == v_[i].shape())) {
      throw ShapeError("adam: moment " + std::to_string(i) + " has the wrong shape");
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace soflow::optim
