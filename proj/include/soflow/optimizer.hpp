#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "soflow/network.hpp"
#include "soflow/tensor.hpp"

namespace soflow::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;

  void validate() const;
};

// Adam with bias correction. Moments are kept per parameter tensor.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const nn::ModelParams& like);

  void step(nn::ModelParams& params, std::span<const Tensor> grads);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }
  void restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace soflow::optim
