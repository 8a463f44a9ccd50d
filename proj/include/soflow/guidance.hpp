#pragma once

// Classifier-free guidance folded into the training targets. Guided samples
// regress onto
//
//   v_mix = m (w c + (1 - w) v_uncond) + (1 - m) v_guided,
//
// where c = alpha' x0 + beta' x1 and both model velocities come from detached
// parameters. A `drop_rate` fraction of samples instead keep the raw target c
// and switch to the empty label.

#include <random>
#include <span>
#include <vector>

#include "soflow/flowmath.hpp"
#include "soflow/network.hpp"
#include "soflow/objectives.hpp"

namespace soflow::guide {

struct GuidanceConfig {
  double w = 2.0;
  double m = 0.25;
  double drop_rate = 0.1;
  double t_decay = 0.75;

  void validate() const;
};

// w for t <= t_decay; above it, 1 + (w - 1) g(t) with
// g = 1 - exp(-(1/40) u / (1 - u)), u = min((1 - t) / (1 - t_decay), 1 - 1e-6).
double effective_strength(const GuidanceConfig& cfg, double t);

// Row-wise v_mix given the detached model velocities.
Tensor mix_velocity(const GuidanceConfig& cfg, std::span<const double> t,
                    const Tensor& cond_target, const Tensor& v_uncond, const Tensor& v_guided);

// Evaluates v_uncond (empty label) and v_guided (given labels) with `params`
// and returns v_mix. No gradient flows anywhere.
Tensor v_mix(const GuidanceConfig& cfg, const nn::ModelParams& params,
             const flow::SolutionParameterization& param, const Tensor& xt,
             std::span<const double> t, std::span<const int> labels, const Tensor& cond_target);

// Rewrites the labels and velocity targets of both sub-batches in place. Drop
// decisions are drawn per sample from `rng`, flow-matching samples first.
// Returns the number of dropped samples.
std::size_t guided_batch_prepare(const GuidanceConfig& cfg, const obj::LossConfig& loss_cfg,
                                 obj::SplitBatch& batch, const nn::ModelParams& params,
                                 std::mt19937_64& rng);

}  // namespace soflow::guide
