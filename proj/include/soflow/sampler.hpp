#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "soflow/datasets.hpp"
#include "soflow/flowmath.hpp"
#include "soflow/guidance.hpp"
#include "soflow/network.hpp"

namespace soflow::sample {

// v(x, t) for a batch sharing one time.
using VelocityField = std::function<Tensor(const Tensor& x, double t)>;

enum class OdeMethod { Euler, RK4 };

struct SampleRequest {
  std::size_t count = 1;
  // One label for every sample, or one per sample. Empty means the empty label.
  std::vector<int> labels;
  int nfe = 1;
  std::uint64_t seed = 0;
  // Strictly decreasing times starting at 1, one per evaluation. Empty selects
  // uniform_grid(nfe).
  std::vector<double> grid;
};

// {1, 1 - 1/n, ..., 1/n}.
std::vector<double> uniform_grid(int nfe);

// f(x1, 1, 0, c) with x1 ~ N(0, I).
Tensor one_step_sample(const nn::ModelParams& params, const flow::SolutionParameterization& param,
                       const SampleRequest& request);

// Re-noising sampler: x0_hat = f(x, t_i, 0, c), then
// x = alpha(t_{i+1}) x0_hat + beta(t_{i+1}) z with fresh z.
Tensor multi_step_sample(const nn::ModelParams& params, const flow::SolutionParameterization& param,
                         const flow::NoisingSchedule& schedule, const SampleRequest& request);

// Integrates dX/dt = v(X, t) from t = 1 down to t = 0 in `steps` uniform steps.
Tensor ode_reference_sample(const VelocityField& velocity, Tensor x1, int steps, OdeMethod method);

// Same integration over [t_end, t_start] (t_start > t_end).
Tensor integrate(const VelocityField& velocity, Tensor x, double t_start, double t_end, int steps,
                 OdeMethod method);

// Marginal velocity E[alpha' x0 + beta' x1 | x_t = x] under a Gaussian-mixture
// p(x0) and standard normal x1, via closed-form posterior responsibilities.
// `class_filter` >= 0 restricts the mixture to that class (p(x0 | c)).
// Defined on all of [0, 1]: E[x1 | x_t] is formed directly rather than as
// (x_t - alpha E[x0 | x_t]) / beta, so t = 0 needs no special case.
Tensor analytic_gmm_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                             const Tensor& x, double t, int class_filter = -1);
// Row-wise times.
Tensor analytic_gmm_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                             const Tensor& x, std::span<const double> t, int class_filter = -1);

// w_eff v(x, t | c) + (1 - w_eff) v(x, t) per row; rows labelled
// `empty_label` get the unconditional field.
Tensor analytic_guided_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                                const guide::GuidanceConfig& guidance, const Tensor& x, double t,
                                std::span<const int> labels, int empty_label);
Tensor analytic_guided_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                                const guide::GuidanceConfig& guidance, const Tensor& x,
                                std::span<const double> t, std::span<const int> labels,
                                int empty_label);

}  // namespace soflow::sample
