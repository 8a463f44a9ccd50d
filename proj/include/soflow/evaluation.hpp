#pragma once

// Fixed-seed evaluation of a trained model against the closed-form fields of
// its training distribution.

#include <cstdint>
#include <vector>

#include "soflow/config.hpp"
#include "soflow/network.hpp"
#include "soflow/sampler.hpp"
#include "soflow/verify.hpp"

namespace soflow::harness {

// Labels drawn with the class weights of the preset, or all empty labels for
// an unconditional config.
std::vector<int> draw_labels(const TrainConfig& cfg, std::size_t count, std::uint64_t seed);

// The field the model is trained to follow for the given row labels: the
// guided mixture field when conditional, the marginal field otherwise.
verify::FieldFn target_field(const TrainConfig& cfg, std::vector<int> labels);
sample::VelocityField target_velocity(const TrainConfig& cfg, std::vector<int> labels);

verify::SolutionFn model_solution(const nn::ModelParams& params, const TrainConfig& cfg,
                                  std::vector<int> labels);

// Mean |v_theta(x_t, t) - v(x_t, t)| over x_t ~ p(x_t), t ~ U(0, 1).
double velocity_error(const nn::ModelParams& params, const TrainConfig& cfg, std::size_t count,
                      std::uint64_t seed);

struct ProbeGrid {
  Tensor x;
  std::vector<double> t, s;
  std::vector<int> labels;
};

// x ~ p(x_t) at t ~ U(0.05, 1), s = t u with u ~ U(0, 0.8).
ProbeGrid residual_probes(const TrainConfig& cfg, std::size_t count, std::uint64_t seed);

verify::ResidualReport probe_residual(const nn::ModelParams& params, const TrainConfig& cfg,
                                      const ProbeGrid& grid, double h = 1e-3);

// nfe-step samples for the given labels.
Tensor generate(const nn::ModelParams& params, const TrainConfig& cfg, std::vector<int> labels,
                int nfe, std::uint64_t seed);

// RK4 integration of target_field from t = 1.
Tensor oracle_samples(const TrainConfig& cfg, const std::vector<int>& labels, std::uint64_t seed,
                      int steps = 200);

Tensor fresh_data(const TrainConfig& cfg, std::size_t count, std::uint64_t seed);

struct PeriodicEval {
  double median_residual = 0.0;
  double energy_distance = 0.0;
};

// 256 residual probes and 1000 one-step samples against 1000 data points,
// all on fixed seeds.
PeriodicEval periodic_eval(const nn::ModelParams& params, const TrainConfig& cfg);

}  // namespace soflow::harness
