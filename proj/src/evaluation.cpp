#include "soflow/evaluation.hpp"

#include <random>

#include "soflow/datasets.hpp"
#include "soflow/errors.hpp"
#include "soflow/metrics.hpp"

namespace soflow::harness {
namespace {

int empty_label(const TrainConfig& cfg) { return cfg.network_shape().empty_label(); }

}  // namespace

std::vector<int> draw_labels(const TrainConfig& cfg, std::size_t count, std::uint64_t seed) {
  if (!cfg.conditional) return std::vector<int>(count, empty_label(cfg));
  const data::GmmSpec gmm = cfg.gmm();
  std::vector<double> class_weight(static_cast<std::size_t>(gmm.num_classes()), 0.0);
  for (std::size_t k = 0; k < gmm.num_components(); ++k) {
    class_weight[static_cast<std::size_t>(gmm.classes[k])] += gmm.weights[k];
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(class_weight.begin(), class_weight.end());
  std::vector<int> labels(count);
  for (int& l : labels) l = pick(rng);
  return labels;
}

verify::FieldFn target_field(const TrainConfig& cfg, std::vector<int> labels) {
  const data::GmmSpec gmm = cfg.gmm();
  const flow::NoisingSchedule schedule(cfg.schedule);
  if (!cfg.conditional) {
    return [gmm, schedule](const Tensor& x, std::span<const double> t) {
      return sample::analytic_gmm_velocity(gmm, schedule, x, t);
    };
  }
  const guide::GuidanceConfig guidance = cfg.guidance;
  const int empty = empty_label(cfg);
  return [gmm, schedule, guidance, empty, labels = std::move(labels)](
             const Tensor& x, std::span<const double> t) {
    return sample::analytic_guided_velocity(gmm, schedule, guidance, x, t, labels, empty);
  };
}

sample::VelocityField target_velocity(const TrainConfig& cfg, std::vector<int> labels) {
  verify::FieldFn field = target_field(cfg, std::move(labels));
  return [field](const Tensor& x, double t) {
    const std::vector<double> times(x.rows(), t);
    return field(x, times);
  };
}

verify::SolutionFn model_solution(const nn::ModelParams& params, const TrainConfig& cfg,
                                  std::vector<int> labels) {
  return verify::model_solution(params, flow::SolutionParameterization(cfg.parameterization),
                                std::move(labels));
}

double velocity_error(const nn::ModelParams& params, const TrainConfig& cfg, std::size_t count,
                      std::uint64_t seed) {
  if (count == 0) throw DomainError("velocity_error: count must be >= 1");
  std::mt19937_64 rng(seed);
  const data::GmmSpec gmm = cfg.gmm();
  data::LabeledPoints d = data::sample_data(gmm, count, rng);
  const Tensor x1 = data::sample_normal(count, gmm.dim(), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> t(count);
  for (double& v : t) v = unit(rng);
  if (!cfg.conditional) d.labels.assign(count, empty_label(cfg));
  const flow::NoisingSchedule schedule(cfg.schedule);
  const Tensor xt = flow::interpolate(schedule, d.points, x1, t);
  const Tensor model = nn::evaluate_velocity(
      params, flow::SolutionParameterization(cfg.parameterization), xt, t, d.labels);
  const Tensor truth = target_field(cfg, d.labels)(xt, t);
  double total = 0.0;
  for (std::size_t r = 0; r < count; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < xt.cols(); ++c) {
      const double diff = model(r, c) - truth(r, c);
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(count);
}

ProbeGrid residual_probes(const TrainConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const data::GmmSpec gmm = cfg.gmm();
  data::LabeledPoints d = data::sample_data(gmm, count, rng);
  const Tensor x1 = data::sample_normal(count, gmm.dim(), rng);
  std::uniform_real_distribution<double> t_dist(0.05, 1.0), frac(0.0, 0.8);
  ProbeGrid grid;
  grid.t.resize(count);
  grid.s.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid.t[i] = t_dist(rng);
    grid.s[i] = grid.t[i] * frac(rng);
  }
  grid.labels = cfg.conditional ? d.labels : std::vector<int>(count, empty_label(cfg));
  grid.x = flow::interpolate(flow::NoisingSchedule(cfg.schedule), d.points, x1, grid.t);
  return grid;
}

verify::ResidualReport probe_residual(const nn::ModelParams& params, const TrainConfig& cfg,
                                      const ProbeGrid& grid, double h) {
  return verify::residual_report(model_solution(params, cfg, grid.labels),
                                 target_field(cfg, grid.labels), grid.x, grid.t, grid.s, h);
}

Tensor generate(const nn::ModelParams& params, const TrainConfig& cfg, std::vector<int> labels,
                int nfe, std::uint64_t seed) {
  sample::SampleRequest req;
  req.count = labels.size();
  req.labels = std::move(labels);
  req.nfe = nfe;
  req.seed = seed;
  const flow::SolutionParameterization param(cfg.parameterization);
  if (nfe == 1) return sample::one_step_sample(params, param, req);
  return sample::multi_step_sample(params, param, flow::NoisingSchedule(cfg.schedule), req);
}

Tensor oracle_samples(const TrainConfig& cfg, const std::vector<int>& labels, std::uint64_t seed,
                      int steps) {
  std::mt19937_64 rng(seed);
  Tensor x1 = data::sample_normal(labels.size(), cfg.gmm().dim(), rng);
  return sample::ode_reference_sample(target_velocity(cfg, labels), std::move(x1), steps,
                                      sample::OdeMethod::RK4);
}

Tensor fresh_data(const TrainConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return data::sample_data(cfg.gmm(), count, rng).points;
}

PeriodicEval periodic_eval(const nn::ModelParams& params, const TrainConfig& cfg) {
  PeriodicEval out;
  out.median_residual = probe_residual(params, cfg, residual_probes(cfg, 256, 0x70be)).median;
  const Tensor samples = generate(params, cfg, draw_labels(cfg, 1000, 0x1abe1), 1, 0x5a3e);
  out.energy_distance = metrics::energy_distance(samples, fresh_data(cfg, 1000, 0xda7a));
  return out;
}

}  // namespace soflow::harness
