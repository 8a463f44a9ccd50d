#pragma once

// Training objectives: the flow-matching loss on the s = t diagonal and the
// solution consistency loss for s < t, both with detached adaptive weights,
// and their lambda-split combination.

#include <optional>
#include <span>
#include <vector>

#include "soflow/flowmath.hpp"
#include "soflow/gradtape.hpp"
#include "soflow/network.hpp"

namespace soflow::obj {

struct LossConfig {
  double lambda = 0.75;
  double p = 1.0;
  double epsilon = 1e-3;
  flow::NoisingSchedule schedule{flow::ScheduleKind::Linear};
  flow::SolutionParameterization param{flow::ParamKind::Euler};

  void validate() const;
};

enum class LossKind { FlowMatching, Consistency };

struct LossOutput {
  LossKind kind = LossKind::FlowMatching;
  ad::Value loss;              // mean(weight * mse), weights detached
  double value = 0.0;
  std::vector<double> mse;     // per sample, (1/n) |residual|^2
  std::vector<double> weight;  // per sample adaptive weight
  std::vector<double> t, l, s; // l and s are empty for the flow-matching loss
};

// w_FM = 1 / (|db(t)| (mse + eps)^p).
double fm_weight(const LossConfig& cfg, double t, double mse);
// w_SCM = 1 / ((t - l) |b(t, s)|) * 1 / ((mse / (t - l)^2 + eps)^p).
double scm_weight(const LossConfig& cfg, double t, double l, double s, double mse);

// Regresses da x_t + db F(x_t, t, t, c) onto the velocity target, which is
// alpha' x0 + beta' x1 unless `velocity_target` overrides it (guided training).
LossOutput fm_loss(const nn::BoundParams& params, const LossConfig& cfg, const Tensor& x0,
                   const Tensor& x1, std::span<const int> labels, std::span<const double> t,
                   const Tensor* velocity_target = nullptr);

// Regresses f(x_t, t, s, c) onto f_target(x_t + v (l - t), l, s, c), where v is
// alpha' x0 + beta' x1 or `velocity_target`. `target_params` must not carry
// gradient (detached or constant copies of the live parameters).
LossOutput scm_loss(const nn::BoundParams& params, const nn::BoundParams& target_params,
                    const LossConfig& cfg, const Tensor& x0, const Tensor& x1,
                    std::span<const int> labels, const flow::TimeTriples& times,
                    const Tensor* velocity_target = nullptr);

// Same, with the target evaluated through stop_gradient(params).
LossOutput scm_loss(const nn::BoundParams& params, const LossConfig& cfg, const Tensor& x0,
                    const Tensor& x1, std::span<const int> labels, const flow::TimeTriples& times,
                    const Tensor* velocity_target = nullptr);

// Number of leading batch samples routed to the flow-matching loss.
std::size_t fm_count(double lambda, std::size_t batch);

// One training batch after the lambda split. The first part feeds the
// flow-matching loss and the second the consistency loss. Velocity targets
// are optional overrides (see fm_loss / scm_loss).
struct SplitBatch {
  Tensor fm_x0, fm_x1;
  std::vector<int> fm_labels;
  std::vector<double> fm_t;
  std::optional<Tensor> fm_velocity;

  Tensor scm_x0, scm_x1;
  std::vector<int> scm_labels;
  flow::TimeTriples scm_times;
  std::optional<Tensor> scm_velocity;

  std::size_t fm_size() const { return fm_t.size(); }
  std::size_t scm_size() const { return scm_times.t.size(); }
};

struct CombinedLoss {
  ad::Value total;
  double value = 0.0;
  std::optional<LossOutput> fm;
  std::optional<LossOutput> scm;
};

// lambda * L_FM + (1 - lambda) * L_SCM, each a mean over its own sub-batch.
// An empty sub-batch drops its term and the other term carries weight 1.
CombinedLoss combined_loss(const nn::BoundParams& params, const LossConfig& cfg,
                           const SplitBatch& batch);

}  // namespace soflow::obj
