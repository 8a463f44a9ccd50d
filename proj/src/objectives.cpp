#include "soflow/objectives.hpp"

#include <cmath>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::obj {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("loss: lambda must lie in [0, 1]");
  if (!(p >= 0.0)) throw ConfigError("loss: p must be non-negative");
  if (!(epsilon > 0.0)) throw ConfigError("loss: epsilon must be positive");
}

double fm_weight(const LossConfig& cfg, double t, double mse) {
  const double db = std::abs(cfg.param.diag_partials(t).db);
  return 1.0 / (db * std::pow(mse + cfg.epsilon, cfg.p));
}

double scm_weight(const LossConfig& cfg, double t, double l, double s, double mse) {
  const double gap = t - l;
  const double scale = 1.0 / (gap * std::abs(cfg.param.b(t, s)));
  return scale / std::pow(mse / (gap * gap) + cfg.epsilon, cfg.p);
}

namespace {

struct Weighted {
  ad::Value loss;
  std::vector<double> mse;
};

// mean_i(w_i * mean_j (pred - target)_ij^2) with w computed from the detached
// per-sample mse.
template <class WeightFn>
Weighted weighted_mse(const ad::Value& pred, const ad::Value& target, WeightFn weight_of,
                      std::vector<double>& weights, const char* name) {
  ad::Tape& tape = pred.tape();
  const ad::Value per_sample = ad::row_mean(ad::square(pred - target));
  const Tensor& mse_values = per_sample.data();
  Weighted out;
  out.mse.assign(mse_values.values().begin(), mse_values.values().end());
  weights.resize(out.mse.size());
  for (std::size_t i = 0; i < out.mse.size(); ++i) {
    weights[i] = weight_of(i, out.mse[i]);
    const double contribution = weights[i] * out.mse[i];
    if (!std::isfinite(contribution)) {
      throw NumericError(std::string(name) + ": non-finite loss at sample " + std::to_string(i) +
                         " (mse=" + std::to_string(out.mse[i]) +
                         ", weight=" + std::to_string(weights[i]) + ")");
    }
  }
  out.loss = ad::mean(per_sample * tape.constant(Tensor::column(weights)));
  return out;
}

}  // namespace

LossOutput fm_loss(const nn::BoundParams& params, const LossConfig& cfg, const Tensor& x0,
                   const Tensor& x1, std::span<const int> labels, std::span<const double> t,
                   const Tensor* velocity_target) {
  if (t.empty()) throw ShapeError("fm_loss: empty batch");
  ad::Tape& tape = params.tensors.front().tape();
  const Tensor xt = flow::interpolate(cfg.schedule, x0, x1, t);
  Tensor target = velocity_target ? *velocity_target
                                  : flow::conditional_velocity(cfg.schedule, x0, x1, t);
  if (target.shape() != xt.shape()) {
    throw ShapeError("fm_loss: velocity target " + target.shape().str() + " vs " +
                     xt.shape().str());
  }
  const ad::Value pred = nn::predicted_velocity(params, cfg.param, tape.constant(xt), t, labels);

  LossOutput out;
  out.kind = LossKind::FlowMatching;
  out.t.assign(t.begin(), t.end());
  Weighted w = weighted_mse(
      pred, tape.constant(std::move(target)),
      [&](std::size_t i, double mse) { return fm_weight(cfg, t[i], mse); }, out.weight,
      "fm_loss");
  out.loss = w.loss;
  out.value = w.loss.item();
  out.mse = std::move(w.mse);
  return out;
}

LossOutput scm_loss(const nn::BoundParams& params, const nn::BoundParams& target_params,
                    const LossConfig& cfg, const Tensor& x0, const Tensor& x1,
                    std::span<const int> labels, const flow::TimeTriples& times,
                    const Tensor* velocity_target) {
  const std::size_t n = times.t.size();
  if (n == 0) throw ShapeError("scm_loss: empty batch");
  if (times.l.size() != n || times.s.size() != n) throw ShapeError("scm_loss: ragged t/l/s");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(times.t[i] - times.l[i] >= 1e-12)) {
      throw DomainError("scm_loss: t - l below 1e-12 at sample " + std::to_string(i));
    }
    if (times.s[i] > times.l[i]) {
      throw DomainError("scm_loss: s > l at sample " + std::to_string(i));
    }
  }
  ad::Tape& tape = params.tensors.front().tape();
  const Tensor xt = flow::interpolate(cfg.schedule, x0, x1, times.t);
  const Tensor velocity = velocity_target
                              ? *velocity_target
                              : flow::conditional_velocity(cfg.schedule, x0, x1, times.t);
  if (velocity.shape() != xt.shape()) {
    throw ShapeError("scm_loss: velocity target " + velocity.shape().str() + " vs " +
                     xt.shape().str());
  }
  Tensor advanced = xt;
  for (std::size_t r = 0; r < n; ++r) {
    const double step = times.l[r] - times.t[r];
    for (std::size_t c = 0; c < xt.cols(); ++c) advanced(r, c) += velocity(r, c) * step;
  }

  const ad::Value target = nn::forward_solution(target_params, cfg.param,
                                                tape.constant(std::move(advanced)), times.l,
                                                times.s, labels);
  if (target.requires_grad()) {
    throw DomainError("scm_loss: target parameters must be detached");
  }
  const ad::Value pred =
      nn::forward_solution(params, cfg.param, tape.constant(xt), times.t, times.s, labels);

  LossOutput out;
  out.kind = LossKind::Consistency;
  out.t = times.t;
  out.l = times.l;
  out.s = times.s;
  Weighted w = weighted_mse(
      pred, target,
      [&](std::size_t i, double mse) {
        return scm_weight(cfg, times.t[i], times.l[i], times.s[i], mse);
      },
      out.weight, "scm_loss");
  out.loss = w.loss;
  out.value = w.loss.item();
  out.mse = std::move(w.mse);
  return out;
}

LossOutput scm_loss(const nn::BoundParams& params, const LossConfig& cfg, const Tensor& x0,
                    const Tensor& x1, std::span<const int> labels, const flow::TimeTriples& times,
                    const Tensor* velocity_target) {
  return scm_loss(params, nn::detach(params), cfg, x0, x1, labels, times, velocity_target);
}

std::size_t fm_count(double lambda, std::size_t batch) {
  // The epsilon absorbs representation error in lambda (e.g. 0.3 * 10).
  return static_cast<std::size_t>(std::floor(lambda * static_cast<double>(batch) + 1e-9));
}

CombinedLoss combined_loss(const nn::BoundParams& params, const LossConfig& cfg,
                           const SplitBatch& batch) {
  CombinedLoss out;
  if (batch.fm_size() > 0) {
    out.fm = fm_loss(params, cfg, batch.fm_x0, batch.fm_x1, batch.fm_labels, batch.fm_t,
                     batch.fm_velocity ? &*batch.fm_velocity : nullptr);
  }
  if (batch.scm_size() > 0) {
    out.scm = scm_loss(params, cfg, batch.scm_x0, batch.scm_x1, batch.scm_labels,
                       batch.scm_times, batch.scm_velocity ? &*batch.scm_velocity : nullptr);
  }
  if (out.fm && out.scm) {
    out.total = ad::scale(out.fm->loss, cfg.lambda) + ad::scale(out.scm->loss, 1.0 - cfg.lambda);
  } else if (out.fm) {
    out.total = out.fm->loss;
  } else if (out.scm) {
    out.total = out.scm->loss;
  } else {
    throw ShapeError("combined_loss: empty batch");
  }
  out.value = out.total.item();
  return out;
}

}  // namespace soflow::obj
