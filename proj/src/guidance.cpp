#include "soflow/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "soflow/errors.hpp"

namespace soflow::guide {

void GuidanceConfig::validate() const {
  if (!(w >= 1.0)) throw ConfigError("guidance: w must be >= 1");
  if (!(m > 0.0 && m <= 1.0)) throw ConfigError("guidance: m must lie in (0, 1]");
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) {
    throw ConfigError("guidance: drop_rate must lie in [0, 1]");
  }
  if (!(t_decay > 0.0 && t_decay < 1.0)) throw ConfigError("guidance: t_decay must lie in (0, 1)");
}

double effective_strength(const GuidanceConfig& cfg, double t) {
  if (t <= cfg.t_decay) return cfg.w;
  const double u = std::min((1.0 - t) / (1.0 - cfg.t_decay), 1.0 - 1e-6);
  const double g = 1.0 - std::exp(-(1.0 / 40.0) * u / (1.0 - u));
  return 1.0 + (cfg.w - 1.0) * g;
}

Tensor mix_velocity(const GuidanceConfig& cfg, std::span<const double> t,
                    const Tensor& cond_target, const Tensor& v_uncond, const Tensor& v_guided) {
  if (cond_target.shape() != v_uncond.shape() || cond_target.shape() != v_guided.shape() ||
      t.size() != cond_target.rows()) {
    throw ShapeError("v_mix: mismatched inputs");
  }
  Tensor out(cond_target.shape());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double w = effective_strength(cfg, t[r]);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = cfg.m * (w * cond_target(r, c) + (1.0 - w) * v_uncond(r, c)) +
                  (1.0 - cfg.m) * v_guided(r, c);
    }
  }
  return out;
}

Tensor v_mix(const GuidanceConfig& cfg, const nn::ModelParams& params,
             const flow::SolutionParameterization& param, const Tensor& xt,
             std::span<const double> t, std::span<const int> labels, const Tensor& cond_target) {
  const std::size_t n = xt.rows();
  // One evaluation over [uncond rows; guided rows].
  std::vector<double> times(t.begin(), t.end());
  times.insert(times.end(), t.begin(), t.end());
  std::vector<int> both(n, params.shape().empty_label());
  both.insert(both.end(), labels.begin(), labels.end());
  const Tensor v = nn::evaluate_velocity(params, param, vstack(xt, xt), times, both);
  return mix_velocity(cfg, t, cond_target, v.slice_rows(0, n), v.slice_rows(n, n));
}

namespace {

struct Part {
  const Tensor& x0;
  const Tensor& x1;
  std::span<const double> t;
  std::vector<int>& labels;
  std::optional<Tensor>& velocity;
};

}  // namespace

std::size_t guided_batch_prepare(const GuidanceConfig& cfg, const obj::LossConfig& loss_cfg,
                                 obj::SplitBatch& batch, const nn::ModelParams& params,
                                 std::mt19937_64& rng) {
  const int empty = params.shape().empty_label();
  Part parts[] = {
      {batch.fm_x0, batch.fm_x1, batch.fm_t, batch.fm_labels, batch.fm_velocity},
      {batch.scm_x0, batch.scm_x1, batch.scm_times.t, batch.scm_labels, batch.scm_velocity},
  };
  std::bernoulli_distribution drop(cfg.drop_rate);
  std::size_t dropped = 0;
  for (Part& part : parts) {
    const std::size_t n = part.t.size();
    if (n == 0) continue;
    Tensor target = flow::conditional_velocity(loss_cfg.schedule, part.x0, part.x1, part.t);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
      if (drop(rng) || part.labels[i] == empty) {
        part.labels[i] = empty;
        ++dropped;
      } else {
        kept.push_back(i);
      }
    }
    if (!kept.empty()) {
      const Tensor xt = flow::interpolate(loss_cfg.schedule, part.x0, part.x1, part.t);
      std::vector<double> kept_t;
      std::vector<int> kept_labels;
      for (std::size_t i : kept) {
        kept_t.push_back(part.t[i]);
        kept_labels.push_back(part.labels[i]);
      }
      const Tensor mixed = v_mix(cfg, params, loss_cfg.param, xt.gather_rows(kept), kept_t,
                                 kept_labels, target.gather_rows(kept));
      for (std::size_t k = 0; k < kept.size(); ++k) {
        std::copy(mixed.row_span(k).begin(), mixed.row_span(k).end(),
                  target.row_span(kept[k]).begin());
      }
    }
    part.velocity = std::move(target);
  }
  return dropped;
}

}  // namespace soflow::guide
