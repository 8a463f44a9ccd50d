#pragma once

// Training configuration. On disk it is a flat `key = value` text file split
// into [sections]; unknown sections or keys are rejected. `to_text` emits the
// canonical form (every key, fixed order, shortest round-trip numbers), which
// is what checkpoints embed and hash.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "soflow/datasets.hpp"
#include "soflow/flowmath.hpp"
#include "soflow/guidance.hpp"
#include "soflow/network.hpp"
#include "soflow/objectives.hpp"

namespace soflow::harness {

struct TrainConfig {
  // [data]
  std::string preset = "ring8";
  bool conditional = true;
  // [network]
  std::vector<std::size_t> hidden{128, 128, 128};
  std::size_t embed_dim = 32;
  std::size_t label_dim = 16;
  double freq_base = 1e4;
  double freq_scale = 64.0;
  // [flow]
  flow::ScheduleKind schedule = flow::ScheduleKind::Linear;
  flow::ParamKind parameterization = flow::ParamKind::Euler;
  // [loss]
  double lambda = 0.75;
  double p = 1.0;
  double epsilon = 1e-3;
  // [lschedule]
  flow::LSchedule lschedule{flow::LScheduleKind::Exponential, 0.1, 0.002};
  // [time]
  double fm_mu = -0.2, fm_sigma = 1.0;
  double t_mu = 0.2, t_sigma = 0.8;
  double s_mu = -1.0, s_sigma = 0.8;
  // [guidance]
  guide::GuidanceConfig guidance{2.0, 0.25, 0.1, 0.75};
  // [optim]
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  // [run]
  std::size_t batch = 256;
  std::int64_t steps = 20000;
  std::uint64_t seed = 0;
  std::int64_t log_every = 100;
  std::int64_t eval_every = 0;
  std::int64_t checkpoint_every = 0;
  std::string checkpoint;
  std::string metrics;
  bool log_wall_clock = false;

  void validate() const;

  data::GmmSpec gmm() const;
  nn::NetworkShape network_shape() const;
  obj::LossConfig loss_config() const;
};

TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);
std::string to_text(const TrainConfig& cfg);

// FNV-1a over the canonical text.
std::uint64_t config_hash(const TrainConfig& cfg);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace soflow::harness
