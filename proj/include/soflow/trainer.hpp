#pragma once

// The training loop: batch sampling, lambda split, time sampling, guided
// targets, combined loss, Adam, EMA. Every random draw comes from one of six
// named streams derived from the seed, so a run is reproducible from its
// config alone and resumable from a checkpoint that stores the stream states.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "soflow/checkpoint.hpp"
#include "soflow/config.hpp"
#include "soflow/flowmath.hpp"
#include "soflow/network.hpp"
#include "soflow/objectives.hpp"
#include "soflow/optimizer.hpp"

namespace soflow::harness {

struct StepStats {
  std::int64_t step = 0;  // completed steps after this one
  std::optional<double> fm_loss;
  std::optional<double> scm_loss;
  double total = 0.0;
  std::size_t dropped = 0;
};

// Engine for a named role, seeded from (seed, role).
std::mt19937_64 stream_engine(std::uint64_t seed, std::string_view role);

// Two configs train identically iff these hashes agree; the [run] fields that
// only steer logging and file output are left out.
std::uint64_t training_hash(const TrainConfig& cfg);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  // Resumes from `ckpt`. The optional config may differ from the echo only in
  // logging and output fields.
  explicit Trainer(const Checkpoint& ckpt);
  Trainer(const Checkpoint& ckpt, TrainConfig cfg);

  StepStats step();

  const TrainConfig& config() const { return cfg_; }
  std::int64_t step_index() const { return step_; }
  bool done() const { return step_ >= cfg_.steps; }
  const nn::ModelParams& live() const { return live_; }
  nn::ModelParams& live() { return live_; }
  const nn::ModelParams& ema() const { return ema_.shadow(); }
  Checkpoint checkpoint() const;

 private:
  obj::SplitBatch draw_batch();
  [[noreturn]] void abort_step(const obj::SplitBatch& batch, const std::string& what) const;

  TrainConfig cfg_;
  obj::LossConfig loss_;
  data::GmmSpec gmm_;
  std::int64_t step_ = 0;
  nn::ModelParams live_;
  nn::EmaParams ema_;
  optim::Adam adam_;
  std::mt19937_64 data_rng_, noise_rng_, dropout_rng_;
  flow::LogitNormalSampler fm_t_, scm_t_, scm_s_;
};

struct MetricsRow {
  std::int64_t step = 0;
  std::optional<double> fm_loss, scm_loss;
  double total = 0.0;
  std::optional<double> median_residual;
  std::optional<double> energy_distance;
  std::optional<double> wall_clock;
};

// CSV log. Each row is formatted in full and written with one call, then
// flushed. Numbers use the shortest round-trip form; absent values are empty.
class MetricsLogger {
 public:
  MetricsLogger(const std::string& path, bool append, bool wall_clock);

  void write(const MetricsRow& row);
  static std::string header(bool wall_clock);
  static std::string format(const MetricsRow& row, bool wall_clock);

 private:
  std::ofstream out_;
  bool wall_clock_;
};

struct TrainOptions {
  std::string resume;  // checkpoint to continue from
  std::function<void(const StepStats&)> on_step;
};

// Runs to cfg.steps, logging every log_every steps (and at evaluation steps),
// evaluating every eval_every steps and writing `<checkpoint>.step<k>` every
// checkpoint_every steps. The final state is saved to cfg.checkpoint when set
// and returned.
Checkpoint train(const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace soflow::harness
