#include "soflow/trainer.hpp"

#include <charconv>
#include <chrono>
#include <filesystem>
#include <sstream>

#include "soflow/datasets.hpp"
#include "soflow/errors.hpp"
#include "soflow/evaluation.hpp"
#include "soflow/guidance.hpp"

namespace soflow::harness {
namespace {

constexpr const char* kStreams[] = {"data", "noise", "dropout", "fm_t", "scm_t", "scm_s"};

std::string engine_state(const std::mt19937_64& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

void restore_engine(std::mt19937_64& e, const std::map<std::string, std::string>& streams,
                    const std::string& name) {
  const auto it = streams.find(name);
  if (it == streams.end()) throw FormatError("checkpoint: missing stream '" + name + "'");
  std::istringstream is(it->second);
  is >> e;
  if (!is) throw FormatError("checkpoint: unreadable state for stream '" + name + "'");
}

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t count) {
  return t.slice_rows(begin, count);
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::mt19937_64 stream_engine(std::uint64_t seed, std::string_view role) {
  const std::uint64_t tag = fnv1a(role);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t training_hash(const TrainConfig& cfg) {
  TrainConfig c = cfg;
  const TrainConfig defaults;
  c.log_every = defaults.log_every;
  c.eval_every = defaults.eval_every;
  c.checkpoint_every = defaults.checkpoint_every;
  c.checkpoint = defaults.checkpoint;
  c.metrics = defaults.metrics;
  c.log_wall_clock = defaults.log_wall_clock;
  return config_hash(c);
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      fm_t_(cfg_.fm_mu, cfg_.fm_sigma, 0),
      scm_t_(cfg_.t_mu, cfg_.t_sigma, 0),
      scm_s_(cfg_.s_mu, cfg_.s_sigma, 0) {
  cfg_.validate();
  loss_ = cfg_.loss_config();
  gmm_ = cfg_.gmm();
  std::mt19937_64 init = stream_engine(cfg_.seed, "init");
  live_ = nn::ModelParams::initialize(cfg_.network_shape(), init());
  ema_ = nn::EmaParams(live_, cfg_.ema_decay);
  adam_ = optim::Adam({cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps}, live_);
  data_rng_ = stream_engine(cfg_.seed, "data");
  noise_rng_ = stream_engine(cfg_.seed, "noise");
  dropout_rng_ = stream_engine(cfg_.seed, "dropout");
  fm_t_.engine() = stream_engine(cfg_.seed, "fm_t");
  scm_t_.engine() = stream_engine(cfg_.seed, "scm_t");
  scm_s_.engine() = stream_engine(cfg_.seed, "scm_s");
}

Trainer::Trainer(const Checkpoint& ckpt) : Trainer(ckpt, parse_config(ckpt.config_text)) {}

Trainer::Trainer(const Checkpoint& ckpt, TrainConfig cfg) : Trainer(std::move(cfg)) {
  if (training_hash(cfg_) != training_hash(parse_config(ckpt.config_text))) {
    throw ConfigError("resume: config differs from the checkpoint in a training setting");
  }
  if (ckpt.step < 0 || ckpt.step > cfg_.steps) {
    throw FormatError("checkpoint: step " + std::to_string(ckpt.step) + " outside the run");
  }
  step_ = ckpt.step;
  live_ = ckpt.live;
  ema_ = nn::EmaParams(ckpt.ema, cfg_.ema_decay);
  adam_.restore(ckpt.adam_steps, ckpt.adam_m, ckpt.adam_v);
  restore_engine(data_rng_, ckpt.streams, "data");
  restore_engine(noise_rng_, ckpt.streams, "noise");
  restore_engine(dropout_rng_, ckpt.streams, "dropout");
  restore_engine(fm_t_.engine(), ckpt.streams, "fm_t");
  restore_engine(scm_t_.engine(), ckpt.streams, "scm_t");
  restore_engine(scm_s_.engine(), ckpt.streams, "scm_s");
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = to_text(cfg_);
  c.config_hash = fnv1a(c.config_text);
  c.step = step_;
  c.streams["data"] = engine_state(data_rng_);
  c.streams["noise"] = engine_state(noise_rng_);
  c.streams["dropout"] = engine_state(dropout_rng_);
  c.streams["fm_t"] = engine_state(fm_t_.engine());
  c.streams["scm_t"] = engine_state(scm_t_.engine());
  c.streams["scm_s"] = engine_state(scm_s_.engine());
  c.live = live_;
  c.ema = ema_.shadow();
  c.adam_steps = adam_.steps();
  c.adam_m = adam_.first_moment();
  c.adam_v = adam_.second_moment();
  return c;
}

obj::SplitBatch Trainer::draw_batch() {
  const std::size_t B = cfg_.batch;
  data::LabeledPoints d = data::sample_data(gmm_, B, data_rng_);
  const Tensor x1 = data::sample_normal(B, gmm_.dim(), noise_rng_);
  std::vector<int> labels = cfg_.conditional
                                ? d.labels
                                : std::vector<int>(B, live_.shape().empty_label());
  const std::size_t n_fm = obj::fm_count(cfg_.lambda, B);
  const std::size_t n_scm = B - n_fm;

  obj::SplitBatch b;
  b.fm_x0 = rows_of(d.points, 0, n_fm);
  b.fm_x1 = rows_of(x1, 0, n_fm);
  b.fm_labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_fm));
  b.fm_t = fm_t_.sample(n_fm);
  b.scm_x0 = rows_of(d.points, n_fm, n_scm);
  b.scm_x1 = rows_of(x1, n_fm, n_scm);
  b.scm_labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_fm), labels.end());
  b.scm_times = flow::sample_tls(scm_t_, scm_s_, cfg_.lschedule, step_, cfg_.steps, n_scm);
  return b;
}

void Trainer::abort_step(const obj::SplitBatch& b, const std::string& what) const {
  namespace fs = std::filesystem;
  const std::string name = "nonfinite_step" + std::to_string(step_) + ".csv";
  const fs::path path = cfg_.metrics.empty() ? fs::temp_directory_path() / ("soflow_" + name)
                                             : fs::path(cfg_.metrics + "." + name);
  std::ostringstream os;
  os << "part,row,label,t,l,s";
  for (std::size_t d = 0; d < gmm_.dim(); ++d) os << ",x0_" << d;
  for (std::size_t d = 0; d < gmm_.dim(); ++d) os << ",x1_" << d;
  os << "\n";
  auto dump = [&](const char* part, const Tensor& x0, const Tensor& x1, std::span<const int> labels,
                  std::span<const double> t, std::span<const double> l, std::span<const double> s) {
    for (std::size_t r = 0; r < x0.rows(); ++r) {
      os << part << "," << r << "," << labels[r] << "," << num(t[r]) << ","
         << (l.empty() ? std::string() : num(l[r])) << "," << (s.empty() ? std::string() : num(s[r]));
      for (double v : x0.row_span(r)) os << "," << num(v);
      for (double v : x1.row_span(r)) os << "," << num(v);
      os << "\n";
    }
  };
  dump("fm", b.fm_x0, b.fm_x1, b.fm_labels, b.fm_t, {}, {});
  dump("scm", b.scm_x0, b.scm_x1, b.scm_labels, b.scm_times.t, b.scm_times.l, b.scm_times.s);
  std::string where = path.string();
  try {
    write_file_atomic(where, os.str());
  } catch (const Error&) {
    where = "(dump not written)";
  }
  throw NumericError("train: step " + std::to_string(step_) + ": " + what + "; sub-batch dump: " +
                     where);
}

StepStats Trainer::step() {
  if (done()) throw DomainError("train: all " + std::to_string(cfg_.steps) + " steps are done");
  obj::SplitBatch batch = draw_batch();
  StepStats stats;
  if (cfg_.conditional) {
    stats.dropped = guide::guided_batch_prepare(cfg_.guidance, loss_, batch, live_, dropout_rng_);
  }

  ad::Tape tape;
  const nn::BoundParams bound = nn::bind(tape, live_, nn::Binding::Trainable);
  obj::CombinedLoss loss;
  try {
    loss = obj::combined_loss(bound, loss_, batch);
  } catch (const NumericError& e) {
    abort_step(batch, e.what());
  }
  if (!std::isfinite(loss.value)) abort_step(batch, "non-finite total loss");
  tape.backward(loss.total);
  std::vector<Tensor> grads;
  grads.reserve(bound.tensors.size());
  for (const ad::Value& v : bound.tensors) grads.push_back(tape.grad(v));
  for (const Tensor& g : grads) {
    if (!g.all_finite()) abort_step(batch, "non-finite gradient");
  }
  adam_.step(live_, grads);
  if (!live_.all_finite()) abort_step(batch, "non-finite parameters after the update");
  ema_.update(live_);
  ++step_;

  stats.step = step_;
  if (loss.fm) stats.fm_loss = loss.fm->value;
  if (loss.scm) stats.scm_loss = loss.scm->value;
  stats.total = loss.value;
  return stats;
}

MetricsLogger::MetricsLogger(const std::string& path, bool append, bool wall_clock)
    : wall_clock_(wall_clock) {
  const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw Error("io", "cannot open metrics log '" + path + "'");
  if (fresh) {
    out_ << header(wall_clock_) << std::flush;
  }
}

std::string MetricsLogger::header(bool wall_clock) {
  return std::string("step,fm_loss,scm_loss,total,median_residual,energy_distance") +
         (wall_clock ? ",wall_clock" : "") + "\n";
}

std::string MetricsLogger::format(const MetricsRow& row, bool wall_clock) {
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  std::string line = std::to_string(row.step) + "," + opt(row.fm_loss) + "," + opt(row.scm_loss) +
                     "," + num(row.total) + "," + opt(row.median_residual) + "," +
                     opt(row.energy_distance);
  if (wall_clock) line += "," + opt(row.wall_clock);
  return line + "\n";
}

void MetricsLogger::write(const MetricsRow& row) {
  const std::string line = format(row, wall_clock_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error("io", "metrics log write failed");
}

Checkpoint train(const TrainConfig& cfg, const TrainOptions& options) {
  std::optional<Trainer> trainer;
  if (options.resume.empty()) {
    trainer.emplace(cfg);
  } else {
    trainer.emplace(load_checkpoint(options.resume), cfg);
  }
  std::optional<MetricsLogger> logger;
  if (!cfg.metrics.empty()) logger.emplace(cfg.metrics, !options.resume.empty(), cfg.log_wall_clock);
  const auto start = std::chrono::steady_clock::now();

  while (!trainer->done()) {
    const StepStats stats = trainer->step();
    if (options.on_step) options.on_step(stats);
    const std::int64_t k = stats.step;
    const bool eval = cfg.eval_every > 0 && (k % cfg.eval_every == 0);
    const bool log = eval || (cfg.log_every > 0 && (k % cfg.log_every == 0 || k == cfg.steps));
    if (logger && log) {
      MetricsRow row{k, stats.fm_loss, stats.scm_loss, stats.total, {}, {}, {}};
      if (eval) {
        const PeriodicEval pe = periodic_eval(trainer->ema(), trainer->config());
        row.median_residual = pe.median_residual;
        row.energy_distance = pe.energy_distance;
      }
      if (cfg.log_wall_clock) {
        row.wall_clock =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      logger->write(row);
    }
    if (!cfg.checkpoint.empty() && cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.checkpoint + ".step" + std::to_string(k), trainer->checkpoint());
    }
  }
  Checkpoint final_state = trainer->checkpoint();
  if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, final_state);
  return final_state;
}

}  // namespace soflow::harness
