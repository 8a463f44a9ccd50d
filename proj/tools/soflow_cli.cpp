// soflow: train, sample, evaluate and verify solution flow models on toy
// mixtures. Errors are reported as one line on stderr,
//
//   error code=<name> exit=<n> message="<text>"
//
// with the exit codes listed in kExitHelp.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "soflow/checkpoint.hpp"
#include "soflow/config.hpp"
#include "soflow/errors.hpp"
#include "soflow/evaluation.hpp"
#include "soflow/metrics.hpp"
#include "soflow/trainer.hpp"
#include "soflow/verify.hpp"

namespace {

using namespace soflow;
using namespace soflow::harness;

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingFile = 3,
  kConfig = 4,
  kFormat = 5,
  kInvalid = 6,
  kNumeric = 7,
  kCheckFailed = 8,
};

const char* kExitHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (unknown flag, bad option value)\n"
    "  3  missing or unreadable file\n"
    "  4  config validation failure\n"
    "  5  malformed or tampered checkpoint\n"
    "  6  invalid request (shape or domain error)\n"
    "  7  numerical failure (non-finite loss or state)\n"
    "  8  a verify check failed\n";

struct Failure {
  std::string code;
  int exit;
  std::string message;
};

int report(const Failure& f) {
  std::string msg = f.message;
  for (char& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  std::cerr << "error code=" << f.code << " exit=" << f.exit << " message=\"" << msg << "\"\n";
  return f.exit;
}

int exit_for(const Error& e) {
  const std::string& c = e.code();
  if (c == "missing_file" || c == "io") return kMissingFile;
  if (c == "config") return kConfig;
  if (c == "format") return kFormat;
  if (c == "shape" || c == "domain") return kInvalid;
  if (c == "numeric") return kNumeric;
  return kInternal;
}

const nn::ModelParams& pick_weights(const Checkpoint& ckpt, const std::string& which) {
  return which == "live" ? ckpt.live : ckpt.ema;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write '" + path + "'");
  return out;
}

int cmd_train(const std::string& config_path, const std::string& resume, bool quiet) {
  const TrainConfig cfg = load_config(config_path);
  TrainOptions opts;
  opts.resume = resume;
  if (!quiet) {
    opts.on_step = [&cfg](const StepStats& s) {
      if (cfg.log_every > 0 && (s.step % cfg.log_every == 0 || s.step == cfg.steps)) {
        std::cout << "step " << s.step << " total " << num(s.total) << "\n";
      }
    };
  }
  const Checkpoint final_state = train(cfg, opts);
  std::cout << "done step=" << final_state.step
            << " checkpoint=" << (cfg.checkpoint.empty() ? "-" : cfg.checkpoint) << "\n";
  return kOk;
}

struct SampleArgs {
  std::string ckpt, out, weights = "ema";
  int nfe = 1;
  long long count = 1000;
  std::optional<int> label;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a) {
  if (a.count < 1) throw DomainError("sample: --count must be >= 1");
  if (a.nfe < 1) throw DomainError("sample: --nfe must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  const int empty = cfg.network_shape().empty_label();
  const std::size_t count = static_cast<std::size_t>(a.count);
  std::vector<int> labels;
  if (a.label) {
    if (*a.label < 0 || *a.label > empty) {
      throw DomainError("sample: --label must lie in [0, " + std::to_string(empty) + "]");
    }
    labels.assign(count, *a.label);
  } else {
    labels = draw_labels(cfg, count, a.seed);
  }
  const Tensor x = generate(pick_weights(ckpt, a.weights), cfg, labels, a.nfe, a.seed);

  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& os = a.out.empty() ? std::cout : file;
  for (std::size_t d = 0; d < x.cols(); ++d) os << "x" << d << ",";
  os << "label,seed,nfe\n";
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (double v : x.row_span(r)) os << num(v) << ",";
    os << labels[r] << "," << a.seed << "," << a.nfe << "\n";
  }
  if (!os) throw Error("io", "failed writing samples");
  return kOk;
}

struct EvalArgs {
  std::string ckpt, metric = "energy", against, weights = "ema";
  int nfe = 1;
  long long count = 2000;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  if (a.count < 2) throw DomainError("eval: --count must be >= 2");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  TrainConfig cfg = parse_config(ckpt.config_text);
  const std::string against = a.against.empty() ? cfg.preset : a.against;
  const std::size_t count = static_cast<std::size_t>(a.count);
  const Tensor samples =
      generate(pick_weights(ckpt, a.weights), cfg, draw_labels(cfg, count, a.seed), a.nfe, a.seed);
  TrainConfig ref = cfg;
  ref.preset = against;
  if (ref.gmm().dim() != cfg.gmm().dim()) {
    throw DomainError("eval: preset '" + against + "' has a different dimension");
  }
  const Tensor data = fresh_data(ref, count, a.seed ^ 0xda7aULL);
  const double value = a.metric == "energy" ? metrics::energy_distance(samples, data)
                                            : metrics::sliced_wasserstein(samples, data, 512, a.seed);
  std::cout << "metric,value,against,count,nfe,seed,step\n"
            << a.metric << "," << num(value) << "," << against << "," << count << "," << a.nfe
            << "," << a.seed << "," << ckpt.step << "\n";
  return kOk;
}

struct VerifyArgs {
  std::string ckpt, check = "all", out_dir = ".", weights = "ema";
  long long count = 1024;
  std::uint64_t seed = 0;
  double slack = 3.0;
};

int cmd_verify(const VerifyArgs& a) {
  if (a.count < 1) throw DomainError("verify: --count must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  const nn::ModelParams& params = pick_weights(ckpt, a.weights);
  const std::size_t count = static_cast<std::size_t>(a.count);
  std::filesystem::create_directories(a.out_dir);
  auto path = [&](const std::string& name) {
    return (std::filesystem::path(a.out_dir) / ("verify_" + name + ".csv")).string();
  };
  const bool all = a.check == "all";
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, const std::string& detail) {
    ok = ok && pass;
    std::cout << name << " " << (pass ? "PASS" : "FAIL") << " " << detail << "\n";
  };

  const ProbeGrid grid = residual_probes(cfg, count, a.seed);
  std::optional<verify::ResidualReport> residual;
  auto need_residual = [&]() -> const verify::ResidualReport& {
    if (!residual) residual = probe_residual(params, cfg, grid);
    return *residual;
  };

  if (all || a.check == "boundary") {
    const double dev = verify::boundary_check(model_solution(params, cfg, grid.labels), grid.x, grid.t);
    std::ofstream out = open_out(path("boundary"));
    out << "max_deviation\n" << num(dev) << "\n";
    line("boundary", dev <= 1e-12, "max_deviation=" + num(dev));
  }
  if (all || a.check == "residual") {
    const auto& r = need_residual();
    std::ofstream out = open_out(path("residual"));
    verify::write_residual_csv(out, r);
    line("residual", std::isfinite(r.max),
         "median=" + num(r.median) + " delta_hat=" + num(r.max));
  }
  if (all || a.check == "global-bound") {
    std::mt19937_64 rng(a.seed);
    const Tensor x1 = data::sample_normal(count, cfg.gmm().dim(), rng);
    const std::vector<int> labels = draw_labels(cfg, count, a.seed);
    const auto g = verify::global_error_check(model_solution(params, cfg, labels),
                                              target_field(cfg, labels), x1, 200, 16, a.slack);
    std::ofstream out = open_out(path("global_bound"));
    verify::write_global_csv(out, g);
    line("global-bound", g.fraction >= 0.95, "fraction=" + num(g.fraction) + " slack=" + num(g.slack));
  }
  if (all || a.check == "ode-error") {
    const auto& r = need_residual();
    const auto o = verify::ode_error_check(model_solution(params, cfg, grid.labels),
                                           target_field(cfg, grid.labels), grid.x, grid.t, grid.s,
                                           1e-4, r.max);
    std::ofstream out = open_out(path("ode_error"));
    verify::write_ode_csv(out, o);
    line("ode-error", std::isfinite(o.median),
         "median=" + num(o.median) + " ratio_to_sqrt_delta=" + num(o.ratio_to_sqrt_delta));
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, sample, evaluate and verify solution flow models on toy mixtures."};
  app.footer(kExitHelp);
  app.require_subcommand(1);

  std::string config_path, resume;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train from a config file");
  train_cmd->add_option("config", config_path, "Config file")->required();
  train_cmd->add_option("--resume", resume, "Continue from this checkpoint");
  train_cmd->add_flag("--quiet", quiet, "No progress lines");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a checkpoint as CSV");
  sample_cmd->add_option("checkpoint", sa.ckpt, "Checkpoint file")->required();
  sample_cmd->add_option("--nfe", sa.nfe, "Network evaluations per sample");
  sample_cmd->add_option("--count", sa.count, "Number of samples");
  sample_cmd->add_option("--label", sa.label,
                         "Class label for every sample (num_classes is the empty label); "
                         "default draws labels by class weight");
  sample_cmd->add_option("--seed", sa.seed, "Noise seed");
  sample_cmd->add_option("--out", sa.out, "Output CSV (default stdout)");
  sample_cmd->add_option("--weights", sa.weights, "ema or live")->check(CLI::IsMember({"ema", "live"}));

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Compare samples with fresh data from a preset");
  eval_cmd->add_option("checkpoint", ea.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--metric", ea.metric, "energy or sw")
      ->check(CLI::IsMember({"energy", "sw"}));
  eval_cmd->add_option("--against", ea.against, "Dataset preset (default: the training preset)");
  eval_cmd->add_option("--nfe", ea.nfe, "Network evaluations per sample");
  eval_cmd->add_option("--count", ea.count, "Samples on each side");
  eval_cmd->add_option("--seed", ea.seed, "Seed for samples and data");
  eval_cmd->add_option("--weights", ea.weights, "ema or live")->check(CLI::IsMember({"ema", "live"}));

  VerifyArgs va;
  auto* verify_cmd = app.add_subcommand("verify", "Numerical checks of the solution function");
  verify_cmd->add_option("checkpoint", va.ckpt, "Checkpoint file")->required();
  verify_cmd->add_option("--check", va.check, "boundary, residual, global-bound, ode-error or all")
      ->check(CLI::IsMember({"boundary", "residual", "global-bound", "ode-error", "all"}));
  verify_cmd->add_option("--count", va.count, "Probes or trajectories");
  verify_cmd->add_option("--seed", va.seed, "Probe seed");
  verify_cmd->add_option("--slack", va.slack, "Global bound slack factor");
  verify_cmd->add_option("--out-dir", va.out_dir, "Directory for the CSV reports");
  verify_cmd->add_option("--weights", va.weights, "ema or live")->check(CLI::IsMember({"ema", "live"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report({"usage", kUsage, e.what()});
  }

  try {
    if (*train_cmd) return cmd_train(config_path, resume, quiet);
    if (*sample_cmd) return cmd_sample(sa);
    if (*eval_cmd) return cmd_eval(ea);
    if (*verify_cmd) return cmd_verify(va);
  } catch (const Error& e) {
    return report({e.code(), exit_for(e), e.what()});
  } catch (const std::exception& e) {
    return report({"internal", kInternal, e.what()});
  }
  return kInternal;
}
