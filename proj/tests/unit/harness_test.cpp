#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "soflow/checkpoint.hpp"
#include "soflow/config.hpp"
#include "soflow/errors.hpp"
#include "soflow/optimizer.hpp"
#include "soflow/trainer.hpp"

using namespace soflow;
using namespace soflow::harness;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny(std::int64_t steps = 20) {
  TrainConfig cfg;
  cfg.hidden = {16, 16};
  cfg.embed_dim = 8;
  cfg.label_dim = 4;
  cfg.batch = 16;
  cfg.steps = steps;
  cfg.seed = 42;
  return cfg;
}

// Scratch directory removed with the object.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("soflow_unit_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config text round-trips through the canonical form") {
  TrainConfig cfg = tiny();
  cfg.lambda = 0.3;
  cfg.guidance.w = 2.5;
  cfg.lschedule.kind = flow::LScheduleKind::Cosine;
  cfg.metrics = "run dir/metrics.csv";
  cfg.parameterization = flow::ParamKind::Trigonometric;
  const std::string text = to_text(cfg);
  const TrainConfig back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.metrics == "run dir/metrics.csv");
  CHECK(back.hidden == std::vector<std::size_t>{16, 16});
}

TEST_CASE("partial config files fill in defaults") {
  const TrainConfig cfg = parse_config("# comment\n[loss]\nlambda = 1\n\n[run]\nsteps = 10\n");
  CHECK(cfg.lambda == 1.0);
  CHECK(cfg.steps == 10);
  CHECK(cfg.p == 1.0);
  CHECK(cfg.preset == "ring8");
}

TEST_CASE("config parser is strict") {
  CHECK_THROWS_AS(parse_config("[loss]\nlamda = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonsense]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lambda = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\nlambda = 0.5\nlambda = 0.6\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\nlambda = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\nlambda 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nsteps = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[flow]\nschedule = quadratic\n"), ConfigError);
  try {
    parse_config("[loss]\np = 1\nbogus = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("config ranges are validated on load") {
  CHECK_THROWS_AS(parse_config("[loss]\nlambda = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[loss]\nepsilon = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nbatch = 1\n"), ConfigError);
  CHECK_NOTHROW(parse_config("[loss]\nlambda = 1\n[run]\nbatch = 1\n"));
  CHECK_THROWS_AS(parse_config("[guidance]\nw = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[optim]\nema_decay = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\npreset = moons\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[lschedule]\nr_init = 0.01\nr_end = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/soflow.cfg"), Error);
}

TEST_CASE("training hash ignores output fields only") {
  TrainConfig a = tiny(), b = tiny();
  b.log_every = 7;
  b.metrics = "x.csv";
  b.checkpoint = "x.ckpt";
  b.eval_every = 3;
  CHECK(training_hash(a) == training_hash(b));
  CHECK(config_hash(a) != config_hash(b));
  b.lr = 2e-3;
  CHECK(training_hash(a) != training_hash(b));
}

TEST_CASE("Adam first step moves each coordinate by about lr") {
  nn::NetworkShape shape;
  shape.embed_dim = 8;
  shape.label_dim = 4;
  shape.hidden = {4};
  nn::ModelParams params = nn::ModelParams::initialize(shape, 1, false);
  const nn::ModelParams before = params;
  optim::Adam adam({0.01, 0.9, 0.99, 1e-8}, params);
  std::vector<Tensor> grads;
  for (const Tensor& t : params.tensors()) {
    Tensor g(t.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 3 == 0) ? 0.5 : -2.0;
    grads.push_back(g);
  }
  adam.step(params, grads);
  CHECK(adam.steps() == 1);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      const double g = grads[k][i];
      const double expect = before.tensors()[k][i] - 0.01 * g / (std::abs(g) + 1e-8);
      CHECK(params.tensors()[k][i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS((optim::AdamConfig{0.0, 0.9, 0.99, 1e-8}.validate()), ConfigError);
}

TEST_CASE("zero-step run returns the initial state") {
  const TrainConfig cfg = tiny(0);
  const Checkpoint ck = train(cfg);
  const Trainer fresh(cfg);
  CHECK(ck.step == 0);
  CHECK(ck.live == fresh.live());
  CHECK(ck.ema == fresh.live());
  CHECK(ck.adam_steps == 0);
  // The initial model is the identity flow.
  const Tensor final_w = ck.live.weight(ck.live.num_layers() - 1);
  CHECK(final_w == Tensor(final_w.shape(), 0.0));
}

TEST_CASE("identical seeds give identical metrics logs") {
  const TempDir dir("determinism");
  TrainConfig cfg = tiny(30);
  cfg.log_every = 5;
  cfg.eval_every = 15;
  cfg.metrics = dir.file("a.csv");
  train(cfg);
  cfg.metrics = dir.file("b.csv");
  train(cfg);
  const std::string a = slurp(dir.file("a.csv"));
  CHECK(a == slurp(dir.file("b.csv")));
  CHECK(a.rfind(MetricsLogger::header(false), 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 1 + 6);
  cfg.seed = 43;
  cfg.metrics = dir.file("c.csv");
  train(cfg);
  CHECK(a != slurp(dir.file("c.csv")));
}

TEST_CASE("logging and evaluation do not perturb training") {
  const TempDir dir("logging");
  TrainConfig quiet = tiny(20);
  quiet.log_every = 0;
  TrainConfig noisy = tiny(20);
  noisy.log_every = 1;
  noisy.eval_every = 4;
  noisy.metrics = dir.file("m.csv");
  noisy.log_wall_clock = true;
  const Checkpoint a = train(quiet), b = train(noisy);
  CHECK(a.live == b.live);
  CHECK(a.ema == b.ema);
  CHECK(a.streams == b.streams);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  const TempDir dir("roundtrip");
  const Checkpoint ck = train(tiny(5));
  save_checkpoint(dir.file("a.ckpt"), ck);
  const Checkpoint back = load_checkpoint(dir.file("a.ckpt"));
  save_checkpoint(dir.file("b.ckpt"), back);
  CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));
  CHECK(back.live == ck.live);
  CHECK(back.ema == ck.ema);
  CHECK(back.adam_m == ck.adam_m);
  CHECK(back.streams == ck.streams);
  CHECK_FALSE(fs::exists(dir.file("a.ckpt.tmp")));
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const TempDir dir("resume");
  TrainConfig cfg = tiny(20);
  cfg.log_every = 2;
  cfg.checkpoint_every = 10;
  cfg.checkpoint = dir.file("run.ckpt");
  cfg.metrics = dir.file("full.csv");
  const Checkpoint full = train(cfg);

  // Resume from the halfway checkpoint into a log holding the first half.
  const std::string log = slurp(dir.file("full.csv"));
  const std::size_t cut = log.find("\n12,");
  REQUIRE(cut != std::string::npos);
  {
    std::ofstream half(dir.file("resumed.csv"), std::ios::binary);
    half << log.substr(0, cut + 1);
  }
  TrainConfig again = cfg;
  again.metrics = dir.file("resumed.csv");
  again.checkpoint = dir.file("resumed.ckpt");
  const Checkpoint resumed = train(again, {dir.file("run.ckpt.step10"), {}});
  // The config echoes differ in the output paths only.
  CHECK(resumed.step == full.step);
  CHECK(resumed.live == full.live);
  CHECK(resumed.ema == full.ema);
  CHECK(resumed.adam_steps == full.adam_steps);
  CHECK(resumed.adam_m == full.adam_m);
  CHECK(resumed.adam_v == full.adam_v);
  CHECK(resumed.streams == full.streams);
  CHECK(slurp(dir.file("resumed.csv")) == log);
}

TEST_CASE("resume refuses a config that trains differently") {
  const Checkpoint ck = train(tiny(4));
  TrainConfig other = tiny(4);
  other.p = 0.5;
  CHECK_THROWS_AS(Trainer(ck, other), ConfigError);
  TrainConfig logging = tiny(4);
  logging.log_every = 1;
  CHECK_NOTHROW(Trainer(ck, logging));
}

TEST_CASE("corrupted checkpoints are rejected") {
  const std::string bytes = serialize(train(tiny(2)));
  CHECK_NOTHROW(deserialize(bytes));
  // Tampered config text.
  std::string tampered = bytes;
  const std::size_t pos = tampered.find("lambda = 0.75");
  REQUIRE(pos != std::string::npos);
  tampered.replace(pos, 13, "lambda = 0.74");
  CHECK_THROWS_AS(deserialize(tampered), FormatError);
  CHECK_THROWS_AS(deserialize(bytes.substr(0, bytes.size() - 8)), FormatError);
  CHECK_THROWS_AS(deserialize(bytes + "x"), FormatError);
  std::string version = bytes;
  version.replace(0, std::string("soflow-checkpoint 1").size(), "soflow-checkpoint 9");
  CHECK_THROWS_AS(deserialize(version), FormatError);
  CHECK_THROWS_AS(deserialize("not a checkpoint"), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), Error);
}

TEST_CASE("non-finite step aborts with a sub-batch dump") {
  const TempDir dir("nonfinite");
  TrainConfig cfg = tiny(5);
  cfg.metrics = dir.file("m.csv");
  Trainer trainer(cfg);
  trainer.step();
  trainer.live().bias(0)[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    trainer.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    const std::string dump = dir.file("m.csv.nonfinite_step1.csv");
    CHECK(msg.find(dump) != std::string::npos);
    REQUIRE(fs::exists(dump));
    const std::string text = slurp(dump);
    CHECK(text.rfind("part,row,label,t,l,s,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 16);
  }
}

TEST_CASE("metrics rows leave absent values empty") {
  const MetricsRow row{3, 0.5, {}, 0.25, {}, 1e-3, {}};
  CHECK(MetricsLogger::format(row, false) == "3,0.5,,0.25,,0.001\n");
  CHECK(MetricsLogger::header(true) ==
        "step,fm_loss,scm_loss,total,median_residual,energy_distance,wall_clock\n");
}

}  // TEST_SUITE
