#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "soflow/errors.hpp"
#include "soflow/network.hpp"
#include "support/oracles.hpp"

using namespace soflow;
using namespace soflow::nn;

namespace {

NetworkShape small_shape(std::size_t classes = 3) {
  NetworkShape s;
  s.num_classes = classes;
  s.embed_dim = 8;
  s.label_dim = 4;
  s.hidden = {16, 16, 16};
  return s;
}

struct Probe {
  Tensor x;
  std::vector<double> t, s;
  std::vector<int> labels;
};

Probe random_probe(std::size_t n, std::uint64_t seed, int classes = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Probe p{oracle::random_tensor(n, 2, rng, -2.0, 2.0), {}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    p.t.push_back(u(rng));
    p.s.push_back(p.t.back() * u(rng));
    p.labels.push_back(static_cast<int>(rng() % static_cast<unsigned>(classes + 1)));
  }
  return p;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("zero final layer gives zero raw output") {
  const ModelParams params = ModelParams::initialize(small_shape(), 1);
  const Probe p = random_probe(20, 2);
  const Tensor out = evaluate_raw(params, p.x, p.t, p.s, p.labels);
  CHECK(out == Tensor(20, 2, 0.0));
}

TEST_CASE("raw output matches a plain re-implementation") {
  const ModelParams params = ModelParams::initialize(small_shape(), 3, false);
  const Probe p = random_probe(10, 4);
  const Tensor out = evaluate_raw(params, p.x, p.t, p.s, p.labels);
  const oracle::PlainMlp ref{&params};
  for (std::size_t r = 0; r < 10; ++r) {
    const auto expect = ref.raw(p.x.row_span(r), p.t[r], p.s[r], p.labels[r]);
    CHECK(out(r, 0) == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(out(r, 1) == doctest::Approx(expect[1]).epsilon(1e-12));
  }
}

TEST_CASE("batch permutation permutes outputs") {
  const ModelParams params = ModelParams::initialize(small_shape(), 5, false);
  const Probe p = random_probe(8, 6);
  const Tensor out = evaluate_raw(params, p.x, p.t, p.s, p.labels);
  std::vector<std::size_t> perm{3, 7, 0, 1, 6, 2, 5, 4};
  Probe q{p.x.gather_rows(perm), {}, {}, {}};
  for (std::size_t i : perm) {
    q.t.push_back(p.t[i]);
    q.s.push_back(p.s[i]);
    q.labels.push_back(p.labels[i]);
  }
  const Tensor permuted = evaluate_raw(params, q.x, q.t, q.s, q.labels);
  CHECK(permuted == out.gather_rows(perm));
}

TEST_CASE("labels outside the table are rejected") {
  const ModelParams params = ModelParams::initialize(small_shape(3), 7);
  Probe p = random_probe(2, 8);
  p.labels = {0, 4};
  CHECK_THROWS_AS(evaluate_raw(params, p.x, p.t, p.s, p.labels), DomainError);
  p.labels = {-1, 0};
  CHECK_THROWS_AS(evaluate_raw(params, p.x, p.t, p.s, p.labels), DomainError);
  p.labels = {3, 3};  // the empty label
  CHECK_NOTHROW(evaluate_raw(params, p.x, p.t, p.s, p.labels));
}

TEST_CASE("shape validation") {
  NetworkShape s = small_shape();
  s.embed_dim = 7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_shape();
  s.hidden.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
  const ModelParams params = ModelParams::initialize(small_shape(), 9);
  const Probe p = random_probe(3, 10);
  const std::vector<double> short_t{0.5};
  CHECK_THROWS_AS(evaluate_raw(params, p.x, short_t, p.s, p.labels), ShapeError);
}

TEST_CASE("raw network gradients match central differences") {
  // mean(F^2) over a batch, every parameter tensor perturbed.
  const NetworkShape shape = small_shape();
  const ModelParams params = ModelParams::initialize(shape, 11, false);
  const Probe p = random_probe(6, 12);
  const auto fn = [&](ad::Tape& tape, const std::vector<ad::Value>& leaves) {
    const BoundParams bound{&shape, leaves};
    return ad::mean(ad::square(forward_raw(bound, tape.constant(p.x), p.t, p.s, p.labels)));
  };
  const auto cmp = oracle::compare_gradients(fn, params.tensors(), 1e-5, 1e-5);
  CHECK(cmp.max_rel < 1e-5);
}

TEST_CASE("boundary identity holds exactly for arbitrary parameters") {
  for (auto kind : {flow::ParamKind::Euler, flow::ParamKind::Trigonometric}) {
    const ModelParams params = ModelParams::initialize(small_shape(), 13, false);
    const Probe p = random_probe(500, 14);
    CHECK(evaluate_solution(params, flow::SolutionParameterization(kind), p.x, p.t, p.t, p.labels) ==
          p.x);
  }
}

TEST_CASE("Euler with a zero network is the identity map") {
  const ModelParams params = ModelParams::initialize(small_shape(), 15);
  const Probe p = random_probe(50, 16);
  CHECK(evaluate_solution(params, flow::SolutionParameterization(flow::ParamKind::Euler), p.x, p.t,
                          p.s, p.labels) == p.x);
}

TEST_CASE("Euler with a constant network") {
  ModelParams params = ModelParams::initialize(small_shape(), 17);
  params.bias(params.num_layers() - 1) = Tensor(1, 2, {1.0, 1.0});
  const Tensor x(1, 2, 0.0);
  const std::vector<double> t{1.0}, s{0.0};
  const std::vector<int> labels{0};
  CHECK(evaluate_solution(params, flow::SolutionParameterization(flow::ParamKind::Euler), x, t, s,
                          labels) == Tensor(1, 2, {-1.0, -1.0}));
}

TEST_CASE("predicted velocity equals the raw output scaled by db") {
  const ModelParams params = ModelParams::initialize(small_shape(), 19, false);
  const Probe p = random_probe(30, 20);
  const Tensor raw = evaluate_raw(params, p.x, p.t, p.t, p.labels);
  const Tensor ve =
      evaluate_velocity(params, flow::SolutionParameterization(flow::ParamKind::Euler), p.x, p.t, p.labels);
  CHECK(ve == raw);
  const Tensor vt = evaluate_velocity(
      params, flow::SolutionParameterization(flow::ParamKind::Trigonometric), p.x, p.t, p.labels);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(vt[i] == doctest::Approx(std::numbers::pi / 2 * raw[i]).epsilon(1e-15));
  }
}

TEST_CASE("predicted velocity matches the s-derivative of the solution") {
  for (auto kind : {flow::ParamKind::Euler, flow::ParamKind::Trigonometric}) {
    const flow::SolutionParameterization param(kind);
    const ModelParams params = ModelParams::initialize(small_shape(), 21, false);
    Probe p = random_probe(200, 22);
    for (double& t : p.t) t = 0.01 + 0.98 * t;
    const Tensor v = evaluate_velocity(params, param, p.x, p.t, p.labels);
    auto fd_error = [&](double h) {
      std::vector<double> up(p.t), down(p.t);
      for (std::size_t i = 0; i < up.size(); ++i) {
        up[i] += h;
        down[i] -= h;
      }
      const Tensor fu = evaluate_solution(params, param, p.x, p.t, up, p.labels);
      const Tensor fdn = evaluate_solution(params, param, p.x, p.t, down, p.labels);
      double err = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double fd = (fu[i] - fdn[i]) / (2 * h);
        err = std::max(err, std::abs(fd - v[i]) / (1.0 + std::abs(v[i])));
      }
      return err;
    };
    const double e1 = fd_error(1e-4);
    CHECK(e1 < 5e-4);
    CHECK(fd_error(1e-3) >= 2.0 * fd_error(5e-4));
  }
}

TEST_CASE("EMA update examples") {
  const NetworkShape shape = small_shape();
  ModelParams live = ModelParams::initialize(shape, 23, false);
  ModelParams shadow = ModelParams::initialize(shape, 24, false);
  ModelParams copy = shadow;
  ema_update(copy, live, 0.0);
  CHECK(copy == live);
  copy = shadow;
  ema_update(copy, live, 1.0);
  CHECK(copy == shadow);

  ModelParams zero(shape), one(shape);
  for (Tensor& t : one.tensors()) {
    for (double& v : t.values()) v = 1.0;
  }
  EmaParams ema(zero, 0.9999);
  ema.update(one);
  CHECK(ema.shadow().tensors()[0][0] == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK_THROWS_AS(EmaParams(zero, 1.5), ConfigError);
  ModelParams other = ModelParams::initialize(small_shape(4), 1);
  CHECK_THROWS_AS(ema_update(copy, other, 0.5), ShapeError);
}

TEST_CASE("initialization is deterministic and fan-in scaled") {
  const NetworkShape shape = small_shape();
  const ModelParams a = ModelParams::initialize(shape, 30);
  CHECK(a == ModelParams::initialize(shape, 30));
  CHECK_FALSE(a == ModelParams::initialize(shape, 31));
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.input_width()));
  for (double w : a.weight(0).values()) CHECK(std::abs(w) <= bound);
  for (double b : a.bias(0).values()) CHECK(b == 0.0);
  CHECK(a.weight(a.num_layers() - 1) == Tensor(a.weight(a.num_layers() - 1).shape(), 0.0));
  CHECK(a.label_table().rows() == shape.num_classes + 1);
  CHECK(a.all_finite());
}

TEST_CASE("time embedding is sin and cos of geometric frequencies") {
  const TimeEmbedding emb{8, 100.0, 2.0};
  std::vector<double> out(8);
  emb.embed(0.3, out);
  for (std::size_t j = 0; j < 4; ++j) {
    const double w = 2.0 * std::pow(100.0, -static_cast<double>(j) / 4.0);
    CHECK(out[j] == doctest::Approx(std::sin(0.3 * w)).epsilon(1e-15));
    CHECK(out[4 + j] == doctest::Approx(std::cos(0.3 * w)).epsilon(1e-15));
  }
}

}  // TEST_SUITE
