#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "soflow/datasets.hpp"
#include "soflow/errors.hpp"
#include "soflow/sampler.hpp"
#include "soflow/verify.hpp"
#include "support/oracles.hpp"

using namespace soflow;
using namespace soflow::verify;

namespace {

nn::NetworkShape small_shape() {
  nn::NetworkShape s;
  s.num_classes = 3;
  s.embed_dim = 8;
  s.label_dim = 4;
  s.hidden = {16, 16};
  return s;
}

const double kC[2] = {0.5, -1.25};

FieldFn constant_field() {
  return [](const Tensor& x, std::span<const double>) {
    Tensor v(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      v(r, 0) = kC[0];
      v(r, 1) = kC[1];
    }
    return v;
  };
}

// Exact solution function of the constant field.
SolutionFn constant_solution() {
  return [](const Tensor& x, std::span<const double> t, std::span<const double> s) {
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      out(r, 0) += (s[r] - t[r]) * kC[0];
      out(r, 1) += (s[r] - t[r]) * kC[1];
    }
    return out;
  };
}

SolutionFn identity_solution() {
  return [](const Tensor& x, std::span<const double>, std::span<const double>) { return x; };
}

struct Probes {
  Tensor x;
  std::vector<double> t, s;
};

Probes random_probes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Probes p{oracle::random_tensor(n, 2, rng, -2.0, 2.0), {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    p.t.push_back(0.1 + 0.85 * u(rng));
    p.s.push_back(p.t.back() * 0.8 * u(rng));
  }
  return p;
}

}  // namespace

TEST_SUITE("verify") {

TEST_CASE("exact solution of a constant field has zero residual") {
  const Probes p = random_probes(200, 1);
  const Tensor r = pde_residual(constant_solution(), constant_field(), p.x, p.t, p.s, 1e-3);
  for (double v : r.values()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("identity flow against a constant field has residual c") {
  const Probes p = random_probes(50, 2);
  const ResidualReport rep =
      residual_report(identity_solution(), constant_field(), p.x, p.t, p.s, 1e-3);
  const double norm = std::hypot(kC[0], kC[1]);
  for (double n : rep.norms) CHECK(n == doctest::Approx(norm).epsilon(1e-9));
  CHECK(rep.max == doctest::Approx(norm).epsilon(1e-9));
  CHECK(rep.median == doctest::Approx(norm).epsilon(1e-9));
}

TEST_CASE("residual estimators converge at their stated orders") {
  // v = -x has flow X(tau) = x exp(t - tau). With f(x, t, s) = x g(t) the true
  // residual is x (g'(t) - g(t)).
  const auto g = [](double t) { return 1.0 + 0.3 * std::sin(3.0 * t); };
  const auto dg = [](double t) { return 0.9 * std::cos(3.0 * t); };
  const SolutionFn f = [&](const Tensor& x, std::span<const double> t, std::span<const double>) {
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) *= g(t[r]);
    }
    return out;
  };
  const FieldFn v = [](const Tensor& x, std::span<const double>) {
    Tensor out = x;
    for (double& e : out.values()) e = -e;
    return out;
  };
  const Probes p = random_probes(40, 3);
  auto error = [&](double h, FdScheme scheme) {
    const Tensor r = pde_residual(f, v, p.x, p.t, p.s, h, scheme);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.x.rows(); ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        worst = std::max(worst, std::abs(r(i, c) - p.x(i, c) * (dg(p.t[i]) - g(p.t[i]))));
      }
    }
    return worst;
  };
  const double back = error(2e-3, FdScheme::Backward) / error(1e-3, FdScheme::Backward);
  const double central = error(2e-3, FdScheme::Central) / error(1e-3, FdScheme::Central);
  CHECK(back == doctest::Approx(2.0).epsilon(0.05));
  CHECK(central == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("residual step must stay inside (s, t)") {
  const Probes p = random_probes(3, 4);
  std::vector<double> s = p.s;
  s[1] = p.t[1] - 1e-4;
  CHECK_THROWS_AS(pde_residual(identity_solution(), constant_field(), p.x, p.t, s, 1e-3),
                  DomainError);
  CHECK_THROWS_AS(pde_residual(identity_solution(), constant_field(), p.x, p.t, p.s, 0.0),
                  DomainError);
}

TEST_CASE("boundary identity holds for random networks") {
  for (auto kind : {flow::ParamKind::Euler, flow::ParamKind::Trigonometric}) {
    const nn::ModelParams params = nn::ModelParams::initialize(small_shape(), 5, false);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Tensor x = oracle::random_tensor(10000, 2, rng, -5.0, 5.0);
    std::vector<double> t(10000);
    std::vector<int> labels(10000);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = u(rng);
      labels[i] = static_cast<int>(rng() % 4);
    }
    const SolutionFn f = model_solution(params, flow::SolutionParameterization(kind), labels);
    CHECK(boundary_check(f, x, t) <= 1e-12);
    const std::vector<double> late(10000, 0.999);
    CHECK(boundary_check(f, x, late) <= 1e-12);
  }
}

TEST_CASE("global bound on an exact solution has zero error") {
  std::mt19937_64 rng(7);
  const Tensor x1 = data::sample_normal(64, 2, rng);
  const GlobalBoundReport rep =
      global_error_check(constant_solution(), constant_field(), x1, 200);
  for (double e : rep.error) CHECK(e < 1e-12);
  CHECK(rep.fraction == 1.0);
  CHECK(rep.probes == 16);
}

TEST_CASE("global bound holds for the identity flow on a nonzero field") {
  // The error is large but so is the measured residual.
  const data::GmmSpec g = data::preset("ring8");
  const flow::NoisingSchedule sched(flow::ScheduleKind::Linear);
  const FieldFn v = [&](const Tensor& x, std::span<const double> t) {
    return sample::analytic_gmm_velocity(g, sched, x, t);
  };
  std::mt19937_64 rng(8);
  const Tensor x1 = data::sample_normal(128, 2, rng);
  const GlobalBoundReport rep = global_error_check(identity_solution(), v, x1, 200);
  CHECK(rep.fraction >= 0.95);
  for (double d : rep.delta_hat) CHECK(d > 0.0);
}

TEST_CASE("ode error of an exact solution is finite-difference noise") {
  const Probes p = random_probes(100, 9);
  const OdeErrorReport rep =
      ode_error_check(constant_solution(), constant_field(), p.x, p.t, p.s, 1e-4, 0.0);
  CHECK(rep.max < 1e-9);
  CHECK(rep.ratio_to_sqrt_delta == 0.0);
}

TEST_CASE("ode error at s = t compares the predicted velocity") {
  const nn::ModelParams params = nn::ModelParams::initialize(small_shape(), 10, false);
  const flow::SolutionParameterization param(flow::ParamKind::Euler);
  const Probes p = random_probes(50, 11);
  const std::vector<int> labels(50, 1);
  const OdeErrorReport rep = ode_error_check(model_solution(params, param, labels),
                                             constant_field(), p.x, p.t, p.t, 1e-4, 4.0);
  const Tensor vel = nn::evaluate_velocity(params, param, p.x, p.t, labels);
  for (std::size_t r = 0; r < 50; ++r) {
    const double expect = std::hypot(vel(r, 0) - kC[0], vel(r, 1) - kC[1]);
    CHECK(rep.error[r] == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(rep.ratio_to_sqrt_delta == doctest::Approx(rep.median / 2.0));
}

TEST_CASE("median of even and odd counts") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("reports serialise with a header row") {
  const Probes p = random_probes(4, 12);
  const ResidualReport rep =
      residual_report(identity_solution(), constant_field(), p.x, p.t, p.s, 1e-3);
  std::ostringstream os;
  write_residual_csv(os, rep);
  const std::string text = os.str();
  CHECK(text.rfind("index,t,s,h,residual_norm\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

}  // TEST_SUITE
