#include "soflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "soflow/errors.hpp"
#include "soflow/sampler.hpp"

namespace soflow::verify {

SolutionFn model_solution(const nn::ModelParams& params, flow::SolutionParameterization param,
                          std::vector<int> labels) {
  return [&params, param, labels = std::move(labels)](const Tensor& x, std::span<const double> t,
                                                      std::span<const double> s) {
    return nn::evaluate_solution(params, param, x, t, s, labels);
  };
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

Tensor shifted(const Tensor& x, const Tensor& v, double h) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * v[i];
  return out;
}

std::vector<double> offset(std::span<const double> t, double h) {
  std::vector<double> out(t.begin(), t.end());
  for (double& u : out) u += h;
  return out;
}

std::vector<double> row_norms(const Tensor& x) {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = row_norm(x, r);
  return out;
}

}  // namespace

Tensor pde_residual(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                    std::span<const double> t, std::span<const double> s, double h,
                    FdScheme scheme) {
  if (t.size() != x.rows() || s.size() != x.rows()) {
    throw ShapeError("pde_residual: one (t, s) pair per row required");
  }
  if (!(h > 0.0)) throw DomainError("pde_residual: h must be positive");
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (!(h < t[r] - s[r])) {
      throw DomainError("pde_residual: h >= t - s at row " + std::to_string(r));
    }
  }
  const Tensor vel = v(x, t);
  const Tensor base = f(x, t, s);
  const Tensor back = f(shifted(x, vel, -h), offset(t, -h), s);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (base[i] - back[i]) / h;
  if (scheme == FdScheme::Backward) return out;

  const Tensor fwd = f(shifted(x, vel, h), offset(t, h), s);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (t[r] + h > 1.0) continue;
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (fwd(r, c) - back(r, c)) / (2.0 * h);
  }
  return out;
}

ResidualReport residual_report(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                               std::span<const double> t, std::span<const double> s, double h) {
  ResidualReport report;
  report.h = h;
  report.t.assign(t.begin(), t.end());
  report.s.assign(s.begin(), s.end());
  const Tensor coarse = pde_residual(f, v, x, t, s, h);
  const Tensor fine = pde_residual(f, v, x, t, s, h / 2);
  report.norms = row_norms(coarse);
  for (double n : report.norms) {
    if (!std::isfinite(n)) throw NumericError("residual_report: non-finite residual");
  }
  report.median = median(report.norms);
  report.max = report.norms.empty() ? 0.0 : *std::max_element(report.norms.begin(), report.norms.end());
  Tensor gap(coarse.shape());
  for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = coarse[i] - fine[i];
  report.richardson_gap = median(row_norms(gap));
  return report;
}

GlobalBoundReport global_error_check(const SolutionFn& f, const FieldFn& v, const Tensor& x1,
                                     int rk4_steps, std::size_t probes, double slack, double h) {
  if (probes == 0) throw DomainError("global_error_check: need at least one probe");
  const std::size_t n = x1.rows();
  const int per_segment =
      std::max(1, static_cast<int>((rk4_steps + static_cast<int>(probes) - 1) / static_cast<int>(probes)));
  const sample::VelocityField shared = [&](const Tensor& x, double t) {
    const std::vector<double> times(x.rows(), t);
    return v(x, times);
  };

  GlobalBoundReport report;
  report.slack = slack;
  report.probes = probes;
  report.delta_hat.assign(n, 0.0);
  const std::vector<double> zeros(n, 0.0);
  Tensor state = x1;
  for (std::size_t j = 0; j < probes; ++j) {
    const double l = 1.0 - static_cast<double>(j) / static_cast<double>(probes);
    const std::vector<double> times(n, l);
    const Tensor residual = pde_residual(f, v, state, times, zeros, h);
    for (std::size_t r = 0; r < n; ++r) {
      report.delta_hat[r] = std::max(report.delta_hat[r], row_norm(residual, r));
    }
    const double next = 1.0 - static_cast<double>(j + 1) / static_cast<double>(probes);
    state = sample::integrate(shared, std::move(state), l, next, per_segment, sample::OdeMethod::RK4);
  }

  const std::vector<double> ones(n, 1.0);
  const Tensor model = f(x1, ones, zeros);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < x1.cols(); ++c) {
      const double d = state(r, c) - model(r, c);
      sq += d * d;
    }
    report.error.push_back(std::sqrt(sq));
    // |s - t| = 1 here. The floor keeps an exact solution (error at rounding
    // level, delta_hat likewise) from failing on noise.
    const bool holds = report.error.back() <= slack * report.delta_hat[r] + 1e-12;
    report.satisfied.push_back(holds);
    ok += holds ? 1 : 0;
  }
  report.fraction = n == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(n);
  return report;
}

OdeErrorReport ode_error_check(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                               std::span<const double> t, std::span<const double> s, double h,
                               double delta_hat) {
  if (!(h > 0.0)) throw DomainError("ode_error_check: h must be positive");
  if (t.size() != x.rows() || s.size() != x.rows()) {
    throw ShapeError("ode_error_check: one (t, s) pair per row required");
  }
  const Tensor value = f(x, t, s);
  const Tensor up = f(x, t, offset(s, h));
  const Tensor down = f(x, t, offset(s, -h));
  const Tensor field = v(value, s);
  OdeErrorReport report;
  report.delta_hat = delta_hat;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = (up(r, c) - down(r, c)) / (2.0 * h) - field(r, c);
      sq += d * d;
    }
    report.error.push_back(std::sqrt(sq));
  }
  report.median = median(report.error);
  report.max = report.error.empty() ? 0.0 : *std::max_element(report.error.begin(), report.error.end());
  report.ratio_to_sqrt_delta = delta_hat > 0.0 ? report.median / std::sqrt(delta_hat) : 0.0;
  return report;
}

double boundary_check(const SolutionFn& f, const Tensor& x, std::span<const double> t) {
  const Tensor out = f(x, t, t);
  double worst = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = out(r, c) - x(r, c);
      sq += d * d;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

void write_residual_csv(std::ostream& os, const ResidualReport& report) {
  os << "index,t,s,h,residual_norm\n";
  for (std::size_t i = 0; i < report.norms.size(); ++i) {
    os << i << ',' << report.t[i] << ',' << report.s[i] << ',' << report.h << ','
       << report.norms[i] << '\n';
  }
}

void write_global_csv(std::ostream& os, const GlobalBoundReport& report) {
  os << "index,error,delta_hat,bound,satisfied\n";
  for (std::size_t i = 0; i < report.error.size(); ++i) {
    os << i << ',' << report.error[i] << ',' << report.delta_hat[i] << ','
       << report.slack * report.delta_hat[i] << ',' << (report.satisfied[i] ? 1 : 0) << '\n';
  }
}

void write_ode_csv(std::ostream& os, const OdeErrorReport& report) {
  os << "index,ode_error\n";
  for (std::size_t i = 0; i < report.error.size(); ++i) os << i << ',' << report.error[i] << '\n';
}

}  // namespace soflow::verify
