#include "soflow/flowmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::flow {

double NoisingSchedule::alpha(double t) const {
  if (kind_ == ScheduleKind::Linear) return 1.0 - t;
  // cos(pi/2) rounds to 6e-17; pin the endpoint.
  if (t == 1.0) return 0.0;
  return std::cos(kHalfPi * t);
}

double NoisingSchedule::beta(double t) const {
  if (kind_ == ScheduleKind::Linear) return t;
  return std::sin(kHalfPi * t);
}

double NoisingSchedule::d_alpha(double t) const {
  if (kind_ == ScheduleKind::Linear) return -1.0;
  return -kHalfPi * std::sin(kHalfPi * t);
}

double NoisingSchedule::d_beta(double t) const {
  if (kind_ == ScheduleKind::Linear) return 1.0;
  if (t == 1.0) return 0.0;
  return kHalfPi * std::cos(kHalfPi * t);
}

double SolutionParameterization::a(double t, double s) const {
  if (kind_ == ParamKind::Euler) return 1.0;
  return std::cos(kHalfPi * (s - t));
}

double SolutionParameterization::b(double t, double s) const {
  if (kind_ == ParamKind::Euler) return s - t;
  return std::sin(kHalfPi * (s - t));
}

DiagPartials SolutionParameterization::diag_partials(double /*t*/) const {
  if (kind_ == ParamKind::Euler) return {0.0, 1.0};
  return {0.0, kHalfPi};
}

namespace {

void check_pair(const Tensor& x0, const Tensor& x1, std::size_t n_times, const char* op) {
  if (x0.shape() != x1.shape()) {
    throw ShapeError(std::string(op) + ": x0 " + x0.shape().str() + " vs x1 " +
                     x1.shape().str());
  }
  if (n_times != x0.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(n_times) + " times for " +
                     std::to_string(x0.rows()) + " rows");
  }
}

template <class Coef0, class Coef1>
Tensor combine_rows(const Tensor& x0, const Tensor& x1, std::span<const double> t, Coef0 c0,
                    Coef1 c1) {
  Tensor out(x0.shape());
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    const double a = c0(t[r]);
    const double b = c1(t[r]);
    for (std::size_t c = 0; c < x0.cols(); ++c) out(r, c) = a * x0(r, c) + b * x1(r, c);
  }
  return out;
}

}  // namespace

Tensor interpolate(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                   std::span<const double> t) {
  check_pair(x0, x1, t.size(), "interpolate");
  return combine_rows(
      x0, x1, t, [&](double u) { return schedule.alpha(u); },
      [&](double u) { return schedule.beta(u); });
}

Tensor interpolate(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                   double t) {
  const std::vector<double> times(x0.rows(), t);
  return interpolate(schedule, x0, x1, times);
}

Tensor conditional_velocity(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                            std::span<const double> t) {
  check_pair(x0, x1, t.size(), "conditional_velocity");
  return combine_rows(
      x0, x1, t, [&](double u) { return schedule.d_alpha(u); },
      [&](double u) { return schedule.d_beta(u); });
}

Tensor conditional_velocity(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                            double t) {
  const std::vector<double> times(x0.rows(), t);
  return conditional_velocity(schedule, x0, x1, times);
}

LogitNormalSampler::LogitNormalSampler(double mu, double sigma, std::uint64_t seed)
    : mu_(mu), sigma_(sigma), engine_(seed) {
  if (!(sigma >= 0.0) || !std::isfinite(mu)) {
    throw DomainError("logit-normal sampler: need finite mu and sigma >= 0");
  }
}

std::vector<double> LogitNormalSampler::sample(std::size_t count) {
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(count);
  for (double& v : out) {
    const double z = mu_ + sigma_ * normal(engine_);
    v = std::clamp(1.0 / (1.0 + std::exp(-z)), lo, hi);
  }
  return out;
}

double LSchedule::value(std::int64_t k, std::int64_t total) const {
  if (total < 1 || k < 0 || k > total) {
    throw DomainError("l-schedule: need 0 <= k <= K and K >= 1 (k=" + std::to_string(k) +
                      ", K=" + std::to_string(total) + ")");
  }
  const double frac = static_cast<double>(k) / static_cast<double>(total);
  switch (kind) {
    case LScheduleKind::Exponential:
      if (k == total) return r_end;
      return r_init * std::pow(r_end / r_init, frac);
    case LScheduleKind::Cosine:
      return r_end + (r_init - r_end) * 0.5 * (1.0 + std::cos(M_PI * frac));
    case LScheduleKind::Linear:
      return r_init + (r_end - r_init) * frac;
    case LScheduleKind::Constant:
      return r_end;
  }
  return r_end;
}

void LSchedule::validate() const {
  if (!(r_init > 0.0 && r_init <= 1.0)) throw ConfigError("l-schedule: r_init must lie in (0, 1]");
  if (!(r_end > 0.0 && r_end <= r_init)) {
    throw ConfigError("l-schedule: r_end must lie in (0, r_init]");
  }
}

TimeTriples sample_tls(LogitNormalSampler& t_sampler, LogitNormalSampler& s_sampler,
                       const LSchedule& schedule, std::int64_t k, std::int64_t total,
                       std::size_t count) {
  const double r = schedule.value(k, total);
  TimeTriples out;
  out.t = t_sampler.sample(count);
  out.s = s_sampler.sample(count);
  out.l.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    // t below 2 * gap would push s under zero.
    double& t = out.t[i];
    t = std::max(t, 2.0 * kTimeGap);
    double& s = out.s[i];
    s = std::min(s, t - kTimeGap);
    const double l = (1.0 - r) * t + r * s;
    out.l[i] = std::min(l, t - kTimeGap);
  }
  return out;
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "trig" || name == "trigonometric") return ScheduleKind::Trigonometric;
  throw ConfigError("unknown noising schedule '" + std::string(name) + "'");
}

ParamKind parse_param_kind(std::string_view name) {
  if (name == "euler") return ParamKind::Euler;
  if (name == "trig" || name == "trigonometric") return ParamKind::Trigonometric;
  throw ConfigError("unknown parameterization '" + std::string(name) + "'");
}

LScheduleKind parse_lschedule_kind(std::string_view name) {
  if (name == "exponential") return LScheduleKind::Exponential;
  if (name == "cosine") return LScheduleKind::Cosine;
  if (name == "linear") return LScheduleKind::Linear;
  if (name == "constant") return LScheduleKind::Constant;
  throw ConfigError("unknown l-schedule '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Linear ? "linear" : "trigonometric";
}

std::string_view to_string(ParamKind kind) {
  return kind == ParamKind::Euler ? "euler" : "trigonometric";
}

std::string_view to_string(LScheduleKind kind) {
  switch (kind) {
    case LScheduleKind::Exponential: return "exponential";
    case LScheduleKind::Cosine: return "cosine";
    case LScheduleKind::Linear: return "linear";
    case LScheduleKind::Constant: return "constant";
  }
  return "exponential";
}

}  // namespace soflow::flow
