#pragma once

// Noising schedules, solution parameterizations, time samplers and the
// l-schedule family. Everything here is closed form; derivatives are coded
// analytically.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "soflow/tensor.hpp"

namespace soflow::flow {

inline constexpr double kHalfPi = 1.57079632679489661923;
// Minimum gap kept between s, l and t by the time sampler.
inline constexpr double kTimeGap = 1e-4;

enum class ScheduleKind { Linear, Trigonometric };

// x_t = alpha(t) x0 + beta(t) x1 with alpha(0) = beta(1) = 1, alpha(1) = beta(0) = 0.
class NoisingSchedule {
 public:
  explicit NoisingSchedule(ScheduleKind kind = ScheduleKind::Linear) : kind_(kind) {}

  ScheduleKind kind() const { return kind_; }
  double alpha(double t) const;
  double beta(double t) const;
  double d_alpha(double t) const;
  double d_beta(double t) const;

 private:
  ScheduleKind kind_;
};

enum class ParamKind { Euler, Trigonometric };

struct DiagPartials {
  double da;  // d/ds a(t, s) at s = t
  double db;  // d/ds b(t, s) at s = t
};

// f(x, t, s) = a(t, s) x + b(t, s) F(x, t, s), with a(t, t) = 1 and b(t, t) = 0.
class SolutionParameterization {
 public:
  explicit SolutionParameterization(ParamKind kind = ParamKind::Euler) : kind_(kind) {}

  ParamKind kind() const { return kind_; }
  double a(double t, double s) const;
  double b(double t, double s) const;
  DiagPartials diag_partials(double t) const;

 private:
  ParamKind kind_;
};

// Row-wise alpha(t_i) x0_i + beta(t_i) x1_i; `t` has one entry per row.
Tensor interpolate(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                   std::span<const double> t);
Tensor interpolate(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1, double t);

// Row-wise alpha'(t_i) x0_i + beta'(t_i) x1_i.
Tensor conditional_velocity(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                            std::span<const double> t);
Tensor conditional_velocity(const NoisingSchedule& schedule, const Tensor& x0, const Tensor& x1,
                            double t);

// sigmoid(mu + sigma z), z ~ N(0, 1). Draws are kept strictly inside (0, 1).
class LogitNormalSampler {
 public:
  LogitNormalSampler(double mu, double sigma, std::uint64_t seed);

  std::vector<double> sample(std::size_t count);

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  std::mt19937_64& engine() { return engine_; }
  const std::mt19937_64& engine() const { return engine_; }

 private:
  double mu_;
  double sigma_;
  std::mt19937_64 engine_;
};

enum class LScheduleKind { Exponential, Cosine, Linear, Constant };

struct LSchedule {
  LScheduleKind kind = LScheduleKind::Exponential;
  double r_init = 0.1;
  double r_end = 0.002;

  // r(k, K); non-increasing in k.
  double value(std::int64_t k, std::int64_t total) const;
  void validate() const;
};

struct TimeTriples {
  std::vector<double> t;
  std::vector<double> l;
  std::vector<double> s;
};

// Draws (t, l, s) with s <= l <= t - kTimeGap. s is clamped first, l is then
// computed from the clamped s and clamped itself.
TimeTriples sample_tls(LogitNormalSampler& t_sampler, LogitNormalSampler& s_sampler,
                       const LSchedule& schedule, std::int64_t k, std::int64_t total,
                       std::size_t count);

ScheduleKind parse_schedule_kind(std::string_view name);
ParamKind parse_param_kind(std::string_view name);
LScheduleKind parse_lschedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);
std::string_view to_string(ParamKind kind);
std::string_view to_string(LScheduleKind kind);

}  // namespace soflow::flow
