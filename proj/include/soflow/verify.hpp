#pragma once

// Numerical checks of a learned solution function against its velocity
// field, all by finite differences:
//
//  - boundary:  f(x, t, t) = x
//  - residual:  R(x, t, s) = d1 f(x, t, s) v(x, t) + d2 f(x, t, s), estimated as
//               the derivative of f along the flow, d/dh f(x + v h, t + h, s)
//  - global:    |f_true(x, 1, 0) - f(x, 1, 0)| <= slack * delta_hat, where
//               delta_hat is the largest residual seen along the true trajectory
//  - ode error: |d3 f(x, t, s) - v(f(x, t, s), s)|

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "soflow/flowmath.hpp"
#include "soflow/network.hpp"
#include "soflow/tensor.hpp"

namespace soflow::verify {

// f(x, t, s) row-wise.
using SolutionFn =
    std::function<Tensor(const Tensor& x, std::span<const double> t, std::span<const double> s)>;
// v(x, t) row-wise.
using FieldFn = std::function<Tensor(const Tensor& x, std::span<const double> t)>;

// Binds a model to one label per row (the label vector must match the batch).
SolutionFn model_solution(const nn::ModelParams& params, flow::SolutionParameterization param,
                          std::vector<int> labels);

enum class FdScheme { Backward, Central };

// Flow-directional difference quotient of f. Central probes fall back to the
// backward quotient on rows where t + h > 1.
Tensor pde_residual(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                    std::span<const double> t, std::span<const double> s, double h,
                    FdScheme scheme = FdScheme::Central);

struct ResidualReport {
  std::vector<double> norms;
  std::vector<double> t, s;
  double h = 0.0;
  double median = 0.0;
  double max = 0.0;  // delta_hat
  // Median |R(h) - R(h/2)|; a sanity probe on the discretisation error.
  double richardson_gap = 0.0;
};

ResidualReport residual_report(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                               std::span<const double> t, std::span<const double> s, double h);

struct GlobalBoundReport {
  std::vector<double> error;      // |f_true(x, 1, 0) - f(x, 1, 0)|
  std::vector<double> delta_hat;  // max residual over the trajectory probes
  std::vector<bool> satisfied;
  double slack = 3.0;
  std::size_t probes = 16;
  double fraction = 0.0;
};

// The true trajectory from t = 1 is integrated with RK4 on `v`; residuals are
// probed at `probes` evenly spaced times along it with s = 0.
GlobalBoundReport global_error_check(const SolutionFn& f, const FieldFn& v, const Tensor& x1,
                                     int rk4_steps, std::size_t probes = 16, double slack = 3.0,
                                     double h = 1e-3);

struct OdeErrorReport {
  std::vector<double> error;
  double median = 0.0;
  double max = 0.0;
  double delta_hat = 0.0;
  double ratio_to_sqrt_delta = 0.0;  // median / sqrt(delta_hat)
};

// Central difference of f in s against v(f(x, t, s), s).
OdeErrorReport ode_error_check(const SolutionFn& f, const FieldFn& v, const Tensor& x,
                               std::span<const double> t, std::span<const double> s, double h,
                               double delta_hat);

// max_r |f(x_r, t_r, t_r) - x_r|.
double boundary_check(const SolutionFn& f, const Tensor& x, std::span<const double> t);

double median(std::vector<double> values);

void write_residual_csv(std::ostream& os, const ResidualReport& report);
void write_global_csv(std::ostream& os, const GlobalBoundReport& report);
void write_ode_csv(std::ostream& os, const OdeErrorReport& report);

}  // namespace soflow::verify
