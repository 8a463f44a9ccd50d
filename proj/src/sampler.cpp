#include "soflow/sampler.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::sample {

std::vector<double> uniform_grid(int nfe) {
  if (nfe < 1) throw DomainError("sampler: nfe must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(nfe));
  for (int i = 0; i < nfe; ++i) grid[static_cast<std::size_t>(i)] = 1.0 - static_cast<double>(i) / nfe;
  return grid;
}

namespace {

std::vector<int> expand_labels(const SampleRequest& request, int empty_label) {
  if (request.labels.empty()) return std::vector<int>(request.count, empty_label);
  if (request.labels.size() == 1) return std::vector<int>(request.count, request.labels[0]);
  if (request.labels.size() != request.count) {
    throw DomainError("sampler: " + std::to_string(request.labels.size()) + " labels for " +
                      std::to_string(request.count) + " samples");
  }
  return request.labels;
}

// Per-sample noise streams keyed on (seed, sample index).
std::vector<std::mt19937_64> sample_streams(std::uint64_t seed, std::size_t count) {
  std::vector<std::mt19937_64> streams;
  streams.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    streams.emplace_back(seq);
  }
  return streams;
}

Tensor draw(std::vector<std::mt19937_64>& streams, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(streams.size(), dim);
  for (std::size_t r = 0; r < streams.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      out(r, c) = normal(streams[r]);
      normal.reset();
    }
  }
  return out;
}

void check_request(const SampleRequest& request) {
  if (request.count == 0) throw DomainError("sampler: count must be >= 1");
  if (request.nfe < 1) throw DomainError("sampler: nfe must be >= 1");
}

}  // namespace

Tensor one_step_sample(const nn::ModelParams& params, const flow::SolutionParameterization& param,
                       const SampleRequest& request) {
  check_request(request);
  if (request.nfe != 1) throw DomainError("one_step_sample: nfe must be 1");
  const std::vector<int> labels = expand_labels(request, params.shape().empty_label());
  auto streams = sample_streams(request.seed, request.count);
  const Tensor x1 = draw(streams, params.shape().data_dim);
  const std::vector<double> t(request.count, 1.0), s(request.count, 0.0);
  return nn::evaluate_solution(params, param, x1, t, s, labels);
}

Tensor multi_step_sample(const nn::ModelParams& params, const flow::SolutionParameterization& param,
                         const flow::NoisingSchedule& schedule, const SampleRequest& request) {
  check_request(request);
  const std::vector<double> grid = request.grid.empty() ? uniform_grid(request.nfe) : request.grid;
  if (grid.size() != static_cast<std::size_t>(request.nfe)) {
    throw DomainError("multi_step_sample: grid has " + std::to_string(grid.size()) +
                      " entries for nfe " + std::to_string(request.nfe));
  }
  if (grid.front() != 1.0) throw DomainError("multi_step_sample: grid must start at t = 1");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] < grid[i - 1] && grid[i] > 0.0)) {
      throw DomainError("multi_step_sample: grid must decrease strictly inside (0, 1]");
    }
  }
  const std::vector<int> labels = expand_labels(request, params.shape().empty_label());
  auto streams = sample_streams(request.seed, request.count);
  const std::size_t dim = params.shape().data_dim;
  Tensor x = draw(streams, dim);
  const std::vector<double> zeros(request.count, 0.0);
  Tensor x0_hat;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::vector<double> t(request.count, grid[i]);
    x0_hat = nn::evaluate_solution(params, param, x, t, zeros, labels);
    if (i + 1 < grid.size()) {
      const Tensor z = draw(streams, dim);
      x = flow::interpolate(schedule, x0_hat, z, grid[i + 1]);
    }
  }
  return x0_hat;
}

Tensor integrate(const VelocityField& velocity, Tensor x, double t_start, double t_end, int steps,
                 OdeMethod method) {
  if (steps < 1) throw DomainError("ode: steps must be >= 1");
  const double h = (t_end - t_start) / steps;
  auto axpy = [](const Tensor& base, const Tensor& dir, double c) {
    Tensor out = base;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * dir[i];
    return out;
  };
  for (int k = 0; k < steps; ++k) {
    // Times are computed from the step index so the last node lands on t_end
    // exactly instead of drifting past it.
    const double t = t_start + k * h;
    const double t_next = k + 1 == steps ? t_end : t_start + (k + 1) * h;
    const double t_mid = 0.5 * (t + t_next);
    if (method == OdeMethod::Euler) {
      x = axpy(x, velocity(x, t), h);
    } else {
      const Tensor k1 = velocity(x, t);
      const Tensor k2 = velocity(axpy(x, k1, h / 2), t_mid);
      const Tensor k3 = velocity(axpy(x, k2, h / 2), t_mid);
      const Tensor k4 = velocity(axpy(x, k3, h), t_next);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    if (!x.all_finite()) {
      throw NumericError("ode: non-finite state after step " + std::to_string(k));
    }
  }
  return x;
}

Tensor ode_reference_sample(const VelocityField& velocity, Tensor x1, int steps, OdeMethod method) {
  return integrate(velocity, std::move(x1), 1.0, 0.0, steps, method);
}

namespace {

// Writes E[alpha' x0 + beta' x1 | x_t = x] for one row into `out`.
void gmm_velocity_row(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                      std::span<const double> x, double t, int class_filter,
                      std::vector<double>& resp, std::span<double> out) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("analytic velocity: t outside [0, 1]");
  const double a = schedule.alpha(t), b = schedule.beta(t);
  const double da = schedule.d_alpha(t), db = schedule.d_beta(t);
  const double var = a * a * gmm.sigma * gmm.sigma + b * b;
  const double gain0 = a * gmm.sigma * gmm.sigma / var;  // slope of E[x0 | x_t, k]
  const double gain1 = b / var;                          // slope of E[x1 | x_t, k]
  const std::size_t K = gmm.num_components(), dim = gmm.dim();

  resp.assign(K, 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    if ((class_filter >= 0 && gmm.classes[k] != class_filter) || gmm.weights[k] <= 0.0) {
      resp[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - a * gmm.means[k][d];
      sq += diff * diff;
    }
    resp[k] = std::log(gmm.weights[k]) - 0.5 * sq / var;
    top = std::max(top, resp[k]);
  }
  if (!std::isfinite(top)) throw DomainError("analytic velocity: no component matches the class");
  double norm = 0.0;
  for (double& r : resp) {
    r = std::exp(r - top);
    norm += r;
  }
  for (std::size_t d = 0; d < dim; ++d) {
    double v = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (resp[k] == 0.0) continue;
      const double resid = x[d] - a * gmm.means[k][d];
      v += resp[k] * (da * (gmm.means[k][d] + gain0 * resid) + db * gain1 * resid);
    }
    out[d] = v / norm;
  }
}

}  // namespace

Tensor analytic_gmm_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                             const Tensor& x, std::span<const double> t, int class_filter) {
  if (x.cols() != gmm.dim()) throw ShapeError("analytic velocity: dimension mismatch");
  if (t.size() != x.rows()) throw ShapeError("analytic velocity: one time per row required");
  Tensor out(x.shape());
  std::vector<double> resp;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    gmm_velocity_row(gmm, schedule, x.row_span(r), t[r], class_filter, resp, out.row_span(r));
  }
  return out;
}

Tensor analytic_gmm_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                             const Tensor& x, double t, int class_filter) {
  const std::vector<double> times(x.rows(), t);
  return analytic_gmm_velocity(gmm, schedule, x, times, class_filter);
}

Tensor analytic_guided_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                                const guide::GuidanceConfig& guidance, const Tensor& x,
                                std::span<const double> t, std::span<const int> labels,
                                int empty_label) {
  if (labels.size() != x.rows() || t.size() != x.rows()) {
    throw ShapeError("guided velocity: one label and one time per row required");
  }
  if (x.cols() != gmm.dim()) throw ShapeError("guided velocity: dimension mismatch");
  Tensor out(x.shape());
  std::vector<double> resp, cond(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    gmm_velocity_row(gmm, schedule, x.row_span(r), t[r], -1, resp, out.row_span(r));
    if (labels[r] == empty_label) continue;
    gmm_velocity_row(gmm, schedule, x.row_span(r), t[r], labels[r], resp, cond);
    const double w = guide::effective_strength(guidance, t[r]);
    for (std::size_t d = 0; d < x.cols(); ++d) out(r, d) = w * cond[d] + (1.0 - w) * out(r, d);
  }
  return out;
}

Tensor analytic_guided_velocity(const data::GmmSpec& gmm, const flow::NoisingSchedule& schedule,
                                const guide::GuidanceConfig& guidance, const Tensor& x, double t,
                                std::span<const int> labels, int empty_label) {
  const std::vector<double> times(x.rows(), t);
  return analytic_guided_velocity(gmm, schedule, guidance, x, times, labels, empty_label);
}

}  // namespace soflow::sample
