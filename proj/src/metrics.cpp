#include "soflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "soflow/errors.hpp"

namespace soflow::metrics {
namespace {

double mean_pairwise_distance(const Tensor& a, const Tensor& b) {
  const std::size_t dim = a.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * dim;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.data() + j * dim;
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = ai[d] - bj[d];
        sq += diff * diff;
      }
      total += std::sqrt(sq);
    }
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

Tensor subsample(const Tensor& x, std::size_t count, std::mt19937_64& rng) {
  if (x.rows() == count) return x;
  std::vector<std::size_t> index(x.rows());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::shuffle(index.begin(), index.end(), rng);
  index.resize(count);
  return x.gather_rows(index);
}

}  // namespace

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.rows() < 2 || b.rows() < 2) throw DomainError("energy_distance: need at least 2 points");
  if (a.cols() != b.cols()) {
    throw ShapeError("energy_distance: " + a.shape().str() + " vs " + b.shape().str());
  }
  const double cross = mean_pairwise_distance(a, b);
  const double self_a = mean_pairwise_distance(a, a);
  const double self_b = mean_pairwise_distance(b, b);
  // Rounding can leave tiny negative values for near-identical inputs.
  return std::max(0.0, 2.0 * cross - self_a - self_b);
}

double mean_abs_projection(std::size_t dim) {
  const double d = static_cast<double>(dim);
  return std::exp(std::lgamma(d / 2.0) - std::lgamma((d + 1.0) / 2.0)) / std::sqrt(std::numbers::pi);
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_projections,
                          std::uint64_t seed) {
  if (a.cols() != b.cols()) {
    throw ShapeError("sliced_wasserstein: " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.rows() == 0 || b.rows() == 0 || n_projections == 0) {
    throw DomainError("sliced_wasserstein: empty input or no projections");
  }
  std::mt19937_64 rng(seed);
  const std::size_t n = std::min(a.rows(), b.rows());
  const Tensor sa = subsample(a, n, rng);
  const Tensor sb = subsample(b, n, rng);
  const std::size_t dim = a.cols();

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(dim), pa(n), pb(n);
  double total = 0.0;
  for (std::size_t p = 0; p < n_projections; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : dir) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      double ua = 0.0, ub = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        ua += sa(i, d) * dir[d];
        ub += sb(i, d) * dir[d];
      }
      pa[i] = ua;
      pb[i] = ub;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) w1 += std::abs(pa[i] - pb[i]);
    total += w1 / static_cast<double>(n);
  }
  return total / static_cast<double>(n_projections) / mean_abs_projection(dim);
}

MetricReport compare(const Tensor& a, const Tensor& b, std::size_t n_projections,
                     std::uint64_t seed) {
  MetricReport r;
  r.energy = energy_distance(a, b);
  r.sliced_wasserstein = sliced_wasserstein(a, b, n_projections, seed);
  r.n_projections = n_projections;
  r.seed = seed;
  r.count_a = a.rows();
  r.count_b = b.rows();
  return r;
}

}  // namespace soflow::metrics
