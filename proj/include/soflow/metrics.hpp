#pragma once

#include <cstdint>

#include "soflow/tensor.hpp"

namespace soflow::metrics {

struct MetricReport {
  double energy = 0.0;
  double sliced_wasserstein = 0.0;
  std::size_t n_projections = 0;
  std::uint64_t seed = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
};

// V-statistic 2 E|a - b| - E|a - a'| - E|b - b'| over all ordered pairs.
double energy_distance(const Tensor& a, const Tensor& b);

// Mean over random unit directions of the 1-D Wasserstein-1 distance between
// the projected samples, divided by E|<u, e_1>| for u uniform on the sphere so
// that a pure translation by d scores |d| in any dimension. The larger sample
// is subsampled (seeded) to the size of the smaller one.
double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_projections,
                          std::uint64_t seed);

// E|<u, e_1>| for u uniform on the unit sphere in R^dim.
double mean_abs_projection(std::size_t dim);

MetricReport compare(const Tensor& a, const Tensor& b, std::size_t n_projections = 512,
                     std::uint64_t seed = 0);

}  // namespace soflow::metrics
