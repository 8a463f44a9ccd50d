#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "soflow/tensor.hpp"

namespace soflow::data {

// Isotropic Gaussian mixture: component k is N(means[k], sigma^2 I) with
// probability weights[k] and class label classes[k].
struct GmmSpec {
  std::vector<std::vector<double>> means;
  double sigma = 1.0;
  std::vector<double> weights;
  std::vector<int> classes;

  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
  std::size_t num_components() const { return means.size(); }
  int num_classes() const;
  void validate() const;
};

struct LabeledPoints {
  Tensor points;
  std::vector<int> labels;
};

// Named presets: gauss1, ring8, grid25.
GmmSpec preset(std::string_view name);

LabeledPoints sample_data(const GmmSpec& spec, std::size_t count, std::mt19937_64& rng);

// Standard normal [count, dim] block drawn row by row from `rng`.
Tensor sample_normal(std::size_t count, std::size_t dim, std::mt19937_64& rng);

}  // namespace soflow::data
