#include "soflow/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::data {

int GmmSpec::num_classes() const {
  int top = -1;
  for (int c : classes) top = std::max(top, c);
  return top + 1;
}

void GmmSpec::validate() const {
  if (means.empty()) throw ConfigError("gmm: no components");
  if (!(sigma > 0.0)) throw ConfigError("gmm: sigma must be positive");
  if (weights.size() != means.size() || classes.size() != means.size()) {
    throw ConfigError("gmm: means, weights and classes must have equal length");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != dim()) throw ConfigError("gmm: component dimensions differ");
    if (weights[k] < 0.0) throw ConfigError("gmm: negative weight");
    if (classes[k] < 0) throw ConfigError("gmm: negative class label");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("gmm: weights must sum to 1");
}

GmmSpec preset(std::string_view name) {
  GmmSpec spec;
  if (name == "gauss1") {
    spec.means = {{0.0, 0.0}};
    spec.sigma = 1.0;
    spec.weights = {1.0};
    spec.classes = {0};
  } else if (name == "ring8") {
    for (int k = 0; k < 8; ++k) {
      const double angle = 2.0 * std::numbers::pi * k / 8.0;
      spec.means.push_back({4.0 * std::cos(angle), 4.0 * std::sin(angle)});
      spec.classes.push_back(k);
    }
    spec.sigma = 0.3;
    spec.weights.assign(8, 1.0 / 8.0);
  } else if (name == "grid25") {
    int label = 0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        spec.means.push_back({2.0 * (i - 2), 2.0 * (j - 2)});
        spec.classes.push_back(label++);
      }
    }
    spec.sigma = 0.3;
    spec.weights.assign(25, 1.0 / 25.0);
  } else {
    throw ConfigError("unknown dataset preset '" + std::string(name) + "'");
  }
  return spec;
}

LabeledPoints sample_data(const GmmSpec& spec, std::size_t count, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledPoints out{Tensor(count, spec.dim()), std::vector<int>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = pick(rng);
    out.labels[i] = spec.classes[k];
    for (std::size_t d = 0; d < spec.dim(); ++d) {
      out.points(i, d) = spec.means[k][d] + spec.sigma * normal(rng);
    }
  }
  return out;
}

Tensor sample_normal(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(count, dim);
  for (double& v : out.values()) v = normal(rng);
  return out;
}

}  // namespace soflow::data
