#pragma once

// The raw network F(x, t, s, c) and the solution function built on top of it,
//
//   f(x, t, s, c) = a(t, s) x + b(t, s) F(x, t, s, c).
//
// F is an MLP with SiLU activations over the concatenation
// [x, emb(t), emb(s - t), label_table[c]]. The label table has one extra row
// (index num_classes) for the empty label.

#include <cstdint>
#include <span>
#include <vector>

#include "soflow/flowmath.hpp"
#include "soflow/gradtape.hpp"
#include "soflow/tensor.hpp"

namespace soflow::nn {

// [sin(u w_j), cos(u w_j)] with w_j = scale * base^(-j / half), half = dim / 2.
struct TimeEmbedding {
  std::size_t dim = 32;
  double base = 1e4;
  double scale = 64.0;

  void embed(double u, std::span<double> out) const;
};

struct NetworkShape {
  std::size_t data_dim = 2;
  std::size_t num_classes = 1;
  std::size_t embed_dim = 32;
  std::size_t label_dim = 16;
  std::vector<std::size_t> hidden{128, 128, 128};
  double freq_base = 1e4;
  double freq_scale = 64.0;

  std::size_t input_width() const { return data_dim + 2 * embed_dim + label_dim; }
  int empty_label() const { return static_cast<int>(num_classes); }
  TimeEmbedding time_embedding() const { return {embed_dim, freq_base, freq_scale}; }
  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

// Tensor order: label table, then (weight, bias) per layer, input to output.
// Weights are [fan_in, fan_out]; biases are [1, fan_out].
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(NetworkShape shape);

  // Fan-in scaled uniform hidden layers, N(0, 1) label table and, when
  // `zero_final`, an all-zero output layer (the identity flow f = a x).
  static ModelParams initialize(const NetworkShape& shape, std::uint64_t seed,
                                bool zero_final = true);

  const NetworkShape& shape() const { return shape_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t num_layers() const { return shape_.hidden.size() + 1; }
  const Tensor& label_table() const { return tensors_[0]; }
  const Tensor& weight(std::size_t layer) const { return tensors_[1 + 2 * layer]; }
  const Tensor& bias(std::size_t layer) const { return tensors_[2 + 2 * layer]; }
  Tensor& weight(std::size_t layer) { return tensors_[1 + 2 * layer]; }
  Tensor& bias(std::size_t layer) { return tensors_[2 + 2 * layer]; }

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;

 private:
  NetworkShape shape_;
  std::vector<Tensor> tensors_;
};

// Parameters recorded on a tape.
struct BoundParams {
  const NetworkShape* shape = nullptr;
  std::vector<ad::Value> tensors;
};

enum class Binding { Trainable, Constant };

BoundParams bind(ad::Tape& tape, const ModelParams& params, Binding binding);
// Same data routed through stop_gradient.
BoundParams detach(const BoundParams& bound);

// Row-wise times and labels; labels must lie in [0, num_classes].
ad::Value forward_raw(const BoundParams& params, const ad::Value& x, std::span<const double> t,
                      std::span<const double> s, std::span<const int> labels);

ad::Value forward_solution(const BoundParams& params, const flow::SolutionParameterization& param,
                           const ad::Value& x, std::span<const double> t,
                           std::span<const double> s, std::span<const int> labels);

// d/ds f(x, t, s) at s = t, which reduces to da(t) x + db(t) F(x, t, t) because b(t, t) = 0.
ad::Value predicted_velocity(const BoundParams& params, const flow::SolutionParameterization& param,
                             const ad::Value& x, std::span<const double> t,
                             std::span<const int> labels);

// Gradient-free evaluations on a scratch tape.
Tensor evaluate_raw(const ModelParams& params, const Tensor& x, std::span<const double> t,
                    std::span<const double> s, std::span<const int> labels);
Tensor evaluate_solution(const ModelParams& params, const flow::SolutionParameterization& param,
                         const Tensor& x, std::span<const double> t, std::span<const double> s,
                         std::span<const int> labels);
Tensor evaluate_velocity(const ModelParams& params, const flow::SolutionParameterization& param,
                         const Tensor& x, std::span<const double> t, std::span<const int> labels);

// shadow <- decay * shadow + (1 - decay) * live, elementwise.
void ema_update(ModelParams& shadow, const ModelParams& live, double decay);

class EmaParams {
 public:
  EmaParams() = default;
  EmaParams(ModelParams initial, double decay);

  void update(const ModelParams& live) { ema_update(shadow_, live, decay_); }
  const ModelParams& shadow() const { return shadow_; }
  ModelParams& shadow() { return shadow_; }
  double decay() const { return decay_; }

 private:
  ModelParams shadow_;
  double decay_ = 0.999;
};

}  // namespace soflow::nn
