#include "soflow/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::nn {

void TimeEmbedding::embed(double u, std::span<double> out) const {
  const std::size_t half = dim / 2;
  for (std::size_t j = 0; j < half; ++j) {
    const double w = scale * std::pow(base, -static_cast<double>(j) / static_cast<double>(half));
    out[j] = std::sin(u * w);
    out[half + j] = std::cos(u * w);
  }
}

void NetworkShape::validate() const {
  if (data_dim == 0) throw ConfigError("network: data_dim must be positive");
  if (embed_dim == 0 || embed_dim % 2 != 0) {
    throw ConfigError("network: embed_dim must be a positive even integer");
  }
  if (label_dim == 0) throw ConfigError("network: label_dim must be positive");
  if (hidden.empty()) throw ConfigError("network: need at least one hidden layer");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("network: hidden widths must be positive");
  }
  if (!(freq_base > 0.0) || !(freq_scale > 0.0)) {
    throw ConfigError("network: frequency base and scale must be positive");
  }
}

ModelParams::ModelParams(NetworkShape shape) : shape_(std::move(shape)) {
  shape_.validate();
  tensors_.emplace_back(shape_.num_classes + 1, shape_.label_dim);
  std::size_t fan_in = shape_.input_width();
  for (std::size_t width : shape_.hidden) {
    tensors_.emplace_back(fan_in, width);
    tensors_.emplace_back(1, width);
    fan_in = width;
  }
  tensors_.emplace_back(fan_in, shape_.data_dim);
  tensors_.emplace_back(1, shape_.data_dim);
}

ModelParams ModelParams::initialize(const NetworkShape& shape, std::uint64_t seed,
                                    bool zero_final) {
  ModelParams p(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : p.tensors_[0].values()) v = normal(rng);
  for (std::size_t layer = 0; layer < p.num_layers(); ++layer) {
    const bool last = layer + 1 == p.num_layers();
    if (last && zero_final) continue;
    Tensor& w = p.weight(layer);
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (double& v : w.values()) v = uniform(rng);
    if (last) {
      for (double& v : p.bias(layer).values()) v = uniform(rng);
    }
  }
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const Tensor& t : tensors_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, Binding binding) {
  BoundParams out;
  out.shape = &params.shape();
  out.tensors.reserve(params.tensors().size());
  for (const Tensor& t : params.tensors()) {
    out.tensors.push_back(binding == Binding::Trainable ? tape.parameter(t) : tape.constant(t));
  }
  return out;
}

BoundParams detach(const BoundParams& bound) {
  BoundParams out;
  out.shape = bound.shape;
  out.tensors.reserve(bound.tensors.size());
  for (const ad::Value& v : bound.tensors) out.tensors.push_back(ad::stop_gradient(v));
  return out;
}

namespace {

void check_rows(std::size_t rows, std::size_t n_t, std::size_t n_s, std::size_t n_labels) {
  if (n_t != rows || n_s != rows || n_labels != rows) {
    throw ShapeError("network: " + std::to_string(rows) + " rows but " + std::to_string(n_t) +
                     " t, " + std::to_string(n_s) + " s and " + std::to_string(n_labels) +
                     " labels");
  }
}

Tensor column_of(std::span<const double> values) { return Tensor::column(values); }

}  // namespace

ad::Value forward_raw(const BoundParams& params, const ad::Value& x, std::span<const double> t,
                      std::span<const double> s, std::span<const int> labels) {
  const NetworkShape& shape = *params.shape;
  const std::size_t rows = x.data().rows();
  check_rows(rows, t.size(), s.size(), labels.size());
  if (x.data().cols() != shape.data_dim) {
    throw ShapeError("network: input " + x.shape().str() + " but data_dim is " +
                     std::to_string(shape.data_dim));
  }

  const TimeEmbedding emb = shape.time_embedding();
  Tensor emb_t(rows, shape.embed_dim);
  Tensor emb_gap(rows, shape.embed_dim);
  Tensor one_hot(rows, shape.num_classes + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    emb.embed(t[r], emb_t.row_span(r));
    emb.embed(s[r] - t[r], emb_gap.row_span(r));
    const int c = labels[r];
    if (c < 0 || c > shape.empty_label()) {
      throw DomainError("network: label " + std::to_string(c) + " outside [0, " +
                        std::to_string(shape.empty_label()) + "]");
    }
    one_hot(r, static_cast<std::size_t>(c)) = 1.0;
  }

  ad::Tape& tape = x.tape();
  const ad::Value label_rows = ad::matmul(tape.constant(std::move(one_hot)), params.tensors[0]);
  const ad::Value parts[] = {x, tape.constant(std::move(emb_t)), tape.constant(std::move(emb_gap)),
                             label_rows};
  ad::Value h = ad::concat(parts);
  const std::size_t layers = shape.hidden.size() + 1;
  for (std::size_t layer = 0; layer < layers; ++layer) {
    h = ad::matmul(h, params.tensors[1 + 2 * layer]) + params.tensors[2 + 2 * layer];
    if (layer + 1 < layers) h = ad::silu(h);
  }
  return h;
}

ad::Value forward_solution(const BoundParams& params, const flow::SolutionParameterization& param,
                           const ad::Value& x, std::span<const double> t,
                           std::span<const double> s, std::span<const int> labels) {
  const ad::Value raw = forward_raw(params, x, t, s, labels);
  std::vector<double> a(t.size()), b(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    a[r] = param.a(t[r], s[r]);
    b[r] = param.b(t[r], s[r]);
  }
  ad::Tape& tape = x.tape();
  return tape.constant(column_of(a)) * x + tape.constant(column_of(b)) * raw;
}

ad::Value predicted_velocity(const BoundParams& params, const flow::SolutionParameterization& param,
                             const ad::Value& x, std::span<const double> t,
                             std::span<const int> labels) {
  const ad::Value raw = forward_raw(params, x, t, t, labels);
  std::vector<double> da(t.size()), db(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const flow::DiagPartials d = param.diag_partials(t[r]);
    da[r] = d.da;
    db[r] = d.db;
  }
  ad::Tape& tape = x.tape();
  return tape.constant(column_of(da)) * x + tape.constant(column_of(db)) * raw;
}

Tensor evaluate_raw(const ModelParams& params, const Tensor& x, std::span<const double> t,
                    std::span<const double> s, std::span<const int> labels) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, Binding::Constant);
  return forward_raw(bound, tape.constant(x), t, s, labels).data();
}

Tensor evaluate_solution(const ModelParams& params, const flow::SolutionParameterization& param,
                         const Tensor& x, std::span<const double> t, std::span<const double> s,
                         std::span<const int> labels) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, Binding::Constant);
  return forward_solution(bound, param, tape.constant(x), t, s, labels).data();
}

Tensor evaluate_velocity(const ModelParams& params, const flow::SolutionParameterization& param,
                         const Tensor& x, std::span<const double> t, std::span<const int> labels) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, Binding::Constant);
  return predicted_velocity(bound, param, tape.constant(x), t, labels).data();
}

void ema_update(ModelParams& shadow, const ModelParams& live, double decay) {
  if (shadow.tensors().size() != live.tensors().size()) {
    throw ShapeError("ema_update: parameter lists differ in length");
  }
  for (std::size_t i = 0; i < live.tensors().size(); ++i) {
    Tensor& sh = shadow.tensors()[i];
    const Tensor& lv = live.tensors()[i];
    if (sh.shape() != lv.shape()) {
      throw ShapeError("ema_update: tensor " + std::to_string(i) + " " + sh.shape().str() +
                       " vs " + lv.shape().str());
    }
    for (std::size_t k = 0; k < sh.size(); ++k) sh[k] = decay * sh[k] + (1.0 - decay) * lv[k];
  }
}

EmaParams::EmaParams(ModelParams initial, double decay)
    : shadow_(std::move(initial)), decay_(decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("ema: decay must lie in [0, 1]");
}

}  // namespace soflow::nn
