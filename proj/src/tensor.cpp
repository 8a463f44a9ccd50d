#include "soflow/tensor.hpp"

#include <cmath>

#include "soflow/errors.hpp"

namespace soflow {

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, data_(std::move(values)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill " +
                     shape_.str());
  }
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + shape_.str());
  }
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin * cols());
  return Tensor(count, cols(),
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols())));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> index) const {
  Tensor out(index.size(), cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows()) throw ShapeError("gather_rows: index out of range");
    auto src = row_span(index[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor vstack(const Tensor& top, const Tensor& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw ShapeError("vstack: " + top.shape().str() + " vs " + bottom.shape().str());
  }
  std::vector<double> values(top.values().begin(), top.values().end());
  values.insert(values.end(), bottom.values().begin(), bottom.values().end());
  return Tensor(top.rows() + bottom.rows(), top.cols(), std::move(values));
}

double row_norm(const Tensor& t, std::size_t r) {
  double acc = 0.0;
  for (double v : t.row_span(r)) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace soflow
