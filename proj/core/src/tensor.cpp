#include "nightcast/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace nightcast {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ", ";
  }
  return out + ")";
}

long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != static_cast<long>(values.size())) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

namespace {
long flat_index(const Shape& shape, std::initializer_list<long> idx) {
  if (idx.size() != shape.size()) {
    throw ShapeError("index rank mismatch for shape " + shape_str(shape));
  }
  long flat = 0;
  std::size_t i = 0;
  for (long v : idx) {
    flat = flat * shape[i] + v;
    ++i;
  }
  return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<long> idx) {
  return (*buf_)[static_cast<std::size_t>(flat_index(shape_, idx))];
}

double Tensor::at(std::initializer_list<long> idx) const {
  return (*buf_)[static_cast<std::size_t>(flat_index(shape_, idx))];
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                     shape_str(new_shape));
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.buf_ = buf_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.buf_ = std::make_shared<std::vector<double>>(*buf_);
  return t;
}

void Tensor::fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

void Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("add_: shape " + shape_str(shape_) + " vs " +
                     shape_str(other.shape_));
  }
  const double* src = other.data();
  double* dst = data();
  const long n = numel();
  for (long i = 0; i < n; ++i) dst[i] += src[i];
}

void Tensor::scale_(double s) {
  double* dst = data();
  const long n = numel();
  for (long i = 0; i < n; ++i) dst[i] *= s;
}

double Tensor::abs_max() const {
  double m = 0.0;
  const double* p = data();
  const long n = numel();
  for (long i = 0; i < n; ++i) m = std::max(m, std::abs(p[i]));
  return m;
}

double Tensor::sum() const {
  double s = 0.0;
  const double* p = data();
  const long n = numel();
  for (long i = 0; i < n; ++i) s += p[i];
  return s;
}

bool Tensor::all_finite() const {
  const double* p = data();
  const long n = numel();
  for (long i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

}  // namespace nightcast
