#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "nightcast/common.hpp"

namespace nightcast {

using Shape = std::vector<long>;

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);

// Dense row-major tensor of doubles. Copies are shallow (shared buffer);
// use clone() when a private copy is needed. reshaped() aliases the buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  long numel() const { return buf_ ? static_cast<long>(buf_->size()) : 0; }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }

  double& operator[](long i) { return (*buf_)[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<long> idx);
  double at(std::initializer_list<long> idx) const;

  Tensor reshaped(Shape new_shape) const;
  Tensor clone() const;

  void fill(double v);
  void add_(const Tensor& other);          // elementwise +=
  void scale_(double s);
  double abs_max() const;
  double sum() const;
  bool all_finite() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

}  // namespace nightcast
