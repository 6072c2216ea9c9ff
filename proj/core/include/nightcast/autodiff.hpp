#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nightcast/tensor.hpp"

namespace nightcast {

// A learnable tensor. Gradients accumulate across tapes until zero_grad(),
// which is what makes micro-batch accumulation exact.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m, adam_v;  // optimizer slots, allocated by the optimizer

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() {
    if (grad.defined()) grad.fill(0.0);
  }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  bool defined() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const;
  long dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Ops append nodes in topological order; backward() walks
// them in reverse. Construct with grad_enabled=false for inference: values
// are computed but no closures or gradient buffers are kept.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor v);
  Var param(Param& p);

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh_fn(Var x);
  Var sin_fn(Var x);

  // linear algebra
  Var matmul(Var a, Var b);                // (N,K) x (K,M)
  Var transpose2d(Var a);                  // (N,M) -> (M,N)
  Var linear(Var x, Var w, Var b);         // x (N,K), w (M,K), b (M) or undefined
  Var add_row(Var x, Var b);               // (N,M) + (M,)
  Var row_softmax(Var x);                  // softmax over last dim of (N,M)

  // image ops, NCHW
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var maxpool2(Var x);
  Var upsample2(Var x);

  // structure
  Var reshape(Var x, Shape shape);
  Var permute(Var x, std::vector<int> perm);
  Var slice(Var x, int axis, long start, long len);
  Var concat(const std::vector<Var>& xs, int axis);
  Var tile_front(Var x, long n);  // (...) -> (n, ...)

  // reductions
  Var sum_all(Var x);
  Var mse(Var pred, Var target);
  Var add_many(const std::vector<Var>& scalars);

  void backward(Var loss, double seed = 1.0);
  const Tensor& grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Param* link = nullptr;
    std::function<void()> back;
  };

  Node& node(Var v) { return *nodes_[static_cast<std::size_t>(v.id_)]; }
  const Node& node(Var v) const { return *nodes_[static_cast<std::size_t>(v.id_)]; }
  const Tensor& val(Var v) const { return node(v).value; }
  Tensor& grad_buf(Var v);
  Var make_node(Tensor value, const std::vector<Var>& parents);
  void check_same_tape(Var v) const;

  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;

  friend class Var;
};

}  // namespace nightcast
