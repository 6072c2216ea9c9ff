#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nightcast/autodiff.hpp"
#include "nightcast/rng.hpp"

namespace nightcast {

// Fan-in scaled uniform init, bound = 1/sqrt(fan_in); applied to weights and
// biases alike. All parameter randomness flows through the caller's Rng.
void init_uniform(Tensor& t, long fan_in, Rng& rng);

struct LinearLayer {
  Param w;  // (out, in)
  Param b;  // (out)

  LinearLayer() = default;
  LinearLayer(const std::string& name, long in, long out, Rng& rng);

  Var apply(Tape& tape, Var x) const;  // x (N, in) -> (N, out)
  void collect(std::vector<Param*>& out);
};

struct Conv2dLayer {
  Param w;  // (out_c, in_c, k, k)
  Param b;  // (out_c)
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, long in_c, long out_c, int k, int stride,
              int pad, Rng& rng);

  Var apply(Tape& tape, Var x) const;
  void collect(std::vector<Param*>& out);
};

// Cosine annealing from lr0 at epoch 0 down to min_lr at epoch t_max.
double cosine_lr(double lr0, double min_lr, int epoch, int t_max);

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_grad_norm(const std::vector<Param*>& params, double max_norm);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(double lr);
  void zero_grad();
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace nightcast
