#include "nightcast/nn.hpp"

namespace nightcast {

void init_uniform(Tensor& t, long fan_in, Rng& rng) {
  const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
  double* d = t.data();
  for (long i = 0; i < t.numel(); ++i) d[i] = rng.uniform(-bound, bound);
}

LinearLayer::LinearLayer(const std::string& name, long in, long out, Rng& rng)
    : w(name + ".w", Tensor({out, in})), b(name + ".b", Tensor({out})) {
  init_uniform(w.value, in, rng);
  init_uniform(b.value, in, rng);
}

Var LinearLayer::apply(Tape& tape, Var x) const {
  Var wv = tape.param(const_cast<Param&>(w));
  Var bv = tape.param(const_cast<Param&>(b));
  return tape.linear(x, wv, bv);
}

void LinearLayer::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Conv2dLayer::Conv2dLayer(const std::string& name, long in_c, long out_c, int k,
                         int stride_, int pad_, Rng& rng)
    : w(name + ".w", Tensor({out_c, in_c, k, k})),
      b(name + ".b", Tensor({out_c})),
      stride(stride_),
      pad(pad_) {
  const long fan_in = in_c * k * k;
  init_uniform(w.value, fan_in, rng);
  init_uniform(b.value, fan_in, rng);
}

Var Conv2dLayer::apply(Tape& tape, Var x) const {
  Var wv = tape.param(const_cast<Param&>(w));
  Var bv = tape.param(const_cast<Param&>(b));
  return tape.conv2d(x, wv, bv, stride, pad);
}

void Conv2dLayer::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

double cosine_lr(double lr0, double min_lr, int epoch, int t_max) {
  if (t_max <= 0) return lr0;
  const double frac = std::min(1.0, std::max(0.0, static_cast<double>(epoch) /
                                                      static_cast<double>(t_max)));
  return min_lr + 0.5 * (lr0 - min_lr) * (1.0 + std::cos(M_PI * frac));
}

double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) {
    const double* g = p->grad.data();
    for (long i = 0; i < p->grad.numel(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Param* p : params) p->grad.scale_(s);
  }
  return norm;
}

void AdamOptimizer::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params_) {
    if (!p->adam_m.defined()) {
      p->adam_m = Tensor::zeros(p->value.shape());
      p->adam_v = Tensor::zeros(p->value.shape());
    }
    double* v = p->value.data();
    const double* g = p->grad.data();
    double* m = p->adam_m.data();
    double* s = p->adam_v.data();
    const long n = p->value.numel();
    for (long i = 0; i < n; ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      s[i] = beta2_ * s[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double shat = s[i] / bc2;
      v[i] -= lr * mhat / (std::sqrt(shat) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

}  // namespace nightcast
