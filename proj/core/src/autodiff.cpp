#include "nightcast/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace nightcast {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap mat(const Tensor& t, long rows, long cols) {
  return ConstMatMap(t.data(), rows, cols);
}

MatMap mat(Tensor& t, long rows, long cols) {
  return MatMap(t.data(), rows, cols);
}

// Decompose shape around an axis: product of dims before it, the axis dim,
// product of dims after it.
void axis_split(const Shape& s, int axis, long& outer, long& mid, long& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  mid = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) {
    inner *= s[i];
  }
}

// im2col for 3x3-style kernels, one image, NCHW slice -> (Ho*Wo, C*kh*kw).
void im2col(const double* img, long C, long H, long W, int kh, int kw,
            int stride, int pad, long Ho, long Wo, double* col) {
  for (long ho = 0; ho < Ho; ++ho) {
    for (long wo = 0; wo < Wo; ++wo) {
      double* row = col + (ho * Wo + wo) * C * kh * kw;
      const long hi0 = ho * stride - pad;
      const long wi0 = wo * stride - pad;
      long k = 0;
      for (long c = 0; c < C; ++c) {
        const double* plane = img + c * H * W;
        for (int ki = 0; ki < kh; ++ki) {
          const long hi = hi0 + ki;
          for (int kj = 0; kj < kw; ++kj, ++k) {
            const long wi = wi0 + kj;
            row[k] = (hi >= 0 && hi < H && wi >= 0 && wi < W)
                         ? plane[hi * W + wi]
                         : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a (Ho*Wo, C*kh*kw) gradient back into one image.
void col2im_add(const double* col, long C, long H, long W, int kh, int kw,
                int stride, int pad, long Ho, long Wo, double* img) {
  for (long ho = 0; ho < Ho; ++ho) {
    for (long wo = 0; wo < Wo; ++wo) {
      const double* row = col + (ho * Wo + wo) * C * kh * kw;
      const long hi0 = ho * stride - pad;
      const long wi0 = wo * stride - pad;
      long k = 0;
      for (long c = 0; c < C; ++c) {
        double* plane = img + c * H * W;
        for (int ki = 0; ki < kh; ++ki) {
          const long hi = hi0 + ki;
          for (int kj = 0; kj < kw; ++kj, ++k) {
            const long wi = wi0 + kj;
            if (hi >= 0 && hi < H && wi >= 0 && wi < W) {
              plane[hi * W + wi] += row[k];
            }
          }
        }
      }
    }
  }
}

}  // namespace

const Tensor& Var::value() const { return tape_->node(*this).value; }
const Shape& Var::shape() const { return tape_->node(*this).value.shape(); }

void Tape::check_same_tape(Var v) const {
  if (v.tape_ != this) throw ShapeError("Var belongs to a different tape");
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

Var Tape::make_node(Tensor value, const std::vector<Var>& parents) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  if (grad_enabled_) {
    for (Var p : parents) {
      check_same_tape(p);
      if (node(p).needs_grad) {
        n->needs_grad = true;
        break;
      }
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor v) { return make_node(std::move(v), {}); }

Var Tape::param(Param& p) {
  Var v = make_node(p.value, {});
  if (grad_enabled_) {
    Node& n = node(v);
    n.needs_grad = true;
    n.link = &p;
  }
  return v;
}

void Tape::backward(Var loss, double seed) {
  check_same_tape(loss);
  if (!grad_enabled_) throw NumericError("backward() on a no-grad tape");
  if (val(loss).numel() != 1) {
    throw ShapeError("backward() expects a scalar loss, got " +
                     shape_str(val(loss).shape()));
  }
  grad_buf(loss)[0] += seed;
  for (int i = loss.id_; i >= 0; --i) {
    Node& n = *nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad && n.grad.defined() && n.back) n.back();
  }
  for (auto& np : nodes_) {
    if (np->link && np->grad.defined()) np->link->grad.add_(np->grad);
  }
}

const Tensor& Tape::grad(Var v) const {
  check_same_tape(v);
  const Node& n = node(v);
  if (!n.grad.defined()) {
    throw NumericError("no gradient recorded for this Var");
  }
  return n.grad;
}

// ---------------------------------------------------------------------------
// elementwise

Var Tape::add(Var a, Var b) {
  if (!val(a).same_shape(val(b))) {
    throw ShapeError("add: " + shape_str(val(a).shape()) + " vs " +
                     shape_str(val(b).shape()));
  }
  Tensor out = val(a).clone();
  out.add_(val(b));
  Var y = make_node(std::move(out), {a, b});
  if (node(y).needs_grad) {
    node(y).back = [this, a, b, y]() {
      const Tensor& g = node(y).grad;
      if (node(a).needs_grad) grad_buf(a).add_(g);
      if (node(b).needs_grad) grad_buf(b).add_(g);
    };
  }
  return y;
}

Var Tape::sub(Var a, Var b) {
  if (!val(a).same_shape(val(b))) {
    throw ShapeError("sub: " + shape_str(val(a).shape()) + " vs " +
                     shape_str(val(b).shape()));
  }
  Tensor out = val(a).clone();
  {
    double* d = out.data();
    const double* s = val(b).data();
    for (long i = 0; i < out.numel(); ++i) d[i] -= s[i];
  }
  Var y = make_node(std::move(out), {a, b});
  if (node(y).needs_grad) {
    node(y).back = [this, a, b, y]() {
      const Tensor& g = node(y).grad;
      if (node(a).needs_grad) grad_buf(a).add_(g);
      if (node(b).needs_grad) {
        Tensor& gb = grad_buf(b);
        double* d = gb.data();
        const double* s = g.data();
        for (long i = 0; i < gb.numel(); ++i) d[i] -= s[i];
      }
    };
  }
  return y;
}

Var Tape::mul(Var a, Var b) {
  if (!val(a).same_shape(val(b))) {
    throw ShapeError("mul: " + shape_str(val(a).shape()) + " vs " +
                     shape_str(val(b).shape()));
  }
  Tensor out(val(a).shape());
  {
    double* d = out.data();
    const double* pa = val(a).data();
    const double* pb = val(b).data();
    for (long i = 0; i < out.numel(); ++i) d[i] = pa[i] * pb[i];
  }
  Var y = make_node(std::move(out), {a, b});
  if (node(y).needs_grad) {
    node(y).back = [this, a, b, y]() {
      const Tensor& g = node(y).grad;
      if (node(a).needs_grad) {
        Tensor& ga = grad_buf(a);
        const double* pb = val(b).data();
        double* d = ga.data();
        const double* s = g.data();
        for (long i = 0; i < ga.numel(); ++i) d[i] += s[i] * pb[i];
      }
      if (node(b).needs_grad) {
        Tensor& gb = grad_buf(b);
        const double* pa = val(a).data();
        double* d = gb.data();
        const double* s = g.data();
        for (long i = 0; i < gb.numel(); ++i) d[i] += s[i] * pa[i];
      }
    };
  }
  return y;
}

Var Tape::scale(Var a, double s) {
  Tensor out = val(a).clone();
  out.scale_(s);
  Var y = make_node(std::move(out), {a});
  if (node(y).needs_grad) {
    node(y).back = [this, a, y, s]() {
      Tensor& ga = grad_buf(a);
      const double* g = node(y).grad.data();
      double* d = ga.data();
      for (long i = 0; i < ga.numel(); ++i) d[i] += s * g[i];
    };
  }
  return y;
}

Var Tape::add_scalar(Var a, double s) {
  Tensor out = val(a).clone();
  {
    double* d = out.data();
    for (long i = 0; i < out.numel(); ++i) d[i] += s;
  }
  Var y = make_node(std::move(out), {a});
  if (node(y).needs_grad) {
    node(y).back = [this, a, y]() { grad_buf(a).add_(node(y).grad); };
  }
  return y;
}

Var Tape::relu(Var x) {
  Tensor out = val(x).clone();
  {
    double* d = out.data();
    for (long i = 0; i < out.numel(); ++i) d[i] = d[i] > 0.0 ? d[i] : 0.0;
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y]() {
      Tensor& gx = grad_buf(x);
      const double* xv = val(x).data();
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long i = 0; i < gx.numel(); ++i) {
        if (xv[i] > 0.0) d[i] += g[i];
      }
    };
  }
  return y;
}

Var Tape::sigmoid(Var x) {
  Tensor out(val(x).shape());
  {
    const double* s = val(x).data();
    double* d = out.data();
    for (long i = 0; i < out.numel(); ++i) d[i] = 1.0 / (1.0 + std::exp(-s[i]));
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y]() {
      Tensor& gx = grad_buf(x);
      const double* yv = val(y).data();
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long i = 0; i < gx.numel(); ++i) d[i] += g[i] * yv[i] * (1.0 - yv[i]);
    };
  }
  return y;
}

Var Tape::tanh_fn(Var x) {
  Tensor out(val(x).shape());
  {
    const double* s = val(x).data();
    double* d = out.data();
    for (long i = 0; i < out.numel(); ++i) d[i] = std::tanh(s[i]);
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y]() {
      Tensor& gx = grad_buf(x);
      const double* yv = val(y).data();
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long i = 0; i < gx.numel(); ++i) d[i] += g[i] * (1.0 - yv[i] * yv[i]);
    };
  }
  return y;
}

Var Tape::sin_fn(Var x) {
  Tensor out(val(x).shape());
  {
    const double* s = val(x).data();
    double* d = out.data();
    for (long i = 0; i < out.numel(); ++i) d[i] = std::sin(s[i]);
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y]() {
      Tensor& gx = grad_buf(x);
      const double* xv = val(x).data();
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long i = 0; i < gx.numel(); ++i) d[i] += g[i] * std::cos(xv[i]);
    };
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear algebra

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  const long N = av.dim(0), K = av.dim(1), M = bv.dim(1);
  Tensor out({N, M});
  mat(out, N, M).noalias() = mat(av, N, K) * mat(bv, K, M);
  Var y = make_node(std::move(out), {a, b});
  if (node(y).needs_grad) {
    node(y).back = [this, a, b, y, N, K, M]() {
      const Tensor& g = node(y).grad;
      if (node(a).needs_grad) {
        mat(grad_buf(a), N, K).noalias() +=
            mat(g, N, M) * mat(val(b), K, M).transpose();
      }
      if (node(b).needs_grad) {
        mat(grad_buf(b), K, M).noalias() +=
            mat(val(a), N, K).transpose() * mat(g, N, M);
      }
    };
  }
  return y;
}

Var Tape::transpose2d(Var a) {
  const Tensor& av = val(a);
  if (av.ndim() != 2) {
    throw ShapeError("transpose2d expects 2-d, got " + shape_str(av.shape()));
  }
  const long N = av.dim(0), M = av.dim(1);
  Tensor out({M, N});
  mat(out, M, N).noalias() = mat(av, N, M).transpose();
  Var y = make_node(std::move(out), {a});
  if (node(y).needs_grad) {
    node(y).back = [this, a, y, N, M]() {
      mat(grad_buf(a), N, M).noalias() += mat(node(y).grad, M, N).transpose();
    };
  }
  return y;
}

Var Tape::add_row(Var x, Var b) {
  const Tensor& xv = val(x);
  const Tensor& bv = val(b);
  if (xv.ndim() != 2 || bv.ndim() != 1 || xv.dim(1) != bv.dim(0)) {
    throw ShapeError("add_row: " + shape_str(xv.shape()) + " + " +
                     shape_str(bv.shape()));
  }
  const long N = xv.dim(0), M = xv.dim(1);
  Tensor out = xv.clone();
  {
    double* d = out.data();
    const double* bb = bv.data();
    for (long n = 0; n < N; ++n) {
      for (long m = 0; m < M; ++m) d[n * M + m] += bb[m];
    }
  }
  Var y = make_node(std::move(out), {x, b});
  if (node(y).needs_grad) {
    node(y).back = [this, x, b, y, N, M]() {
      const Tensor& g = node(y).grad;
      if (node(x).needs_grad) grad_buf(x).add_(g);
      if (node(b).needs_grad) {
        Tensor& gb = grad_buf(b);
        const double* gg = g.data();
        double* d = gb.data();
        for (long n = 0; n < N; ++n) {
          for (long m = 0; m < M; ++m) d[m] += gg[n * M + m];
        }
      }
    };
  }
  return y;
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1)) {
    throw ShapeError("linear: x " + shape_str(xv.shape()) + " w " +
                     shape_str(wv.shape()));
  }
  const long N = xv.dim(0), K = xv.dim(1), M = wv.dim(0);
  Tensor out({N, M});
  mat(out, N, M).noalias() = mat(xv, N, K) * mat(wv, M, K).transpose();
  if (b.defined()) {
    const Tensor& bv = val(b);
    if (bv.ndim() != 1 || bv.dim(0) != M) {
      throw ShapeError("linear bias: " + shape_str(bv.shape()));
    }
    double* d = out.data();
    const double* bb = bv.data();
    for (long n = 0; n < N; ++n) {
      for (long m = 0; m < M; ++m) d[n * M + m] += bb[m];
    }
  }
  std::vector<Var> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Var y = make_node(std::move(out), parents);
  if (node(y).needs_grad) {
    node(y).back = [this, x, w, b, y, N, K, M]() {
      const Tensor& g = node(y).grad;
      if (node(x).needs_grad) {
        mat(grad_buf(x), N, K).noalias() += mat(g, N, M) * mat(val(w), M, K);
      }
      if (node(w).needs_grad) {
        mat(grad_buf(w), M, K).noalias() +=
            mat(g, N, M).transpose() * mat(val(x), N, K);
      }
      if (b.defined() && node(b).needs_grad) {
        Tensor& gb = grad_buf(b);
        const double* gg = g.data();
        double* d = gb.data();
        for (long n = 0; n < N; ++n) {
          for (long m = 0; m < M; ++m) d[m] += gg[n * M + m];
        }
      }
    };
  }
  return y;
}

Var Tape::row_softmax(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 2) {
    throw ShapeError("row_softmax expects 2-d, got " + shape_str(xv.shape()));
  }
  const long N = xv.dim(0), M = xv.dim(1);
  Tensor out(xv.shape());
  {
    const double* s = xv.data();
    double* d = out.data();
    for (long n = 0; n < N; ++n) {
      const double* row = s + n * M;
      double* orow = d + n * M;
      double mx = row[0];
      for (long m = 1; m < M; ++m) mx = std::max(mx, row[m]);
      double sum = 0.0;
      for (long m = 0; m < M; ++m) {
        orow[m] = std::exp(row[m] - mx);
        sum += orow[m];
      }
      for (long m = 0; m < M; ++m) orow[m] /= sum;
    }
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, N, M]() {
      Tensor& gx = grad_buf(x);
      const double* yv = val(y).data();
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long n = 0; n < N; ++n) {
        const double* yrow = yv + n * M;
        const double* grow = g + n * M;
        double dot = 0.0;
        for (long m = 0; m < M; ++m) dot += grow[m] * yrow[m];
        for (long m = 0; m < M; ++m) {
          d[n * M + m] += yrow[m] * (grow[m] - dot);
        }
      }
    };
  }
  return y;
}

// ---------------------------------------------------------------------------
// image ops

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  if (xv.ndim() != 4 || wv.ndim() != 4) {
    throw ShapeError("conv2d: x " + shape_str(xv.shape()) + " w " +
                     shape_str(wv.shape()));
  }
  const long N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const long F = wv.dim(0);
  const int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
  if (wv.dim(1) != C) {
    throw ShapeError("conv2d: expected " + std::to_string(wv.dim(1)) +
                     " input channels, got " + std::to_string(C));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const long Ho = (H + 2 * pad - kh) / stride + 1;
  const long Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho < 1 || Wo < 1) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const long ckk = C * kh * kw;

  Tensor out({N, F, Ho, Wo});
  {
    std::vector<double> col(static_cast<std::size_t>(Ho * Wo * ckk));
    ConstMatMap wm(wv.data(), F, ckk);
    for (long n = 0; n < N; ++n) {
      im2col(xv.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
             col.data());
      ConstMatMap cm(col.data(), Ho * Wo, ckk);
      MatMap om(out.data() + n * F * Ho * Wo, F, Ho * Wo);
      om.noalias() = wm * cm.transpose();
    }
    if (b.defined()) {
      const Tensor& bv = val(b);
      if (bv.ndim() != 1 || bv.dim(0) != F) {
        throw ShapeError("conv2d bias: " + shape_str(bv.shape()));
      }
      double* d = out.data();
      const double* bb = bv.data();
      for (long n = 0; n < N; ++n) {
        for (long f = 0; f < F; ++f) {
          const double bf = bb[f];
          double* plane = d + (n * F + f) * Ho * Wo;
          for (long i = 0; i < Ho * Wo; ++i) plane[i] += bf;
        }
      }
    }
  }

  std::vector<Var> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Var y = make_node(std::move(out), parents);
  if (node(y).needs_grad) {
    node(y).back = [this, x, w, b, y, N, C, H, W, F, kh, kw, stride, pad, Ho,
                    Wo, ckk]() {
      const Tensor& g = node(y).grad;
      const Tensor& xv2 = val(x);
      const Tensor& wv2 = val(w);
      const bool need_x = node(x).needs_grad;
      const bool need_w = node(w).needs_grad;
      const bool need_b = b.defined() && node(b).needs_grad;

      std::vector<double> col(static_cast<std::size_t>(Ho * Wo * ckk));
      std::vector<double> dcol(need_x ? static_cast<std::size_t>(Ho * Wo * ckk)
                                      : 0);
      ConstMatMap wm(wv2.data(), F, ckk);
      for (long n = 0; n < N; ++n) {
        ConstMatMap gm(g.data() + n * F * Ho * Wo, F, Ho * Wo);
        if (need_w || need_x) {
          im2col(xv2.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
                 Wo, col.data());
        }
        if (need_w) {
          ConstMatMap cm(col.data(), Ho * Wo, ckk);
          mat(grad_buf(w), F, ckk).noalias() += gm * cm;
        }
        if (need_x) {
          MatMap dcm(dcol.data(), Ho * Wo, ckk);
          dcm.noalias() = gm.transpose() * wm;
          col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                     grad_buf(x).data() + n * C * H * W);
        }
        if (need_b) {
          double* gb = grad_buf(b).data();
          const double* gg = g.data() + n * F * Ho * Wo;
          for (long f = 0; f < F; ++f) {
            double s = 0.0;
            const double* plane = gg + f * Ho * Wo;
            for (long i = 0; i < Ho * Wo; ++i) s += plane[i];
            gb[f] += s;
          }
        }
      }
    };
  }
  return y;
}

Var Tape::maxpool2(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 4) {
    throw ShapeError("maxpool2 expects NCHW, got " + shape_str(xv.shape()));
  }
  const long N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("maxpool2 requires even spatial dims, got " +
                     shape_str(xv.shape()));
  }
  const long Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<long>>(
      static_cast<std::size_t>(out.numel()));
  {
    const double* s = xv.data();
    double* d = out.data();
    long o = 0;
    for (long nc = 0; nc < N * C; ++nc) {
      const double* plane = s + nc * H * W;
      for (long ho = 0; ho < Ho; ++ho) {
        for (long wo = 0; wo < Wo; ++wo, ++o) {
          const long base = (2 * ho) * W + 2 * wo;
          long best = base;
          double bv = plane[base];
          const long cands[3] = {base + 1, base + W, base + W + 1};
          for (long cand : cands) {
            if (plane[cand] > bv) {
              bv = plane[cand];
              best = cand;
            }
          }
          d[o] = bv;
          (*argmax)[static_cast<std::size_t>(o)] = nc * H * W + best;
        }
      }
    }
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, argmax]() {
      Tensor& gx = grad_buf(x);
      const double* g = node(y).grad.data();
      double* d = gx.data();
      const long n = node(y).grad.numel();
      for (long i = 0; i < n; ++i) {
        d[(*argmax)[static_cast<std::size_t>(i)]] += g[i];
      }
    };
  }
  return y;
}

Var Tape::upsample2(Var x) {
  const Tensor& xv = val(x);
  if (xv.ndim() != 4) {
    throw ShapeError("upsample2 expects NCHW, got " + shape_str(xv.shape()));
  }
  const long N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  {
    const double* s = xv.data();
    double* d = out.data();
    for (long nc = 0; nc < N * C; ++nc) {
      const double* sp = s + nc * H * W;
      double* dp = d + nc * 4 * H * W;
      for (long h = 0; h < 2 * H; ++h) {
        const double* srow = sp + (h / 2) * W;
        double* drow = dp + h * 2 * W;
        for (long w = 0; w < 2 * W; ++w) drow[w] = srow[w / 2];
      }
    }
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, N, C, H, W]() {
      Tensor& gx = grad_buf(x);
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long nc = 0; nc < N * C; ++nc) {
        const double* gp = g + nc * 4 * H * W;
        double* dp = d + nc * H * W;
        for (long h = 0; h < 2 * H; ++h) {
          double* drow = dp + (h / 2) * W;
          const double* grow = gp + h * 2 * W;
          for (long w = 0; w < 2 * W; ++w) drow[w / 2] += grow[w];
        }
      }
    };
  }
  return y;
}

// ---------------------------------------------------------------------------
// structure

Var Tape::reshape(Var x, Shape shape) {
  Tensor out = val(x).reshaped(shape);  // aliases the buffer
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    Shape xshape = val(x).shape();
    node(y).back = [this, x, y, xshape]() {
      grad_buf(x).add_(node(y).grad.reshaped(xshape));
    };
  }
  return y;
}

namespace {

// Applies perm to data: out[i_perm(0), ..] = in[i0, ..].
Tensor permute_copy(const Tensor& in, const std::vector<int>& perm) {
  const int nd = in.ndim();
  Shape out_shape(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    out_shape[static_cast<std::size_t>(i)] = in.dim(perm[static_cast<std::size_t>(i)]);
  }
  Tensor out(out_shape);
  std::vector<long> in_strides(static_cast<std::size_t>(nd), 1);
  for (int i = nd - 2; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(i + 1)] * in.dim(i + 1);
  }
  std::vector<long> step(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    step[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  std::vector<long> idx(static_cast<std::size_t>(nd), 0);
  const double* s = in.data();
  double* d = out.data();
  const long total = in.numel();
  long in_off = 0;
  for (long o = 0; o < total; ++o) {
    d[o] = s[in_off];
    for (int i = nd - 1; i >= 0; --i) {
      auto ui = static_cast<std::size_t>(i);
      if (++idx[ui] < out_shape[ui]) {
        in_off += step[ui];
        break;
      }
      in_off -= step[ui] * (out_shape[ui] - 1);
      idx[ui] = 0;
    }
  }
  return out;
}

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return inv;
}

}  // namespace

Var Tape::permute(Var x, std::vector<int> perm) {
  const Tensor& xv = val(x);
  if (static_cast<int>(perm.size()) != xv.ndim()) {
    throw ShapeError("permute rank mismatch for " + shape_str(xv.shape()));
  }
  Tensor out = permute_copy(xv, perm);
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, perm]() {
      grad_buf(x).add_(permute_copy(node(y).grad, inverse_perm(perm)));
    };
  }
  return y;
}

Var Tape::slice(Var x, int axis, long start, long len) {
  const Tensor& xv = val(x);
  long outer, mid, inner;
  axis_split(xv.shape(), axis, outer, mid, inner);
  if (start < 0 || len < 0 || start + len > mid) {
    throw ShapeError("slice [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of range for axis " +
                     std::to_string(axis) + " of " + shape_str(xv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out(out_shape);
  {
    const double* s = xv.data();
    double* d = out.data();
    for (long o = 0; o < outer; ++o) {
      std::memcpy(d + o * len * inner, s + (o * mid + start) * inner,
                  static_cast<std::size_t>(len * inner) * sizeof(double));
    }
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, outer, mid, inner, start, len]() {
      Tensor& gx = grad_buf(x);
      const double* g = node(y).grad.data();
      double* d = gx.data();
      for (long o = 0; o < outer; ++o) {
        double* dst = d + (o * mid + start) * inner;
        const double* src = g + o * len * inner;
        for (long i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    };
  }
  return y;
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  long outer, mid0, inner;
  axis_split(val(xs[0]).shape(), axis, outer, mid0, inner);
  long mid_total = 0;
  for (Var v : xs) {
    const Shape& s = val(v).shape();
    Shape ref = val(xs[0]).shape();
    ref[static_cast<std::size_t>(axis)] = s[static_cast<std::size_t>(axis)];
    if (s != ref) {
      throw ShapeError("concat: incompatible " + shape_str(s) + " vs " +
                       shape_str(val(xs[0]).shape()));
    }
    mid_total += s[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = val(xs[0]).shape();
  out_shape[static_cast<std::size_t>(axis)] = mid_total;
  Tensor out(out_shape);
  {
    double* d = out.data();
    long off = 0;
    for (Var v : xs) {
      const Tensor& t = val(v);
      long mid = t.shape()[static_cast<std::size_t>(axis)];
      const double* s = t.data();
      for (long o = 0; o < outer; ++o) {
        std::memcpy(d + (o * mid_total + off) * inner, s + o * mid * inner,
                    static_cast<std::size_t>(mid * inner) * sizeof(double));
      }
      off += mid;
    }
  }
  Var y = make_node(std::move(out), xs);
  if (node(y).needs_grad) {
    std::vector<Var> parts = xs;
    node(y).back = [this, parts, y, outer, inner, mid_total]() {
      if (outer * inner == 0) return;
      const double* g = node(y).grad.data();
      long off = 0;
      for (Var v : parts) {
        const long mid = val(v).numel() / (outer * inner);
        if (node(v).needs_grad) {
          Tensor& gv = grad_buf(v);
          double* d = gv.data();
          for (long o = 0; o < outer; ++o) {
            const double* src = g + (o * mid_total + off) * inner;
            double* dst = d + o * mid * inner;
            for (long i = 0; i < mid * inner; ++i) dst[i] += src[i];
          }
        }
        off += mid;
      }
    };
  }
  return y;
}

Var Tape::tile_front(Var x, long n) {
  const Tensor& xv = val(x);
  Shape out_shape;
  out_shape.push_back(n);
  for (long d : xv.shape()) out_shape.push_back(d);
  Tensor out(out_shape);
  {
    const long sz = xv.numel();
    const double* s = xv.data();
    double* d = out.data();
    for (long i = 0; i < n; ++i) {
      std::memcpy(d + i * sz, s, static_cast<std::size_t>(sz) * sizeof(double));
    }
  }
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y, n]() {
      Tensor& gx = grad_buf(x);
      const double* g = node(y).grad.data();
      double* d = gx.data();
      const long sz = gx.numel();
      for (long i = 0; i < n; ++i) {
        const double* src = g + i * sz;
        for (long j = 0; j < sz; ++j) d[j] += src[j];
      }
    };
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions

Var Tape::sum_all(Var x) {
  Tensor out = Tensor::scalar(val(x).sum());
  Var y = make_node(std::move(out), {x});
  if (node(y).needs_grad) {
    node(y).back = [this, x, y]() {
      const double g = node(y).grad[0];
      Tensor& gx = grad_buf(x);
      double* d = gx.data();
      for (long i = 0; i < gx.numel(); ++i) d[i] += g;
    };
  }
  return y;
}

Var Tape::mse(Var pred, Var target) {
  const Tensor& pv = val(pred);
  const Tensor& tv = val(target);
  if (!pv.same_shape(tv)) {
    throw ShapeError("mse: " + shape_str(pv.shape()) + " vs " +
                     shape_str(tv.shape()));
  }
  const long n = pv.numel();
  if (n == 0) throw ValidationError("mse of empty tensors");
  double s = 0.0;
  {
    const double* p = pv.data();
    const double* t = tv.data();
    for (long i = 0; i < n; ++i) {
      const double d = p[i] - t[i];
      s += d * d;
    }
  }
  Var y = make_node(Tensor::scalar(s / static_cast<double>(n)), {pred, target});
  if (node(y).needs_grad) {
    node(y).back = [this, pred, target, y, n]() {
      const double g = node(y).grad[0] * 2.0 / static_cast<double>(n);
      const double* p = val(pred).data();
      const double* t = val(target).data();
      if (node(pred).needs_grad) {
        double* d = grad_buf(pred).data();
        for (long i = 0; i < n; ++i) d[i] += g * (p[i] - t[i]);
      }
      if (node(target).needs_grad) {
        double* d = grad_buf(target).data();
        for (long i = 0; i < n; ++i) d[i] -= g * (p[i] - t[i]);
      }
    };
  }
  return y;
}

Var Tape::add_many(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ShapeError("add_many of zero values");
  double s = 0.0;
  for (Var v : scalars) {
    if (val(v).numel() != 1) {
      throw ShapeError("add_many expects scalars, got " +
                       shape_str(val(v).shape()));
    }
    s += val(v)[0];
  }
  Var y = make_node(Tensor::scalar(s), scalars);
  if (node(y).needs_grad) {
    std::vector<Var> parts = scalars;
    node(y).back = [this, parts, y]() {
      const double g = node(y).grad[0];
      for (Var v : parts) {
        if (node(v).needs_grad) grad_buf(v)[0] += g;
      }
    };
  }
  return y;
}

}  // namespace nightcast
