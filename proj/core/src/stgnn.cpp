#include "nightcast/stgnn.hpp"

#include <cmath>

namespace nightcast {

void StgnnConfig::validate() const {
  if (layers < 1) throw ValidationError("stgnn: layers must be >= 1");
  if (static_cast<int>(dilations.size()) != layers) {
    throw ConfigError("stgnn: dilation schedule has " +
                      std::to_string(dilations.size()) + " entries for " +
                      std::to_string(layers) + " layers");
  }
  for (int d : dilations) {
    if (d < 1) throw ConfigError("stgnn: dilations must be >= 1");
  }
  if (residual_channels < 1 || skip_channels < 1) {
    throw ValidationError("stgnn: channel widths must be >= 1");
  }
  if (diffusion_steps < 0) {
    throw ValidationError("stgnn: diffusion_steps must be >= 0");
  }
  if (node_embedding_dim < 1) {
    throw ValidationError("stgnn: node_embedding_dim must be >= 1");
  }
  if (horizon < 1) throw ValidationError("stgnn: horizon must be >= 1");
  if (input_width < 1 || output_width < 1) {
    throw ValidationError("stgnn: input/output widths must be >= 1");
  }
  if (!use_static_supports && !use_adaptive && diffusion_steps > 0) {
    throw ConfigError("stgnn: no supports configured but diffusion_steps > 0");
  }
}

Stgnn::Stgnn(const StgnnConfig& cfg, long num_nodes,
             std::vector<Tensor> static_supports, Rng& rng)
    : node_embed_src("stgnn.node_embed_src", Tensor({num_nodes, cfg.node_embedding_dim})),
      node_embed_dst("stgnn.node_embed_dst", Tensor({num_nodes, cfg.node_embedding_dim})),
      cfg_(cfg),
      num_nodes_(num_nodes),
      static_supports_(std::move(static_supports)) {
  cfg.validate();
  if (num_nodes < 1) throw ValidationError("stgnn: need at least one node");
  if (!cfg.use_static_supports) static_supports_.clear();
  for (const Tensor& s : static_supports_) {
    if (s.ndim() != 2 || s.dim(0) != num_nodes || s.dim(1) != num_nodes) {
      throw ShapeError("stgnn: support must be (V, V) = (" +
                       std::to_string(num_nodes) + ", " +
                       std::to_string(num_nodes) + "), got " +
                       shape_str(s.shape()));
    }
  }
  init_uniform(node_embed_src.value, cfg.node_embedding_dim, rng);
  init_uniform(node_embed_dst.value, cfg.node_embedding_dim, rng);

  const long C = cfg.residual_channels;
  const long n_supports =
      static_cast<long>(static_supports_.size()) + (cfg.use_adaptive ? 1 : 0);
  const long diff_in = (1 + n_supports * cfg.diffusion_steps) * C;

  start_ = LinearLayer("stgnn.start", cfg.input_width, C, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "stgnn.layer" + std::to_string(l);
    Layer layer;
    layer.filter = LinearLayer(base + ".filter", 2 * C, C, rng);
    layer.gate = LinearLayer(base + ".gate", 2 * C, C, rng);
    layer.skip = LinearLayer(base + ".skip", C, cfg.skip_channels, rng);
    layer.diffusion = LinearLayer(base + ".diffusion", diff_in, C, rng);
    layers_.push_back(std::move(layer));
  }
  head_hidden_ = LinearLayer("stgnn.head_hidden", cfg.skip_channels,
                             2 * cfg.skip_channels, rng);
  head_out_ = LinearLayer("stgnn.head_out", 2 * cfg.skip_channels,
                          cfg.horizon * cfg.output_width, rng);
}

Var Stgnn::adaptive_adjacency(Tape& tape) const {
  if (!node_embed_src.value.all_finite() || !node_embed_dst.value.all_finite()) {
    throw NumericError("adaptive adjacency: node embeddings contain non-finite values");
  }
  Var e1 = tape.param(const_cast<Param&>(node_embed_src));
  Var e2t = tape.transpose2d(tape.param(const_cast<Param&>(node_embed_dst)));
  return tape.row_softmax(tape.relu(tape.matmul(e1, e2t)));
}

AdjacencyMatrix Stgnn::adaptive_snapshot(std::vector<std::string> node_order) const {
  Tape tape(/*grad_enabled=*/false);
  AdjacencyMatrix out;
  out.weights = adaptive_adjacency(tape).value().clone();
  out.node_order = std::move(node_order);
  out.kind = AdjacencyKind::AdaptiveSnapshot;
  return out;
}

// Apply a linear layer over the trailing channel axis of (B, V, L, C).
namespace {

Var channel_linear(Tape& tape, const LinearLayer& lin, Var x) {
  const Shape s = x.shape();
  const long rows = s[0] * s[1] * s[2];
  Var flat = tape.reshape(x, {rows, s[3]});
  Var y = lin.apply(tape, flat);
  return tape.reshape(y, {s[0], s[1], s[2], y.dim(1)});
}

}  // namespace

Var Stgnn::graph_mix(Tape& tape, Var support, Var x) const {
  const Shape s = x.shape();  // (B, V, L, C)
  Var perm = tape.permute(x, {1, 0, 2, 3});               // (V, B, L, C)
  Var flat = tape.reshape(perm, {s[1], s[0] * s[2] * s[3]});
  Var mixed = tape.matmul(support, flat);
  Var back = tape.reshape(mixed, {s[1], s[0], s[2], s[3]});
  return tape.permute(back, {1, 0, 2, 3});
}

std::vector<Var> Stgnn::support_vars(Tape& tape) const {
  std::vector<Var> supports;
  for (const Tensor& s : static_supports_) {
    supports.push_back(tape.constant(s));
  }
  if (cfg_.use_adaptive) supports.push_back(adaptive_adjacency(tape));
  return supports;
}

Var Stgnn::diffusion_terms(Tape& tape, Var x,
                           const std::vector<Var>& supports) const {
  std::vector<Var> terms = {x};
  for (Var s : supports) {
    Var cur = x;
    for (int k = 0; k < cfg_.diffusion_steps; ++k) {
      cur = graph_mix(tape, s, cur);
      terms.push_back(cur);
    }
  }
  return terms.size() == 1 ? terms[0] : tape.concat(terms, 3);
}

Var Stgnn::forward(Tape& tape, Var z) const {
  const Shape s = z.shape();
  if (s.size() != 4) {
    throw ShapeError("stgnn: expected (B, V, S, Z), got " + shape_str(s));
  }
  if (s[1] != num_nodes_) {
    throw ShapeError("stgnn: expected " + std::to_string(num_nodes_) +
                     " nodes, got " + std::to_string(s[1]));
  }
  if (s[3] != cfg_.input_width) {
    throw ShapeError("stgnn: expected input width " +
                     std::to_string(cfg_.input_width) + ", got " +
                     std::to_string(s[3]));
  }
  const long B = s[0], V = s[1];

  // left-pad to the receptive field
  const long rf = cfg_.receptive_field();
  if (s[2] < rf) {
    Var pad = tape.constant(Tensor({B, V, rf - s[2], s[3]}));
    z = tape.concat({pad, z}, 2);
  }

  Var x = channel_linear(tape, start_, z);  // (B, V, L, C)
  const std::vector<Var> supports = support_vars(tape);

  Var skip_sum;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const long d = cfg_.dilations[l];
    const long len = x.dim(2) - d;
    if (len < 1) {
      throw ShapeError("stgnn: input too short for dilation schedule");
    }
    Var left = tape.slice(x, 2, 0, len);
    Var right = tape.slice(x, 2, d, len);
    Var pair = tape.concat({left, right}, 3);  // (B, V, len, 2C)
    Var filt = tape.tanh_fn(channel_linear(tape, layer.filter, pair));
    Var gate = tape.sigmoid(channel_linear(tape, layer.gate, pair));
    Var gated = tape.mul(filt, gate);

    Var last = tape.slice(gated, 2, len - 1, 1);  // (B, V, 1, C)
    Var skip = channel_linear(tape, layer.skip, last);
    skip_sum = skip_sum.defined() ? tape.add(skip_sum, skip) : skip;

    Var mixed = diffusion_terms(tape, gated, supports);
    Var conv = channel_linear(tape, layer.diffusion, mixed);
    x = tape.add(conv, tape.slice(x, 2, d, len));  // residual over the tail
  }

  Var h = tape.relu(skip_sum);                       // (B, V, 1, skip)
  h = tape.relu(channel_linear(tape, head_hidden_, h));
  h = channel_linear(tape, head_out_, h);            // (B, V, 1, T*P)
  return tape.reshape(h, {B, V, cfg_.horizon, cfg_.output_width});
}

Var Stgnn::forward_single(Tape& tape, Var z) const {
  const Shape s = z.shape();
  if (s.size() != 3) {
    throw ShapeError("stgnn: expected (V, S, Z), got " + shape_str(s));
  }
  Var batched = tape.reshape(z, {1, s[0], s[1], s[2]});
  Var out = forward(tape, batched);
  return tape.reshape(out, {s[0], cfg_.horizon, cfg_.output_width});
}

void Stgnn::collect(std::vector<Param*>& out) {
  if (cfg_.use_adaptive) {
    out.push_back(&node_embed_src);
    out.push_back(&node_embed_dst);
  }
  start_.collect(out);
  for (Layer& l : layers_) {
    l.filter.collect(out);
    l.gate.collect(out);
    l.skip.collect(out);
    l.diffusion.collect(out);
  }
  head_hidden_.collect(out);
  head_out_.collect(out);
}

Tensor diffusion_conv(const Tensor& x, const std::vector<Tensor>& supports,
                      int steps, const Tensor& weights) {
  if (x.ndim() != 2) {
    throw ShapeError("diffusion_conv: expected node features (V, F), got " +
                     shape_str(x.shape()));
  }
  if (steps < 0) throw ConfigError("diffusion_conv: steps must be >= 0");
  const long V = x.dim(0), F = x.dim(1);
  const long expected_in = (1 + static_cast<long>(supports.size()) * steps) * F;
  if (weights.ndim() != 2 || weights.dim(0) != expected_in) {
    throw ConfigError("diffusion_conv: weights must be (" +
                      std::to_string(expected_in) + ", F_out) for " +
                      std::to_string(supports.size()) + " supports and " +
                      std::to_string(steps) + " steps, got " +
                      shape_str(weights.shape()));
  }
  Tape tape(/*grad_enabled=*/false);
  Var xv = tape.reshape(tape.constant(x), {1, V, 1, F});
  std::vector<Var> terms = {xv};
  for (const Tensor& s : supports) {
    if (s.ndim() != 2 || s.dim(0) != V || s.dim(1) != V) {
      throw ShapeError("diffusion_conv: support must be (V, V)");
    }
    Var sv = tape.constant(s);
    Var cur = xv;
    for (int k = 0; k < steps; ++k) {
      Var perm = tape.permute(cur, {1, 0, 2, 3});
      Var flat = tape.reshape(perm, {V, F});
      Var mixed = tape.matmul(sv, flat);
      cur = tape.permute(tape.reshape(mixed, {V, 1, 1, F}), {1, 0, 2, 3});
      terms.push_back(cur);
    }
  }
  Var cat = terms.size() == 1 ? terms[0] : tape.concat(terms, 3);
  Var flat = tape.reshape(cat, {V, expected_in});
  Var out = tape.matmul(flat, tape.constant(weights));
  return out.value().clone();
}

}  // namespace nightcast
