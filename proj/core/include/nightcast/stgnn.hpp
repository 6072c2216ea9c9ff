#pragma once

#include <vector>

#include "nightcast/graph.hpp"
#include "nightcast/nn.hpp"

namespace nightcast {

// Gated dilated temporal convolutions interleaved with diffusion graph
// convolutions, a learned adaptive adjacency, and a single-pass T-step head.
struct StgnnConfig {
  int layers = 8;
  std::vector<int> dilations = {1, 2, 1, 2, 1, 2, 1, 2};
  long residual_channels = 32;
  long skip_channels = 128;
  int diffusion_steps = 2;
  long node_embedding_dim = 10;  // d
  long horizon = 1;              // T
  long input_width = 320;        // Z
  long output_width = 256;       // P
  bool use_static_supports = true;
  bool use_adaptive = true;

  void validate() const;
  // Kernel-2 dilated stack: 1 + sum of dilations.
  long receptive_field() const {
    long rf = 1;
    for (int d : dilations) rf += d;
    return rf;
  }
};

class Stgnn {
 public:
  Stgnn() = default;
  Stgnn(const StgnnConfig& cfg, long num_nodes,
        std::vector<Tensor> static_supports, Rng& rng);

  // h(.): (B, V, S, Z) -> (B, V, T, P). Inputs shorter than the receptive
  // field are zero-padded on the left, which biases early-window predictions.
  Var forward(Tape& tape, Var z) const;
  // Single window: (V, S, Z) -> (V, T, P)
  Var forward_single(Tape& tape, Var z) const;

  // A = row-softmax(relu(E1 E2^T)); rows sum to 1, entries in (0, 1].
  Var adaptive_adjacency(Tape& tape) const;
  AdjacencyMatrix adaptive_snapshot(std::vector<std::string> node_order) const;

  void collect(std::vector<Param*>& out);
  const StgnnConfig& config() const { return cfg_; }
  long num_nodes() const { return num_nodes_; }
  const std::vector<Tensor>& static_supports() const { return static_supports_; }

  Param node_embed_src;  // E1 (V, d)
  Param node_embed_dst;  // E2 (V, d)

 private:
  struct Layer {
    LinearLayer filter;     // 2C -> C, kernel-2 temporal conv (tanh branch)
    LinearLayer gate;       // 2C -> C (sigmoid branch)
    LinearLayer skip;       // C -> skip_channels
    LinearLayer diffusion;  // (1 + n_supports*K) * C -> C
  };

  // Left-multiplies node axis: (B, V, L, C) by support (V, V).
  Var graph_mix(Tape& tape, Var support, Var x) const;
  std::vector<Var> support_vars(Tape& tape) const;
  Var diffusion_terms(Tape& tape, Var x, const std::vector<Var>& supports) const;

  StgnnConfig cfg_;
  long num_nodes_ = 0;
  std::vector<Tensor> static_supports_;
  LinearLayer start_;
  std::vector<Layer> layers_;
  LinearLayer head_hidden_;
  LinearLayer head_out_;
};

// One diffusion graph convolution on plain node features: sums support powers
// P_s^k x (k = 1..steps, plus the k = 0 identity term once) through a single
// stacked weight matrix of shape ((1 + n_supports*steps) * F, F_out).
Tensor diffusion_conv(const Tensor& x, const std::vector<Tensor>& supports,
                      int steps, const Tensor& weights);

}  // namespace nightcast
