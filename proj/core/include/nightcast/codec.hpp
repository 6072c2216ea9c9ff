#pragma once

#include <vector>

#include "nightcast/nn.hpp"

namespace nightcast {

// Contracting path: depth stages of conv3x3+relu+maxpool with channel
// doubling, a bottleneck conv, then a linear projection to the embedding.
// Expanding path mirrors it with nearest-neighbour upsampling. depth 0 is a
// pure flatten+linear pair.
struct CodecConfig {
  int depth = 4;
  long base_channels = 32;
  long embedding_size = 256;  // P
  long input_h = 128;
  long input_w = 128;
  long in_channels = 1;
  bool skip_connections = true;

  void validate() const;
  long stage_channels(int stage) const { return base_channels << stage; }
  long bottleneck_channels() const {
    return depth == 0 ? in_channels : (base_channels << depth);
  }
  long bottleneck_h() const { return input_h >> depth; }
  long bottleneck_w() const { return input_w >> depth; }
  long flat_size() const {
    return bottleneck_channels() * bottleneck_h() * bottleneck_w();
  }
};

enum class CodecPart { Encoder, Decoder, Both };

class Codec {
 public:
  Codec() = default;
  Codec(const CodecConfig& cfg, Rng& rng);

  // g(.): (N, C, H, W) normalized images -> (N, P)
  Var encode(Tape& tape, Var images) const;
  // u(.): (N, P) -> (N, C, H, W) in [0, 1]. The forecasting path has no
  // same-timestep contracting features, so skip channels are fed zeros.
  Var decode(Tape& tape, Var embeddings) const;
  // Pretraining mode: encode + decode with live skip connections.
  Var autoencode(Tape& tape, Var images) const;

  // Chunked no-grad convenience wrappers.
  Tensor encode_batch(const Tensor& images, long chunk = 16) const;
  Tensor decode_batch(const Tensor& embeddings, long chunk = 4) const;

  long parameter_count() const;
  static long parameter_count(const CodecConfig& cfg, CodecPart part);

  void collect(std::vector<Param*>& out);
  const CodecConfig& config() const { return cfg_; }

 private:
  Var encode_impl(Tape& tape, Var x, std::vector<Var>* skips) const;
  Var decode_impl(Tape& tape, Var emb, const std::vector<Var>* skips) const;
  void check_images(const Shape& s) const;

  CodecConfig cfg_;
  std::vector<Conv2dLayer> enc_convs_;
  Conv2dLayer bottleneck_;
  LinearLayer to_embedding_;
  LinearLayer from_embedding_;
  std::vector<Conv2dLayer> dec_convs_;  // index = stage, applied high->low
  Conv2dLayer out_conv_;
};

}  // namespace nightcast
