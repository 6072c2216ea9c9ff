#include "nightcast/codec.hpp"

#include <algorithm>
#include <functional>

namespace nightcast {

void CodecConfig::validate() const {
  if (depth < 0 || depth > 10) {
    throw ValidationError("codec depth must be in [0, 10]");
  }
  if (base_channels < 1 || embedding_size < 1 || in_channels < 1) {
    throw ValidationError("codec channel/embedding sizes must be >= 1");
  }
  const long div = 1L << depth;
  if (input_h % div != 0 || input_w % div != 0) {
    throw ValidationError("codec input resolution " + std::to_string(input_h) +
                          "x" + std::to_string(input_w) +
                          " is not divisible by 2^depth = " + std::to_string(div));
  }
  if (input_h < div || input_w < div) {
    throw ValidationError("codec input too small for depth");
  }
}

Codec::Codec(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  long in_c = cfg.in_channels;
  for (int s = 0; s < cfg.depth; ++s) {
    enc_convs_.emplace_back("codec.enc" + std::to_string(s), in_c,
                            cfg.stage_channels(s), 3, 1, 1, rng);
    in_c = cfg.stage_channels(s);
  }
  if (cfg.depth > 0) {
    bottleneck_ = Conv2dLayer("codec.bottleneck", in_c,
                              cfg.bottleneck_channels(), 3, 1, 1, rng);
  }
  to_embedding_ =
      LinearLayer("codec.to_embedding", cfg.flat_size(), cfg.embedding_size, rng);
  from_embedding_ =
      LinearLayer("codec.from_embedding", cfg.embedding_size, cfg.flat_size(), rng);
  for (int s = 0; s < cfg.depth; ++s) {
    const long up_c = cfg.stage_channels(s) * 2;  // == bottleneck at top stage
    const long skip_c = cfg.skip_connections ? cfg.stage_channels(s) : 0;
    dec_convs_.emplace_back("codec.dec" + std::to_string(s), up_c + skip_c,
                            cfg.stage_channels(s), 3, 1, 1, rng);
  }
  if (cfg.depth > 0) {
    out_conv_ = Conv2dLayer("codec.out", cfg.base_channels, cfg.in_channels, 3,
                            1, 1, rng);
  }
}

void Codec::check_images(const Shape& s) const {
  if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.input_h ||
      s[3] != cfg_.input_w) {
    throw ShapeError("codec: expected images (N, " +
                     std::to_string(cfg_.in_channels) + ", " +
                     std::to_string(cfg_.input_h) + ", " +
                     std::to_string(cfg_.input_w) + "), got " + shape_str(s));
  }
}

Var Codec::encode_impl(Tape& tape, Var x, std::vector<Var>* skips) const {
  check_images(x.shape());
  const long n = x.dim(0);
  for (int s = 0; s < cfg_.depth; ++s) {
    x = tape.relu(enc_convs_[static_cast<std::size_t>(s)].apply(tape, x));
    if (skips) skips->push_back(x);
    x = tape.maxpool2(x);
  }
  if (cfg_.depth > 0) {
    x = tape.relu(bottleneck_.apply(tape, x));
  }
  x = tape.reshape(x, {n, cfg_.flat_size()});
  return to_embedding_.apply(tape, x);
}

Var Codec::encode(Tape& tape, Var images) const {
  return encode_impl(tape, images, nullptr);
}

Var Codec::decode_impl(Tape& tape, Var emb,
                       const std::vector<Var>* skips) const {
  if (emb.shape().size() != 2 || emb.dim(1) != cfg_.embedding_size) {
    throw ShapeError("codec: expected embeddings (N, " +
                     std::to_string(cfg_.embedding_size) + "), got " +
                     shape_str(emb.shape()));
  }
  const long n = emb.dim(0);
  Var x = from_embedding_.apply(tape, emb);
  if (cfg_.depth == 0) {
    x = tape.sigmoid(x);
    return tape.reshape(x, {n, cfg_.in_channels, cfg_.input_h, cfg_.input_w});
  }
  x = tape.relu(x);
  x = tape.reshape(x, {n, cfg_.bottleneck_channels(), cfg_.bottleneck_h(),
                       cfg_.bottleneck_w()});
  for (int s = cfg_.depth - 1; s >= 0; --s) {
    x = tape.upsample2(x);
    if (cfg_.skip_connections) {
      Var skip;
      if (skips) {
        skip = (*skips)[static_cast<std::size_t>(s)];
      } else {
        skip = tape.constant(Tensor(
            {n, cfg_.stage_channels(s), x.dim(2), x.dim(3)}));
      }
      x = tape.concat({x, skip}, 1);
    }
    x = tape.relu(dec_convs_[static_cast<std::size_t>(s)].apply(tape, x));
  }
  return tape.sigmoid(out_conv_.apply(tape, x));
}

Var Codec::decode(Tape& tape, Var embeddings) const {
  return decode_impl(tape, embeddings, nullptr);
}

Var Codec::autoencode(Tape& tape, Var images) const {
  std::vector<Var> skips;
  Var emb = encode_impl(tape, images, cfg_.skip_connections ? &skips : nullptr);
  return decode_impl(tape, emb, cfg_.skip_connections ? &skips : nullptr);
}

namespace {

// Runs fn over row chunks of a (N, ...) tensor on short-lived no-grad tapes.
Tensor run_chunked(const Tensor& input, long chunk, Shape out_tail,
                   const std::function<Tensor(Tape&, Tensor)>& fn) {
  const long n = input.dim(0);
  Shape out_shape;
  out_shape.push_back(n);
  for (long d : out_tail) out_shape.push_back(d);
  Tensor out(out_shape);
  const long row = shape_numel(out_tail);
  const long in_row = input.numel() / n;
  Shape chunk_shape = input.shape();
  for (long start = 0; start < n; start += chunk) {
    const long len = std::min(chunk, n - start);
    chunk_shape[0] = len;
    Tensor piece(chunk_shape);
    std::copy_n(input.data() + start * in_row, len * in_row, piece.data());
    Tape tape(/*grad_enabled=*/false);
    Tensor result = fn(tape, std::move(piece));
    std::copy_n(result.data(), len * row, out.data() + start * row);
  }
  return out;
}

}  // namespace

Tensor Codec::encode_batch(const Tensor& images, long chunk) const {
  check_images(images.shape());
  if (images.dim(0) == 0) return Tensor({0, cfg_.embedding_size});
  return run_chunked(images, chunk, {cfg_.embedding_size},
                     [this](Tape& tape, Tensor piece) {
                       Var v = encode(tape, tape.constant(std::move(piece)));
                       return v.value();
                     });
}

Tensor Codec::decode_batch(const Tensor& embeddings, long chunk) const {
  if (embeddings.dim(0) == 0) {
    return Tensor({0, cfg_.in_channels, cfg_.input_h, cfg_.input_w});
  }
  return run_chunked(embeddings, chunk,
                     {cfg_.in_channels, cfg_.input_h, cfg_.input_w},
                     [this](Tape& tape, Tensor piece) {
                       Var v = decode(tape, tape.constant(std::move(piece)));
                       return v.value();
                     });
}

long Codec::parameter_count() const {
  std::vector<Param*> ps;
  const_cast<Codec*>(this)->collect(ps);
  long n = 0;
  for (const Param* p : ps) n += p->value.numel();
  return n;
}

long Codec::parameter_count(const CodecConfig& cfg, CodecPart part) {
  cfg.validate();
  auto conv_params = [](long in_c, long out_c) { return out_c * in_c * 9 + out_c; };
  long enc = 0, dec = 0;
  long in_c = cfg.in_channels;
  for (int s = 0; s < cfg.depth; ++s) {
    enc += conv_params(in_c, cfg.stage_channels(s));
    in_c = cfg.stage_channels(s);
  }
  if (cfg.depth > 0) enc += conv_params(in_c, cfg.bottleneck_channels());
  enc += cfg.flat_size() * cfg.embedding_size + cfg.embedding_size;  // linear

  dec += cfg.embedding_size * cfg.flat_size() + cfg.flat_size();
  for (int s = 0; s < cfg.depth; ++s) {
    const long skip_c = cfg.skip_connections ? cfg.stage_channels(s) : 0;
    dec += conv_params(cfg.stage_channels(s) * 2 + skip_c, cfg.stage_channels(s));
  }
  if (cfg.depth > 0) dec += conv_params(cfg.base_channels, cfg.in_channels);

  switch (part) {
    case CodecPart::Encoder: return enc;
    case CodecPart::Decoder: return dec;
    case CodecPart::Both: return enc + dec;
  }
  return enc + dec;
}

void Codec::collect(std::vector<Param*>& out) {
  for (auto& c : enc_convs_) c.collect(out);
  if (cfg_.depth > 0) bottleneck_.collect(out);
  to_embedding_.collect(out);
  from_embedding_.collect(out);
  for (auto& c : dec_convs_) c.collect(out);
  if (cfg_.depth > 0) out_conv_.collect(out);
}

}  // namespace nightcast
