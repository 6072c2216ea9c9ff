#include "nightcast/model.hpp"

namespace nightcast {

void ModelConfig::validate() const {
  codec.validate();
  temporal.validate();
  stgnn.validate();
  if (stgnn.input_width != combined_width()) {
    throw ConfigError("stgnn input width " + std::to_string(stgnn.input_width) +
                      " != P + K = " + std::to_string(combined_width()));
  }
  if (stgnn.output_width != codec.embedding_size) {
    throw ConfigError("stgnn output width " + std::to_string(stgnn.output_width) +
                      " != codec embedding size " +
                      std::to_string(codec.embedding_size));
  }
}

VstModel::VstModel(ModelConfig cfg, long num_nodes,
                   std::vector<Tensor> static_supports, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng codec_rng(subseed(seed, "codec"));
  Rng temporal_rng(subseed(seed, "temporal"));
  Rng stgnn_rng(subseed(seed, "stgnn"));
  codec = Codec(cfg_.codec, codec_rng);
  temporal = Time2Vec(cfg_.temporal, temporal_rng);
  stgnn = Stgnn(cfg_.stgnn, num_nodes, std::move(static_supports), stgnn_rng);
}

Var VstModel::forward(Tape& tape, Var inputs,
                      const std::vector<long>& day_indices) const {
  const Shape s = inputs.shape();
  if (s.size() != 5) {
    throw ShapeError("model: expected (V, S, C, H, W), got " + shape_str(s));
  }
  const long V = s[0], S = s[1], C = s[2], H = s[3], W = s[4];
  if (static_cast<long>(day_indices.size()) != S) {
    throw ShapeError("model: day index count " +
                     std::to_string(day_indices.size()) + " != S = " +
                     std::to_string(S));
  }
  Var flat_images = tape.reshape(inputs, {V * S, C, H, W});
  Var embeddings = codec.encode(tape, flat_images);                // (V*S, P)
  Var per_node = tape.reshape(embeddings, {V, S, cfg_.codec.embedding_size});
  Var tau = temporal.embed(tape, day_indices);                     // (S, K)
  Var z = concat_embeddings(tape, per_node, tau);                  // (V, S, Z)
  Var future = stgnn.forward_single(tape, z);                      // (V, T, P)
  const long T = cfg_.stgnn.horizon;
  Var flat_future = tape.reshape(future, {V * T, cfg_.codec.embedding_size});
  Var decoded = codec.decode(tape, flat_future);                   // (V*T, C, H, W)
  return tape.reshape(decoded, {V, T, C, H, W});
}

Tensor VstModel::predict_normalized(const GraphSignalWindow& window,
                                    const Normalizer& norm) const {
  std::vector<long> day_indices;
  for (Date d : window.input_dates) day_indices.push_back(window.day_index(d));
  Tape tape(/*grad_enabled=*/false);
  Var inputs = tape.constant(norm.normalize(window.inputs));
  Var pred = forward(tape, inputs, day_indices);
  return pred.value().clone();
}

std::vector<Param*> VstModel::parameters() {
  std::vector<Param*> out;
  codec.collect(out);
  temporal.collect(out);
  stgnn.collect(out);
  return out;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["codec"] = {{"depth", cfg.codec.depth},
                {"base_channels", cfg.codec.base_channels},
                {"embedding_size", cfg.codec.embedding_size},
                {"input_h", cfg.codec.input_h},
                {"input_w", cfg.codec.input_w},
                {"in_channels", cfg.codec.in_channels},
                {"skip_connections", cfg.codec.skip_connections}};
  j["temporal"] = {{"size", cfg.temporal.size}};
  j["stgnn"] = {{"layers", cfg.stgnn.layers},
                {"dilations", cfg.stgnn.dilations},
                {"residual_channels", cfg.stgnn.residual_channels},
                {"skip_channels", cfg.stgnn.skip_channels},
                {"diffusion_steps", cfg.stgnn.diffusion_steps},
                {"node_embedding_dim", cfg.stgnn.node_embedding_dim},
                {"horizon", cfg.stgnn.horizon},
                {"input_width", cfg.stgnn.input_width},
                {"output_width", cfg.stgnn.output_width},
                {"use_static_supports", cfg.stgnn.use_static_supports},
                {"use_adaptive", cfg.stgnn.use_adaptive}};
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("codec")) {
    const auto& c = j.at("codec");
    cfg.codec.depth = c.value("depth", cfg.codec.depth);
    cfg.codec.base_channels = c.value("base_channels", cfg.codec.base_channels);
    cfg.codec.embedding_size = c.value("embedding_size", cfg.codec.embedding_size);
    cfg.codec.input_h = c.value("input_h", cfg.codec.input_h);
    cfg.codec.input_w = c.value("input_w", cfg.codec.input_w);
    cfg.codec.in_channels = c.value("in_channels", cfg.codec.in_channels);
    cfg.codec.skip_connections =
        c.value("skip_connections", cfg.codec.skip_connections);
  }
  if (j.contains("temporal")) {
    cfg.temporal.size = j.at("temporal").value("size", cfg.temporal.size);
  }
  if (j.contains("stgnn")) {
    const auto& s = j.at("stgnn");
    cfg.stgnn.layers = s.value("layers", cfg.stgnn.layers);
    cfg.stgnn.dilations = s.value("dilations", cfg.stgnn.dilations);
    cfg.stgnn.residual_channels =
        s.value("residual_channels", cfg.stgnn.residual_channels);
    cfg.stgnn.skip_channels = s.value("skip_channels", cfg.stgnn.skip_channels);
    cfg.stgnn.diffusion_steps =
        s.value("diffusion_steps", cfg.stgnn.diffusion_steps);
    cfg.stgnn.node_embedding_dim =
        s.value("node_embedding_dim", cfg.stgnn.node_embedding_dim);
    cfg.stgnn.horizon = s.value("horizon", cfg.stgnn.horizon);
    cfg.stgnn.input_width = s.value("input_width", cfg.stgnn.input_width);
    cfg.stgnn.output_width = s.value("output_width", cfg.stgnn.output_width);
    cfg.stgnn.use_static_supports =
        s.value("use_static_supports", cfg.stgnn.use_static_supports);
    cfg.stgnn.use_adaptive = s.value("use_adaptive", cfg.stgnn.use_adaptive);
  }
  return cfg;
}

Checkpoint make_checkpoint(const VstModel& model, const Normalizer& norm,
                           const std::vector<std::string>& node_order,
                           nlohmann::json extra_meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(extra_meta);
  ckpt.meta["model"] = model_config_to_json(model.config());
  ckpt.meta["normalizer_scale"] = norm.scale;
  ckpt.meta["node_order"] = node_order;
  ckpt.meta["num_nodes"] = model.num_nodes();
  ckpt.meta["num_static_supports"] = model.stgnn.static_supports().size();

  for (Param* p : const_cast<VstModel&>(model).parameters()) {
    ckpt.tensors[p->name] = p->value.clone();
  }
  const auto& supports = model.stgnn.static_supports();
  for (std::size_t i = 0; i < supports.size(); ++i) {
    ckpt.tensors["support." + std::to_string(i)] = supports[i].clone();
  }
  // Adaptive embeddings live in parameters() only when use_adaptive is on;
  // store them unconditionally so ablation checkpoints stay loadable.
  ckpt.tensors[model.stgnn.node_embed_src.name] =
      model.stgnn.node_embed_src.value.clone();
  ckpt.tensors[model.stgnn.node_embed_dst.name] =
      model.stgnn.node_embed_dst.value.clone();
  return ckpt;
}

VstModel model_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = model_config_from_json(ckpt.meta.at("model"));
  const long num_nodes = ckpt.meta.at("num_nodes").get<long>();
  std::vector<Tensor> supports;
  const auto n_supports = ckpt.meta.value("num_static_supports", std::size_t{0});
  for (std::size_t i = 0; i < n_supports; ++i) {
    supports.push_back(ckpt.tensors.at("support." + std::to_string(i)).clone());
  }
  VstModel model(cfg, num_nodes, std::move(supports), /*seed=*/0);
  for (Param* p : model.parameters()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) {
      throw IoError("checkpoint is missing parameter '" + p->name + "'");
    }
    if (!it->second.same_shape(p->value)) {
      throw ShapeError("checkpoint parameter '" + p->name + "' has shape " +
                       shape_str(it->second.shape()) + ", model expects " +
                       shape_str(p->value.shape()));
    }
    p->value = it->second.clone();
  }
  // node embeddings sit outside parameters() when use_adaptive is off
  if (auto it = ckpt.tensors.find(model.stgnn.node_embed_src.name);
      it != ckpt.tensors.end()) {
    model.stgnn.node_embed_src.value = it->second.clone();
  }
  if (auto it = ckpt.tensors.find(model.stgnn.node_embed_dst.name);
      it != ckpt.tensors.end()) {
    model.stgnn.node_embed_dst.value = it->second.clone();
  }
  return model;
}

Normalizer normalizer_from_checkpoint(const Checkpoint& ckpt) {
  Normalizer n;
  n.scale = ckpt.meta.at("normalizer_scale").get<double>();
  return n;
}

std::vector<std::string> node_order_from_checkpoint(const Checkpoint& ckpt) {
  return ckpt.meta.at("node_order").get<std::vector<std::string>>();
}

}  // namespace nightcast
