#pragma once

#include <vector>

#include "nightcast/checkpoint.hpp"
#include "nightcast/codec.hpp"
#include "nightcast/stgnn.hpp"
#include "nightcast/time2vec.hpp"
#include "nightcast/windows.hpp"

namespace nightcast {

struct ModelConfig {
  CodecConfig codec;
  Time2VecConfig temporal;
  StgnnConfig stgnn;

  void validate() const;
  long combined_width() const { return codec.embedding_size + temporal.size; }
};

// Full forecaster: encode S past images per node, append the time embedding,
// run the st-GNN, decode the T future embeddings back to images.
class VstModel {
 public:
  VstModel() = default;
  VstModel(ModelConfig cfg, long num_nodes, std::vector<Tensor> static_supports,
           std::uint64_t seed);

  // Normalized inputs (V, S, C, H, W) -> normalized prediction (V, T, C, H, W).
  Var forward(Tape& tape, Var inputs, const std::vector<long>& day_indices) const;

  // No-grad window prediction in normalized space.
  Tensor predict_normalized(const GraphSignalWindow& window,
                            const Normalizer& norm) const;

  std::vector<Param*> parameters();
  long num_nodes() const { return stgnn.num_nodes(); }
  const ModelConfig& config() const { return cfg_; }

  Codec codec;
  Time2Vec temporal;
  Stgnn stgnn;

 private:
  ModelConfig cfg_;
};

// Checkpoint glue. The checkpoint stores every parameter, the model and data
// configs, the normalization constant, the node order, and the static
// transition matrices, so a model restores without the original dataset.
Checkpoint make_checkpoint(const VstModel& model, const Normalizer& norm,
                           const std::vector<std::string>& node_order,
                           nlohmann::json extra_meta = {});
VstModel model_from_checkpoint(const Checkpoint& ckpt);
Normalizer normalizer_from_checkpoint(const Checkpoint& ckpt);
std::vector<std::string> node_order_from_checkpoint(const Checkpoint& ckpt);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace nightcast
