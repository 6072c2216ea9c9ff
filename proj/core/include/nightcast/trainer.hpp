#pragma once

#include <string>
#include <vector>

#include "nightcast/model.hpp"

namespace nightcast {

struct TrainConfig {
  long batch_size = 16;
  double learning_rate = 0.001;
  double min_lr = 0.0;  // cosine annealing floor; t_max = epochs
  int epochs = 100;
  std::uint64_t seed = 42;
  double val_fraction = 0.3;
  double grad_clip = 5.0;
  long micro_batch = 2;  // windows per tape; accumulation keeps the math exact
  bool deterministic = true;

  void validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) && learning_rate != 0.0) {
      throw ValidationError("learning_rate must be >= 0");
    }
    if (learning_rate < 0.0) throw ValidationError("learning_rate must be >= 0");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
      throw ValidationError("val_fraction must be in [0, 1)");
    }
    if (micro_batch < 1) throw ValidationError("micro_batch must be >= 1");
  }
};

// Leave-one-event-out split. Test takes every window of the held-out event;
// the remaining events contribute their chronologically-last windows to
// validation, apportioned so the pooled validation share is val_fraction.
struct CaseSplit {
  std::string case_name;
  std::vector<GraphSignalWindow> train;
  std::vector<GraphSignalWindow> val;
  std::vector<GraphSignalWindow> test;
};

CaseSplit make_case_split(const std::vector<EventArchive>& archives,
                          const std::string& held_out, long window_s,
                          long horizon_t, double val_fraction, long resize = 0);

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val = 0.0;
};

// End-to-end training with Adam, cosine annealing, MSE on normalized pixels,
// model selection by validation MSE (train MSE when there is no val set).
// The model is left holding the best epoch's parameters.
TrainResult train(VstModel& model, const CaseSplit& split,
                  const TrainConfig& cfg, const Normalizer& norm);

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history);

// Inverse-normalized radiance predictions, one (V, T, C, H, W) stack per window.
std::vector<Tensor> predict(const VstModel& model, const Normalizer& norm,
                            const std::vector<GraphSignalWindow>& windows);

// The minimal competence bar: predict the last input frame unchanged.
Tensor persistence_prediction(const GraphSignalWindow& window);

}  // namespace nightcast
