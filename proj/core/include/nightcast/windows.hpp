#pragma once

#include <string>
#include <vector>

#include "nightcast/archive.hpp"
#include "nightcast/tensor.hpp"

namespace nightcast {

// One training sample: S past image stacks and T future targets across all
// nodes. Dates are consecutive days and targets immediately follow inputs;
// the node axis follows the archive's sorted county order.
struct GraphSignalWindow {
  Tensor inputs;   // (V, S, C, H, W), C = 1
  Tensor targets;  // (V, T, C, H, W)
  std::vector<Date> input_dates;
  std::vector<Date> target_dates;
  std::string event_id;
  Date event_start;  // origin of the day-index time coordinate

  long num_nodes() const { return inputs.dim(0); }
  long day_index(Date d) const { return d - event_start; }
};

// Chronological sliding windows over a gap-filled archive; returns exactly
// num_dates - S - T + 1 windows. Tiles are resized to `resize` pixels on
// ingestion when positive.
std::vector<GraphSignalWindow> build_windows(const EventArchive& archive,
                                             long window_s, long horizon_t,
                                             long resize = 0);

// Radiance -> [0, 1] scaling by a robust upper quantile of the training
// pixels. The constant rides along in the checkpoint for the inverse map.
struct Normalizer {
  double scale = 1.0;

  static Normalizer fit(const std::vector<const GraphSignalWindow*>& train,
                        double quantile = 0.99);
  Tensor normalize(const Tensor& x) const;
  Tensor denormalize(const Tensor& y) const;
};

}  // namespace nightcast
