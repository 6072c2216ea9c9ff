#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nightcast/png.hpp"
#include "nightcast/trainer.hpp"

namespace nightcast {

double rmse(std::span<const double> pred, std::span<const double> actual);
double mae(std::span<const double> pred, std::span<const double> actual);
// 100 * mean(|p - a| / max(|a|, eps)); the epsilon guard keeps near-zero
// actuals from blowing up the mean, and it changes MAPE materially.
double mape(std::span<const double> pred, std::span<const double> actual,
            double eps = 0.01);

struct MetricReport {
  std::string case_name;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
  long num_windows = 0;
};

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricReport>& reports,
                       const std::string& space);

// Per-pixel 100 * NTL / mean(composites). Pixels whose baseline mean is
// <= eps output the sentinel 100 (unlit means "assumed normal", which keeps
// ocean from rendering as an outage).
struct OutageMap {
  std::string county_id;
  Date date;
  Tensor percent_normal;  // (H, W), >= 0, may exceed 100
  Georef georef;
};

OutageMap percent_of_normal(const RasterTile& day,
                            const std::vector<const RasterTile*>& composites,
                            double baseline_eps = 1e-6);

// Colormapped rendering, clamped to [0, 100], with an embedded legend.
RgbImage render_outage_map(const OutageMap& map);
void write_outage_png(const std::string& path, const OutageMap& map);
void write_outage_tif(const std::string& path, const OutageMap& map);
OutageMap read_outage_tif(const std::string& path);

struct EvalOptions {
  double mape_eps = 0.01;
  bool raw_space = false;  // metrics on radiance instead of normalized pixels
  bool oracle = false;     // predictions replaced by the targets (upper bound)
};

struct CaseEvalResult {
  MetricReport model;
  MetricReport persistence;
};

// pred map + matching actual map for one (county, target-date)
using MapSink = std::function<void(const OutageMap& pred, const OutageMap& actual)>;

// Metrics over every test-window pixel plus Percent-of-Normal maps for both
// predicted and actual rasters (composites required only when sink is set).
CaseEvalResult evaluate_case(const VstModel& model, const Normalizer& norm,
                             const CaseSplit& split,
                             const CompositeSet* composites,
                             const EvalOptions& opts, MapSink sink = nullptr);

}  // namespace nightcast
