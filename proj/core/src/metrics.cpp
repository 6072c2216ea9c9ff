#include "nightcast/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace nightcast {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> actual) {
  if (pred.empty()) throw ValidationError("metric of empty value sets");
  if (pred.size() != actual.size()) {
    throw ShapeError("metric length mismatch: " + std::to_string(pred.size()) +
                     " vs " + std::to_string(actual.size()));
  }
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += std::abs(pred[i] - actual[i]);
  }
  return s / static_cast<double>(pred.size());
}

double mape(std::span<const double> pred, std::span<const double> actual,
            double eps) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += std::abs(pred[i] - actual[i]) / std::max(std::abs(actual[i]), eps);
  }
  return 100.0 * s / static_cast<double>(pred.size());
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricReport>& reports,
                       const std::string& space) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << "case,rmse,mae,mape,num_windows,space\n";
    for (const MetricReport& r : reports) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%ld,%s\n",
                    r.case_name.c_str(), r.rmse, r.mae, r.mape, r.num_windows,
                    space.c_str());
      out << buf;
    }
  }
  fs::rename(tmp, target);
}

OutageMap percent_of_normal(const RasterTile& day,
                            const std::vector<const RasterTile*>& composites,
                            double baseline_eps) {
  if (composites.empty()) {
    throw ValidationError("percent_of_normal: no composites given");
  }
  for (const RasterTile* c : composites) {
    if (c->county_id != day.county_id) {
      throw ValidationError("percent_of_normal: composite county '" +
                            c->county_id + "' != day county '" +
                            day.county_id + "'");
    }
    if (c->height() != day.height() || c->width() != day.width()) {
      throw ValidationError("percent_of_normal: composite shape mismatch for " +
                            day.county_id);
    }
    if (!(c->georef == day.georef)) {
      throw ValidationError("percent_of_normal: georef mismatch for " +
                            day.county_id);
    }
  }
  OutageMap out;
  out.county_id = day.county_id;
  out.date = day.date;
  out.georef = day.georef;
  out.percent_normal = Tensor({day.height(), day.width()});
  const long n = out.percent_normal.numel();
  double* d = out.percent_normal.data();
  const double* x = day.radiance.data();
  const double inv = 1.0 / static_cast<double>(composites.size());
  for (long i = 0; i < n; ++i) {
    double baseline = 0.0;
    for (const RasterTile* c : composites) baseline += c->radiance[i];
    baseline *= inv;
    d[i] = baseline <= baseline_eps ? 100.0 : 100.0 * x[i] / baseline;
  }
  return out;
}

namespace {

constexpr long kLegendWidth = 46;  // color bar + labels

}  // namespace

RgbImage render_outage_map(const OutageMap& map) {
  if (!map.percent_normal.all_finite()) {
    throw ValidationError("render_outage_map: non-finite percent values");
  }
  const long h = map.percent_normal.dim(0);
  const long w = map.percent_normal.dim(1);
  const long out_h = std::max<long>(h, 40);
  RgbImage img(out_h, w + kLegendWidth);

  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const Rgb rgb = severity_color(map.percent_normal[r * w + c]);
      img.set(r, c, rgb.r, rgb.g, rgb.b);
    }
  }

  // legend: vertical bar from 100 (top) to 0, labelled
  const long bar_x = w + 6;
  const long bar_top = 4, bar_h = out_h - 16;
  for (long i = 0; i < bar_h; ++i) {
    const double p = 100.0 * (1.0 - static_cast<double>(i) /
                                        static_cast<double>(bar_h - 1));
    const Rgb rgb = severity_color(p);
    for (long b = 0; b < 8; ++b) {
      img.set(bar_top + i, bar_x + b, rgb.r, rgb.g, rgb.b);
    }
  }
  const Rgb black{20, 20, 20};
  draw_text(img, bar_top, bar_x + 10, "100", black);
  draw_text(img, bar_top + bar_h / 2 - 3, bar_x + 10, "50", black);
  draw_text(img, bar_top + bar_h - 7, bar_x + 10, "0", black);
  draw_text(img, out_h - 9, bar_x, "%", black);
  return img;
}

void write_outage_png(const std::string& path, const OutageMap& map) {
  write_png(path, render_outage_map(map));
}

void write_outage_tif(const std::string& path, const OutageMap& map) {
  RasterTile tile;
  tile.county_id = map.county_id;
  tile.date = map.date;
  tile.georef = map.georef;
  tile.radiance = map.percent_normal;
  write_tile(path, tile);
}

OutageMap read_outage_tif(const std::string& path) {
  RasterTile tile = read_tile(path, "", Date{});
  OutageMap map;
  map.percent_normal = tile.radiance;
  map.georef = tile.georef;
  return map;
}

namespace {

struct MetricAccum {
  double sq = 0.0, abs = 0.0, ape = 0.0;
  long n = 0;

  void add(const double* pred, const double* actual, long count, double eps) {
    for (long i = 0; i < count; ++i) {
      const double d = pred[i] - actual[i];
      sq += d * d;
      abs += std::abs(d);
      ape += std::abs(d) / std::max(std::abs(actual[i]), eps);
      ++n;
    }
  }

  MetricReport report(const std::string& case_name, long num_windows) const {
    MetricReport r;
    r.case_name = case_name;
    r.num_windows = num_windows;
    if (n > 0) {
      r.rmse = std::sqrt(sq / static_cast<double>(n));
      r.mae = abs / static_cast<double>(n);
      r.mape = 100.0 * ape / static_cast<double>(n);
    }
    return r;
  }
};

}  // namespace

CaseEvalResult evaluate_case(const VstModel& model, const Normalizer& norm,
                             const CaseSplit& split,
                             const CompositeSet* composites,
                             const EvalOptions& opts, MapSink sink) {
  if (split.test.empty()) {
    throw ValidationError("evaluate_case: empty test set for case '" +
                          split.case_name + "'");
  }
  if (sink && !composites) {
    throw ValidationError("evaluate_case: maps requested without composites");
  }

  MetricAccum model_acc, persist_acc;
  // Node order is the county order of the windows (sorted at build time).
  for (const GraphSignalWindow& w : split.test) {
    Tensor pred_norm = opts.oracle ? norm.normalize(w.targets)
                                   : model.predict_normalized(w, norm);
    Tensor target_norm = norm.normalize(w.targets);
    Tensor persist_norm = norm.normalize(persistence_prediction(w));

    const Tensor pred = opts.raw_space ? norm.denormalize(pred_norm) : pred_norm;
    const Tensor actual = opts.raw_space ? w.targets : target_norm;
    const Tensor persist =
        opts.raw_space ? norm.denormalize(persist_norm) : persist_norm;

    model_acc.add(pred.data(), actual.data(), pred.numel(), opts.mape_eps);
    persist_acc.add(persist.data(), actual.data(), persist.numel(), opts.mape_eps);
  }

  CaseEvalResult result;
  result.model = model_acc.report(split.case_name,
                                  static_cast<long>(split.test.size()));
  result.persistence = persist_acc.report(
      split.case_name, static_cast<long>(split.test.size()));
  if (!sink) return result;

  // Percent-of-Normal maps for predicted and actual rasters, per county and
  // target date, in radiance units.
  for (const GraphSignalWindow& w : split.test) {
    Tensor pred_norm = opts.oracle ? norm.normalize(w.targets)
                                   : model.predict_normalized(w, norm);
    Tensor pred_rad = norm.denormalize(pred_norm);
    const Shape s = pred_rad.shape();  // (V, T, C, H, W)
    const long V = s[0], T = s[1], H = s[3], W = s[4];
    // Window node axis follows sorted county ids; recover them from the
    // composites' county keys if needed. The caller's sink sees tiles in
    // node order.
    std::vector<std::string> counties;
    for (const auto& [county, by_month] : composites->monthly) {
      counties.push_back(county);
    }
    if (static_cast<long>(counties.size()) != V) {
      throw ValidationError(
          "evaluate_case: composite county count " +
          std::to_string(counties.size()) + " != window node count " +
          std::to_string(V));
    }
    for (long v = 0; v < V; ++v) {
      for (long t = 0; t < T; ++t) {
        const Date date = w.target_dates[static_cast<std::size_t>(t)];
        auto tile_from = [&](const Tensor& stack) {
          RasterTile tile;
          tile.county_id = counties[static_cast<std::size_t>(v)];
          tile.date = date;
          tile.radiance = Tensor({H, W});
          std::copy_n(stack.data() + (v * T + t) * H * W, H * W,
                      tile.radiance.data());
          return tile;
        };
        RasterTile pred_tile = tile_from(pred_rad);
        RasterTile actual_tile = tile_from(w.targets);
        auto comp = composites->latest_before(pred_tile.county_id, date, 3);
        if (comp.empty()) {
          log_warn("no monthly composite before " + date.to_string() + " for " +
                   pred_tile.county_id + "; skipping map");
          continue;
        }
        if (comp.size() < 3) {
          log_warn("only " + std::to_string(comp.size()) +
                   " composites available before " + date.to_string() + " for " +
                   pred_tile.county_id);
        }
        // Composites follow the model resolution; maps adopt their georef
        // (predictions carry none).
        std::vector<RasterTile> resized;
        std::vector<const RasterTile*> comp_ptrs;
        for (const RasterTile* c : comp) {
          if (c->height() != H || c->width() != W) {
            resized.push_back(resize_tile(*c, H, W));
          } else {
            resized.push_back(*c);
          }
        }
        for (const RasterTile& c : resized) comp_ptrs.push_back(&c);
        pred_tile.georef = comp_ptrs[0]->georef;
        actual_tile.georef = comp_ptrs[0]->georef;
        sink(percent_of_normal(pred_tile, comp_ptrs),
             percent_of_normal(actual_tile, comp_ptrs));
      }
    }
  }
  return result;
}

}  // namespace nightcast
