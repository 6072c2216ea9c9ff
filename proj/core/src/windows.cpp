#include "nightcast/windows.hpp"

#include <algorithm>
#include <cmath>

namespace nightcast {

std::vector<GraphSignalWindow> build_windows(const EventArchive& archive,
                                             long window_s, long horizon_t,
                                             long resize) {
  if (window_s < 1 || horizon_t < 1) {
    throw ValidationError("build_windows: S and T must be >= 1");
  }
  const long num_dates = archive.range.num_days();
  const long span = window_s + horizon_t;
  if (span > num_dates) {
    throw ValidationError(
        "build_windows: need at least " + std::to_string(span) +
        " dates for S=" + std::to_string(window_s) + ", T=" +
        std::to_string(horizon_t) + " but archive '" + archive.event_id +
        "' has " + std::to_string(num_dates));
  }
  if (archive.counties.empty()) {
    throw ValidationError("build_windows: archive has no counties");
  }

  const long V = static_cast<long>(archive.counties.size());

  // Materialize the per-event (V, D, H, W) stack once; windows copy slices.
  std::vector<std::vector<Tensor>> grids(static_cast<std::size_t>(V));
  long H = -1, W = -1;
  for (long v = 0; v < V; ++v) {
    const std::string& county = archive.counties[static_cast<std::size_t>(v)];
    grids[static_cast<std::size_t>(v)].reserve(static_cast<std::size_t>(num_dates));
    for (long day = 0; day < num_dates; ++day) {
      const Date date = archive.range.start + day;
      const RasterTile* tile = archive.find(county, date);
      if (!tile) {
        throw ValidationError("build_windows: missing tile for " + county +
                              " on " + date.to_string() +
                              " (apply the gap policy first)");
      }
      RasterTile prepared = *tile;
      if (resize > 0 &&
          (tile->height() != resize || tile->width() != resize)) {
        prepared = resize_tile(*tile, resize, resize);
      }
      if (H < 0) {
        H = prepared.height();
        W = prepared.width();
      } else if (prepared.height() != H || prepared.width() != W) {
        throw ShapeError("build_windows: tile for " + county + " on " +
                         date.to_string() + " is " +
                         std::to_string(prepared.height()) + "x" +
                         std::to_string(prepared.width()) + ", expected " +
                         std::to_string(H) + "x" + std::to_string(W));
      }
      grids[static_cast<std::size_t>(v)].push_back(prepared.radiance);
    }
  }

  const long count = num_dates - span + 1;
  std::vector<GraphSignalWindow> windows;
  windows.reserve(static_cast<std::size_t>(count));
  const long px = H * W;
  for (long w0 = 0; w0 < count; ++w0) {
    GraphSignalWindow win;
    win.event_id = archive.event_id;
    win.event_start = archive.range.start;
    win.inputs = Tensor({V, window_s, 1, H, W});
    win.targets = Tensor({V, horizon_t, 1, H, W});
    for (long s = 0; s < window_s; ++s) {
      win.input_dates.push_back(archive.range.start + (w0 + s));
    }
    for (long t = 0; t < horizon_t; ++t) {
      win.target_dates.push_back(archive.range.start + (w0 + window_s + t));
    }
    for (long v = 0; v < V; ++v) {
      const auto& days = grids[static_cast<std::size_t>(v)];
      for (long s = 0; s < window_s; ++s) {
        std::copy_n(days[static_cast<std::size_t>(w0 + s)].data(), px,
                    win.inputs.data() + (v * window_s + s) * px);
      }
      for (long t = 0; t < horizon_t; ++t) {
        std::copy_n(days[static_cast<std::size_t>(w0 + window_s + t)].data(), px,
                    win.targets.data() + (v * horizon_t + t) * px);
      }
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

Normalizer Normalizer::fit(const std::vector<const GraphSignalWindow*>& train,
                           double quantile) {
  if (train.empty()) {
    throw ValidationError("Normalizer::fit: no training windows");
  }
  if (quantile <= 0.0 || quantile > 1.0) {
    throw ValidationError("Normalizer::fit: quantile must be in (0, 1]");
  }
  std::vector<double> pixels;
  std::size_t total = 0;
  for (const GraphSignalWindow* w : train) {
    total += static_cast<std::size_t>(w->inputs.numel() + w->targets.numel());
  }
  pixels.reserve(total);
  for (const GraphSignalWindow* w : train) {
    pixels.insert(pixels.end(), w->inputs.data(),
                  w->inputs.data() + w->inputs.numel());
    pixels.insert(pixels.end(), w->targets.data(),
                  w->targets.data() + w->targets.numel());
  }
  // nearest-rank quantile
  const std::size_t k = std::min(
      pixels.size() - 1,
      static_cast<std::size_t>(
          std::ceil(quantile * static_cast<double>(pixels.size())) - 1));
  std::nth_element(pixels.begin(),
                   pixels.begin() + static_cast<std::ptrdiff_t>(k), pixels.end());
  Normalizer n;
  n.scale = pixels[k];
  if (!(n.scale > 0.0)) {
    log_warn("normalization quantile is not positive; falling back to 1.0");
    n.scale = 1.0;
  }
  return n;
}

Tensor Normalizer::normalize(const Tensor& x) const {
  Tensor out = x.clone();
  double* d = out.data();
  for (long i = 0; i < out.numel(); ++i) {
    double v = d[i] / scale;
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    d[i] = v;
  }
  return out;
}

Tensor Normalizer::denormalize(const Tensor& y) const {
  Tensor out = y.clone();
  out.scale_(scale);
  return out;
}

}  // namespace nightcast
