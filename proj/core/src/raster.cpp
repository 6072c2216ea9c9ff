#include "nightcast/raster.hpp"

#include <cmath>

namespace nightcast {

RasterTile clean_tile(const RasterTile& tile, double fill_value) {
  RasterTile out = tile;
  out.radiance = tile.radiance.clone();
  out.nodata.reset();
  double* d = out.radiance.data();
  const long n = out.radiance.numel();
  for (long i = 0; i < n; ++i) {
    if (!std::isfinite(d[i]) || d[i] == fill_value || d[i] < 0.0) d[i] = 0.0;
  }
  return out;
}

RasterTile resize_tile(const RasterTile& tile, long height, long width) {
  if (height < 1 || width < 1) {
    throw ValidationError("resize_tile: target size must be >= 1, got " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
  const long in_h = tile.height(), in_w = tile.width();
  RasterTile out = tile;
  out.radiance = Tensor({height, width});

  // Corner-aligned sampling; a single-pixel target samples the input centre.
  auto src_coord = [](long out_i, long out_n, long in_n) -> double {
    if (out_n == 1) return static_cast<double>(in_n - 1) / 2.0;
    return static_cast<double>(out_i) * static_cast<double>(in_n - 1) /
           static_cast<double>(out_n - 1);
  };

  const double* src = tile.radiance.data();
  double* dst = out.radiance.data();
  for (long r = 0; r < height; ++r) {
    const double sy = src_coord(r, height, in_h);
    const long y0 = std::min(static_cast<long>(sy), in_h - 1);
    const long y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (long c = 0; c < width; ++c) {
      const double sx = src_coord(c, width, in_w);
      const long x0 = std::min(static_cast<long>(sx), in_w - 1);
      const long x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src[y0 * in_w + x0] * (1.0 - fx) + src[y0 * in_w + x1] * fx;
      const double bot = src[y1 * in_w + x0] * (1.0 - fx) + src[y1 * in_w + x1] * fx;
      dst[r * width + c] = top * (1.0 - fy) + bot * fy;
    }
  }

  out.georef.pixel_w =
      tile.georef.pixel_w * static_cast<double>(in_w) / static_cast<double>(width);
  out.georef.pixel_h =
      tile.georef.pixel_h * static_cast<double>(in_h) / static_cast<double>(height);
  return out;
}

RasterTile read_tile(const std::string& path, const std::string& county_id,
                     Date date) {
  GeoTiffImage img = read_geotiff(path);
  RasterTile tile;
  tile.county_id = county_id;
  tile.date = date;
  tile.georef = img.georef;
  tile.nodata = img.nodata;
  tile.radiance = Tensor({img.height, img.width});
  double* d = tile.radiance.data();
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    d[i] = static_cast<double>(img.samples[i]);
  }
  return tile;
}

void write_tile(const std::string& path, const RasterTile& tile) {
  GeoTiffImage img;
  img.height = tile.height();
  img.width = tile.width();
  img.georef = tile.georef;
  img.nodata = tile.nodata;
  img.samples.resize(static_cast<std::size_t>(img.height * img.width));
  const double* d = tile.radiance.data();
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    img.samples[i] = static_cast<float>(d[i]);
  }
  write_geotiff(path, img);
}

}  // namespace nightcast
