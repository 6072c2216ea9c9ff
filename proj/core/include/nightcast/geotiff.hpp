#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nightcast/common.hpp"

namespace nightcast {

// North-up affine georeference: world_x = origin_x + col * pixel_w,
// world_y = origin_y - row * pixel_h. origin is the raster's top-left corner.
struct Georef {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_w = 1.0;
  double pixel_h = 1.0;
  std::string crs = "EPSG:4326";

  bool operator==(const Georef&) const = default;
};

// Single-band float raster as stored on disk.
struct GeoTiffImage {
  long height = 0;
  long width = 0;
  std::vector<float> samples;  // row-major, height*width
  std::optional<double> nodata;
  Georef georef;
};

// Writes a minimal uncompressed little-endian GeoTIFF: one float32 band,
// one strip, ModelPixelScale/ModelTiepoint/GeoKeyDirectory georeferencing
// and the GDAL_NODATA ASCII tag. Output bytes are a pure function of the
// input, which the fixture and rendering tests rely on.
void write_geotiff(const std::string& path, const GeoTiffImage& img);

// Reads the profile written above plus a tolerant superset: either byte
// order, float32/float64 samples, any strip layout. Compressed or tiled
// files are rejected with IoError.
GeoTiffImage read_geotiff(const std::string& path);
GeoTiffImage read_geotiff_bytes(std::vector<std::uint8_t> bytes,
                                const std::string& name);

// The exact bytes write_geotiff would put on disk.
std::vector<std::uint8_t> encode_geotiff(const GeoTiffImage& img);

}  // namespace nightcast
