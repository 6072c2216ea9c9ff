#pragma once

#include <string>

#include "nightcast/common.hpp"
#include "nightcast/geotiff.hpp"
#include "nightcast/tensor.hpp"

namespace nightcast {

// One georeferenced single-band radiance image for one county and one date.
// Radiance is nW/cm^2/sr; values are finite and >= 0 once cleaned.
struct RasterTile {
  std::string county_id;
  Date date;
  Tensor radiance;  // (H, W)
  Georef georef;
  std::optional<double> nodata;  // fill value as stored; cleared by clean_tile

  long height() const { return radiance.dim(0); }
  long width() const { return radiance.dim(1); }
};

// Replaces every fill-value and non-finite pixel with 0 and clamps negatives
// to 0. Total and idempotent.
RasterTile clean_tile(const RasterTile& tile, double fill_value);

// Bilinear resample to height x width. Uses the corner-aligned convention so
// endpoint values are preserved exactly; the georeference is rescaled to keep
// the tile footprint.
RasterTile resize_tile(const RasterTile& tile, long height, long width);

RasterTile read_tile(const std::string& path, const std::string& county_id,
                     Date date);
void write_tile(const std::string& path, const RasterTile& tile);

}  // namespace nightcast
