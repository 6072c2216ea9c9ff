#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nightcast/common.hpp"
#include "nightcast/raster.hpp"

namespace nightcast {

struct BoundingBox {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;

  void validate(const std::string& county_id) const {
    if (!(min_lon < max_lon) || !(min_lat < max_lat)) {
      throw ValidationError("bounding box for '" + county_id +
                            "' must satisfy min < max on both axes");
    }
  }
};

struct DateRange {
  Date start;
  Date end;  // inclusive

  long num_days() const { return end - start + 1; }
  void validate() const {
    if (end < start) throw ValidationError("empty date range");
  }
};

// Daily tiles for one event over a contiguous date range. Missing
// (county, date) pairs are listed in gaps, never silently dropped.
struct EventArchive {
  std::string event_id;
  std::string product;
  DateRange range;
  std::optional<Date> landfall;
  std::vector<std::string> counties;  // sorted; defines the node order
  std::map<std::string, std::map<std::int64_t, RasterTile>> tiles;
  std::vector<std::pair<std::string, Date>> gaps;

  const RasterTile* find(const std::string& county, Date date) const;
  void insert(RasterTile tile);
  long tile_count() const;
};

// Mean-baseline inputs for Percent-of-Normal: per county, monthly composite
// tiles keyed by the first day of their month.
struct CompositeSet {
  std::map<std::string, std::map<std::int64_t, RasterTile>> monthly;

  // Up to `count` most recent composites strictly before `day`'s month.
  std::vector<const RasterTile*> latest_before(const std::string& county,
                                               Date day, int count) const;
};

// Where tiles come from: a remote archive or a local fixture directory.
class ArchiveBackend {
 public:
  virtual ~ArchiveBackend() = default;
  // nullopt when the archive has no observation for this key.
  virtual std::optional<RasterTile> get_tile(const std::string& product,
                                             const std::string& event_id,
                                             const std::string& county,
                                             Date date,
                                             const BoundingBox& bbox) = 0;
};

// Reads <root>/<event_id>/<county_id>/<YYYY-MM-DD>.tif
class DirectoryBackend : public ArchiveBackend {
 public:
  explicit DirectoryBackend(std::string root) : root_(std::move(root)) {}
  std::optional<RasterTile> get_tile(const std::string& product,
                                     const std::string& event_id,
                                     const std::string& county, Date date,
                                     const BoundingBox& bbox) override;

 private:
  std::string root_;
};

// GETs <base_url>/<product>/<event_id>/<county_id>/<YYYY-MM-DD>.tif with
// bounded retries. 404 means no observation; transport errors and 5xx raise
// a retriable FetchError once retries are exhausted.
class HttpBackend : public ArchiveBackend {
 public:
  HttpBackend(std::string host, int port, std::string base_path = "",
              int attempts = 3);
  std::optional<RasterTile> get_tile(const std::string& product,
                                     const std::string& event_id,
                                     const std::string& county, Date date,
                                     const BoundingBox& bbox) override;

 private:
  std::string host_;
  int port_;
  std::string base_path_;
  int attempts_;
};

EventArchive fetch_event(ArchiveBackend& backend, const std::string& product,
                         const std::string& event_id, DateRange range,
                         const std::map<std::string, BoundingBox>& county_bboxes);

// Persistence under <root>/<event_id>/: daily tiles, monthly composites under
// <county>/monthly/<YYYY-MM>.tif, and manifest.json.
void save_archive(const EventArchive& archive, const std::string& root,
                  bool skip_existing = false);
EventArchive load_archive(const std::string& root, const std::string& event_id);
void save_composites(const CompositeSet& composites, const std::string& root,
                     const std::string& event_id, bool skip_existing = false);
CompositeSet load_composites(const std::string& root,
                             const std::string& event_id);

// Fills each missing (county, date) with the county's most recent prior tile,
// or a zero tile (with a logged warning) when none exists. The gap list is
// preserved for reporting.
EventArchive apply_gap_policy(const EventArchive& archive);

// Synthetic hurricane: a stationary per-county blob pattern plus seeded noise,
// scaled after landfall by 1 - depth * 2^(-(d - landfall)/half_life).
struct SyntheticSpec {
  long node_count = 8;
  long grid_size = 32;
  long num_days = 61;
  long landfall_day = 30;
  double depth = 0.85;
  double recovery_half_life_days = 8.0;
  double noise_sigma = 0.08;
  std::uint64_t seed = 42;
  std::uint64_t pattern_seed = 97;  // shared so events cover the same counties
  std::string event_id = "synthetic";
  Date start_date = Date::from_ymd(2022, 9, 1);

  void validate() const;
};

EventArchive synthesize_event(const SyntheticSpec& spec);
CompositeSet synthesize_composites(const SyntheticSpec& spec);
// The closed-form brightness factor applied on day `day_index`.
double synthetic_recovery_factor(const SyntheticSpec& spec, long day_index);
// Unit-square county polygons matching the synthetic layout, as GeoJSON.
std::string synthetic_county_geojson(const SyntheticSpec& spec);

}  // namespace nightcast
