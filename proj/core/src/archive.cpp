#include "nightcast/archive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "nightcast/rng.hpp"

// httplib pulls in a lot; keep it out of the public headers.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace nightcast {

const RasterTile* EventArchive::find(const std::string& county, Date date) const {
  auto it = tiles.find(county);
  if (it == tiles.end()) return nullptr;
  auto jt = it->second.find(date.days());
  return jt == it->second.end() ? nullptr : &jt->second;
}

void EventArchive::insert(RasterTile tile) {
  const std::string county = tile.county_id;
  const std::int64_t day = tile.date.days();
  tiles[county][day] = std::move(tile);
}

long EventArchive::tile_count() const {
  long n = 0;
  for (const auto& [county, by_day] : tiles) n += static_cast<long>(by_day.size());
  return n;
}

std::vector<const RasterTile*> CompositeSet::latest_before(
    const std::string& county, Date day, int count) const {
  std::vector<const RasterTile*> out;
  auto it = monthly.find(county);
  if (it == monthly.end()) return out;
  int y, m, d;
  day.to_ymd(y, m, d);
  const std::int64_t month_start = Date::from_ymd(y, m, 1).days();
  for (auto jt = it->second.rbegin(); jt != it->second.rend(); ++jt) {
    if (jt->first < month_start) {
      out.push_back(&jt->second);
      if (static_cast<int>(out.size()) == count) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// backends

namespace {

std::string tile_rel_path(const std::string& event_id, const std::string& county,
                          Date date) {
  return event_id + "/" + county + "/" + date.to_string() + ".tif";
}

}  // namespace

std::optional<RasterTile> DirectoryBackend::get_tile(
    const std::string& /*product*/, const std::string& event_id,
    const std::string& county, Date date, const BoundingBox& /*bbox*/) {
  const std::string path = root_ + "/" + tile_rel_path(event_id, county, date);
  if (!fs::exists(path)) return std::nullopt;
  return read_tile(path, county, date);
}

HttpBackend::HttpBackend(std::string host, int port, std::string base_path,
                         int attempts)
    : host_(std::move(host)), port_(port), base_path_(std::move(base_path)),
      attempts_(std::max(1, attempts)) {}

std::optional<RasterTile> HttpBackend::get_tile(const std::string& product,
                                                const std::string& event_id,
                                                const std::string& county,
                                                Date date,
                                                const BoundingBox& /*bbox*/) {
  const std::string target =
      base_path_ + "/" + product + "/" + tile_rel_path(event_id, county, date);
  std::string last_error;
  for (int attempt = 0; attempt < attempts_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
    httplib::Client client(host_, port_);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    auto res = client.Get(target);
    if (!res) {
      last_error = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
      GeoTiffImage img = read_geotiff_bytes(std::move(bytes), target);
      RasterTile tile;
      tile.county_id = county;
      tile.date = date;
      tile.georef = img.georef;
      tile.nodata = img.nodata;
      tile.radiance = Tensor({img.height, img.width});
      for (std::size_t i = 0; i < img.samples.size(); ++i) {
        tile.radiance[static_cast<long>(i)] = img.samples[i];
      }
      return tile;
    }
    if (res->status == 404) return std::nullopt;
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    throw FetchError("archive request " + target + " failed with status " +
                         std::to_string(res->status),
                     /*retriable=*/false);
  }
  throw FetchError("archive unreachable after " + std::to_string(attempts_) +
                       " attempts (" + last_error + "): " + target,
                   /*retriable=*/true);
}

EventArchive fetch_event(ArchiveBackend& backend, const std::string& product,
                         const std::string& event_id, DateRange range,
                         const std::map<std::string, BoundingBox>& county_bboxes) {
  range.validate();
  if (county_bboxes.empty()) {
    throw ValidationError("fetch_event: no county bounding boxes given");
  }
  for (const auto& [county, bbox] : county_bboxes) bbox.validate(county);

  EventArchive archive;
  archive.event_id = event_id;
  archive.product = product;
  archive.range = range;
  for (const auto& [county, bbox] : county_bboxes) {
    archive.counties.push_back(county);
  }
  std::sort(archive.counties.begin(), archive.counties.end());

  for (const std::string& county : archive.counties) {
    const BoundingBox& bbox = county_bboxes.at(county);
    for (Date d = range.start; d <= range.end; d = d + 1) {
      auto tile = backend.get_tile(product, event_id, county, d, bbox);
      if (tile) {
        archive.insert(std::move(*tile));
      } else {
        archive.gaps.emplace_back(county, d);
      }
    }
  }
  return archive;
}

// ---------------------------------------------------------------------------
// persistence

void save_archive(const EventArchive& archive, const std::string& root,
                  bool skip_existing) {
  const fs::path event_dir = fs::path(root) / archive.event_id;
  fs::create_directories(event_dir);
  for (const auto& [county, by_day] : archive.tiles) {
    for (const auto& [day, tile] : by_day) {
      const fs::path p =
          event_dir / county / (Date(day).to_string() + ".tif");
      if (skip_existing && fs::exists(p)) continue;
      write_tile(p.string(), tile);
    }
  }
  json manifest;
  manifest["event_id"] = archive.event_id;
  manifest["product"] = archive.product;
  manifest["start"] = archive.range.start.to_string();
  manifest["end"] = archive.range.end.to_string();
  if (archive.landfall) manifest["landfall"] = archive.landfall->to_string();
  manifest["counties"] = archive.counties;
  json gaps = json::array();
  for (const auto& [county, date] : archive.gaps) {
    gaps.push_back({county, date.to_string()});
  }
  manifest["gaps"] = gaps;

  const fs::path tmp = event_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << manifest.dump(2) << "\n";
  }
  fs::rename(tmp, event_dir / "manifest.json");
}

EventArchive load_archive(const std::string& root, const std::string& event_id) {
  const fs::path event_dir = fs::path(root) / event_id;
  const fs::path manifest_path = event_dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw IoError("missing archive manifest: " + manifest_path.string());
  }
  json manifest;
  {
    std::ifstream in(manifest_path);
    in >> manifest;
  }
  EventArchive archive;
  archive.event_id = manifest.at("event_id").get<std::string>();
  archive.product = manifest.value("product", std::string{});
  archive.range.start = Date::parse(manifest.at("start").get<std::string>());
  archive.range.end = Date::parse(manifest.at("end").get<std::string>());
  if (manifest.contains("landfall")) {
    archive.landfall = Date::parse(manifest.at("landfall").get<std::string>());
  }
  archive.counties = manifest.at("counties").get<std::vector<std::string>>();
  for (const auto& g : manifest.at("gaps")) {
    archive.gaps.emplace_back(g.at(0).get<std::string>(),
                              Date::parse(g.at(1).get<std::string>()));
  }

  for (const std::string& county : archive.counties) {
    for (Date d = archive.range.start; d <= archive.range.end; d = d + 1) {
      const fs::path p = event_dir / county / (d.to_string() + ".tif");
      if (fs::exists(p)) {
        archive.insert(read_tile(p.string(), county, d));
      }
    }
  }
  return archive;
}

void save_composites(const CompositeSet& composites, const std::string& root,
                     const std::string& event_id, bool skip_existing) {
  for (const auto& [county, by_month] : composites.monthly) {
    for (const auto& [day, tile] : by_month) {
      int y, m, d;
      Date(day).to_ymd(y, m, d);
      char name[16];
      std::snprintf(name, sizeof(name), "%04d-%02d.tif", y, m);
      const fs::path p = fs::path(root) / event_id / county / "monthly" / name;
      if (skip_existing && fs::exists(p)) continue;
      write_tile(p.string(), tile);
    }
  }
}

CompositeSet load_composites(const std::string& root,
                             const std::string& event_id) {
  CompositeSet out;
  const fs::path event_dir = fs::path(root) / event_id;
  if (!fs::exists(event_dir)) return out;
  for (const auto& county_entry : fs::directory_iterator(event_dir)) {
    if (!county_entry.is_directory()) continue;
    const fs::path monthly_dir = county_entry.path() / "monthly";
    if (!fs::exists(monthly_dir)) continue;
    const std::string county = county_entry.path().filename().string();
    for (const auto& f : fs::directory_iterator(monthly_dir)) {
      const std::string stem = f.path().stem().string();  // YYYY-MM
      int y = 0, m = 0;
      if (std::sscanf(stem.c_str(), "%d-%d", &y, &m) != 2) continue;
      const Date month_start = Date::from_ymd(y, m, 1);
      out.monthly[county][month_start.days()] =
          read_tile(f.path().string(), county, month_start);
    }
  }
  return out;
}

EventArchive apply_gap_policy(const EventArchive& archive) {
  EventArchive out = archive;
  for (const std::string& county : out.counties) {
    const RasterTile* last = nullptr;
    for (Date d = out.range.start; d <= out.range.end; d = d + 1) {
      const RasterTile* cur = out.find(county, d);
      if (cur) {
        last = cur;
        continue;
      }
      RasterTile fill;
      if (last) {
        fill = *last;
      } else {
        // Look ahead for any tile to borrow the geometry from.
        long h = 0, w = 0;
        Georef georef;
        for (const auto& [day, t] : out.tiles.count(county)
                                        ? out.tiles.at(county)
                                        : std::map<std::int64_t, RasterTile>{}) {
          h = t.height();
          w = t.width();
          georef = t.georef;
          break;
        }
        if (h == 0) {
          throw ValidationError("county '" + county +
                                "' has no tiles at all; cannot gap-fill");
        }
        log_warn("no prior tile for " + county + " on " + d.to_string() +
                 "; filling with zeros");
        fill.radiance = Tensor({h, w});
        fill.georef = georef;
      }
      fill.county_id = county;
      fill.date = d;
      out.insert(std::move(fill));
      last = out.find(county, d);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic events

void SyntheticSpec::validate() const {
  if (node_count < 1) throw ValidationError("synthetic: node_count must be >= 1");
  if (grid_size < 2) throw ValidationError("synthetic: grid_size must be >= 2");
  if (num_days < 1) throw ValidationError("synthetic: num_days must be >= 1");
  if (landfall_day < 0 || landfall_day >= num_days) {
    throw ValidationError("synthetic: landfall_day must lie inside the event");
  }
  if (depth < 0.0 || depth > 1.0) {
    throw ValidationError("synthetic: depth must be in [0, 1]");
  }
  if (recovery_half_life_days <= 0.0) {
    throw ValidationError("synthetic: recovery_half_life_days must be > 0");
  }
  if (noise_sigma < 0.0) {
    throw ValidationError("synthetic: noise_sigma must be >= 0");
  }
}

double synthetic_recovery_factor(const SyntheticSpec& spec, long day_index) {
  if (day_index < spec.landfall_day) return 1.0;
  const double dt = static_cast<double>(day_index - spec.landfall_day);
  return 1.0 - spec.depth * std::pow(0.5, dt / spec.recovery_half_life_days);
}

namespace {

long synth_cols(const SyntheticSpec& spec) {
  long c = 1;
  while (c * c < spec.node_count) ++c;
  return c;
}

std::string synth_county_id(long i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "county_%02ld", i);
  return buf;
}

Georef synth_georef(const SyntheticSpec& spec, long i) {
  const long cols = synth_cols(spec);
  const long row = i / cols, col = i % cols;
  Georef g;
  g.origin_x = static_cast<double>(col);
  g.origin_y = -static_cast<double>(row);
  g.pixel_w = 1.0 / static_cast<double>(spec.grid_size);
  g.pixel_h = 1.0 / static_cast<double>(spec.grid_size);
  return g;
}

// Stationary brightness pattern for one county: a dim floor plus a few
// polynomial bumps. Pure arithmetic, so it is bit-identical everywhere.
Tensor synth_pattern(const SyntheticSpec& spec, long county_index) {
  const long n = spec.grid_size;
  Tensor pattern({n, n});
  pattern.fill(0.05);
  Rng rng(hash_index(spec.pattern_seed, static_cast<std::uint64_t>(county_index),
                     0xb10b5, 0));
  const long blobs = 3 + static_cast<long>(rng.next_below(3));
  for (long b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(n);
    const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(n);
    const double radius = rng.uniform(0.12, 0.3) * static_cast<double>(n);
    const double amp = rng.uniform(0.35, 1.0);
    double* d = pattern.data();
    for (long y = 0; y < n; ++y) {
      for (long x = 0; x < n; ++x) {
        const double dy = (static_cast<double>(y) - cy) / radius;
        const double dx = (static_cast<double>(x) - cx) / radius;
        const double r2 = dy * dy + dx * dx;
        if (r2 < 1.0) {
          const double bump = (1.0 - r2) * (1.0 - r2);
          d[y * n + x] += amp * bump;
        }
      }
    }
  }
  return pattern;
}

}  // namespace

EventArchive synthesize_event(const SyntheticSpec& spec) {
  spec.validate();
  EventArchive archive;
  archive.event_id = spec.event_id;
  archive.product = "synthetic";
  archive.range.start = spec.start_date;
  archive.range.end = spec.start_date + (spec.num_days - 1);
  archive.landfall = spec.start_date + spec.landfall_day;

  for (long i = 0; i < spec.node_count; ++i) {
    archive.counties.push_back(synth_county_id(i));
  }

  for (long i = 0; i < spec.node_count; ++i) {
    const Tensor pattern = synth_pattern(spec, i);
    const Georef georef = synth_georef(spec, i);
    for (long day = 0; day < spec.num_days; ++day) {
      const double factor = synthetic_recovery_factor(spec, day);
      RasterTile tile;
      tile.county_id = archive.counties[static_cast<std::size_t>(i)];
      tile.date = spec.start_date + day;
      tile.georef = georef;
      tile.radiance = Tensor({spec.grid_size, spec.grid_size});
      double* d = tile.radiance.data();
      const double* p = pattern.data();
      const long npx = spec.grid_size * spec.grid_size;
      for (long px = 0; px < npx; ++px) {
        double v = p[px] * factor;
        if (spec.noise_sigma > 0.0) {
          Rng noise(hash_index(spec.seed, static_cast<std::uint64_t>(i),
                               static_cast<std::uint64_t>(day),
                               static_cast<std::uint64_t>(px)));
          v += spec.noise_sigma * noise.normal();
        }
        d[px] = v > 0.0 ? v : 0.0;
      }
      archive.insert(std::move(tile));
    }
  }
  return archive;
}

CompositeSet synthesize_composites(const SyntheticSpec& spec) {
  spec.validate();
  CompositeSet out;
  int y, m, d;
  spec.start_date.to_ymd(y, m, d);
  for (long i = 0; i < spec.node_count; ++i) {
    const Tensor pattern = synth_pattern(spec, i);
    const Georef georef = synth_georef(spec, i);
    int yy = y, mm = m;
    for (int k = 0; k < 3; ++k) {
      mm -= 1;
      if (mm < 1) {
        mm = 12;
        yy -= 1;
      }
      RasterTile tile;
      tile.county_id = synth_county_id(i);
      tile.date = Date::from_ymd(yy, mm, 1);
      tile.georef = georef;
      tile.radiance = pattern.clone();
      out.monthly[tile.county_id][tile.date.days()] = std::move(tile);
    }
  }
  return out;
}

std::string synthetic_county_geojson(const SyntheticSpec& spec) {
  const long cols = synth_cols(spec);
  json features = json::array();
  for (long i = 0; i < spec.node_count; ++i) {
    const long row = i / cols, col = i % cols;
    const double x0 = static_cast<double>(col), x1 = x0 + 1.0;
    const double y1 = -static_cast<double>(row), y0 = y1 - 1.0;
    json feature;
    feature["type"] = "Feature";
    feature["properties"] = {{"county_id", synth_county_id(i)}};
    feature["geometry"] = {
        {"type", "Polygon"},
        {"coordinates",
         {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}}};
    features.push_back(feature);
  }
  json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = features;
  return fc.dump(2);
}

}  // namespace nightcast
