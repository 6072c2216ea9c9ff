#include <doctest.h>

#include "helpers.hpp"
#include "nightcast/windows.hpp"

using namespace nightcast;

namespace {

EventArchive synth(long days, long nodes = 3, long grid = 8,
                   double noise = 0.02) {
  SyntheticSpec spec;
  spec.node_count = nodes;
  spec.grid_size = grid;
  spec.num_days = days;
  spec.landfall_day = days / 2;
  spec.noise_sigma = noise;
  spec.event_id = "evt";
  return synthesize_event(spec);
}

}  // namespace

TEST_CASE("window counts match num_dates - S - T + 1") {
  EventArchive a61 = synth(61);
  CHECK(build_windows(a61, 8, 1).size() == 53);

  EventArchive a10 = synth(10);
  CHECK(build_windows(a10, 9, 1).size() == 1);

  EventArchive a5 = synth(5);
  CHECK_THROWS_AS(build_windows(a5, 8, 1), ValidationError);
  CHECK_THROWS_AS(build_windows(a61, 0, 1), ValidationError);
  CHECK_THROWS_AS(build_windows(a61, 8, 0), ValidationError);
}

TEST_CASE("window count property over random S, T") {
  Rng rng(31);
  EventArchive a = synth(20, 2, 4, 0.0);
  for (int trial = 0; trial < 25; ++trial) {
    const long s = 1 + static_cast<long>(rng.next_below(10));
    const long t = 1 + static_cast<long>(rng.next_below(5));
    if (s + t > 20) continue;
    const auto windows = build_windows(a, s, t);
    CHECK(static_cast<long>(windows.size()) == 20 - s - t + 1);
  }
}

TEST_CASE("windows are chronological, consecutive and aligned") {
  EventArchive a = synth(14);
  const auto windows = build_windows(a, 4, 2);
  REQUIRE(windows.size() == 9);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    REQUIRE(w.input_dates.size() == 4);
    REQUIRE(w.target_dates.size() == 2);
    CHECK(w.input_dates.front() == a.range.start + static_cast<long>(i));
    for (std::size_t k = 1; k < w.input_dates.size(); ++k) {
      CHECK(w.input_dates[k] - w.input_dates[k - 1] == 1);
    }
    // targets immediately follow inputs
    CHECK(w.target_dates[0] - w.input_dates.back() == 1);
    CHECK(w.target_dates[1] - w.target_dates[0] == 1);
    CHECK(w.inputs.shape() == Shape{3, 4, 1, 8, 8});
    CHECK(w.targets.shape() == Shape{3, 2, 1, 8, 8});
    CHECK(w.event_id == "evt");
  }
}

TEST_CASE("window tensors match the archive tiles in node order") {
  EventArchive a = synth(10, 2, 4, 0.0);
  const auto windows = build_windows(a, 3, 1);
  const auto& w = windows[2];  // inputs days 2,3,4; target day 5
  for (long v = 0; v < 2; ++v) {
    const std::string& county = a.counties[static_cast<std::size_t>(v)];
    const RasterTile* tile = a.find(county, a.range.start + 2);
    for (long i = 0; i < 16; ++i) {
      CHECK(w.inputs[(v * 3 + 0) * 16 + i] == tile->radiance[i]);
    }
    const RasterTile* target = a.find(county, a.range.start + 5);
    for (long i = 0; i < 16; ++i) {
      CHECK(w.targets[v * 16 + i] == target->radiance[i]);
    }
  }
}

TEST_CASE("build_windows resizes on ingestion") {
  EventArchive a = synth(10, 2, 8, 0.0);
  const auto windows = build_windows(a, 3, 1, 4);
  CHECK(windows[0].inputs.shape() == Shape{2, 3, 1, 4, 4});
  CHECK(windows[0].targets.shape() == Shape{2, 1, 1, 4, 4});
}

TEST_CASE("build_windows refuses archives with holes") {
  EventArchive a = synth(10);
  a.tiles["county_01"].erase((a.range.start + 4).days());
  CHECK_THROWS_WITH_AS(build_windows(a, 3, 1) /*missing tile*/,
                       doctest::Contains("gap policy"), ValidationError);
}

TEST_CASE("normalizer scales into [0,1] and inverts") {
  EventArchive a = synth(12, 2, 8, 0.05);
  auto windows = build_windows(a, 4, 1);
  std::vector<const GraphSignalWindow*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  const Normalizer norm = Normalizer::fit(ptrs, 0.99);
  CHECK(norm.scale > 0.0);

  const Tensor n = norm.normalize(windows[0].inputs);
  for (long i = 0; i < n.numel(); ++i) {
    CHECK(n[i] >= 0.0);
    CHECK(n[i] <= 1.0);
  }
  const Tensor d = norm.denormalize(n);
  for (long i = 0; i < d.numel(); ++i) {
    // round-trip is exact wherever no clipping applied
    if (windows[0].inputs[i] <= norm.scale) {
      CHECK(d[i] == doctest::Approx(windows[0].inputs[i]).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(Normalizer::fit({}, 0.99), ValidationError);
  CHECK_THROWS_AS(Normalizer::fit(ptrs, 0.0), ValidationError);
}

TEST_CASE("day_index is relative to the event start") {
  EventArchive a = synth(10);
  const auto windows = build_windows(a, 3, 1);
  const auto& w = windows[4];
  CHECK(w.day_index(w.input_dates[0]) == 4);
  CHECK(w.day_index(w.target_dates[0]) == 7);
}
