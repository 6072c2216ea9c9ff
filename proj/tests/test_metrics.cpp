#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "nightcast/metrics.hpp"

using namespace nightcast;
using nightcast::testing::TempDir;

TEST_CASE("zero residuals give zero metrics") {
  const std::vector<double> v = {1.0, -2.0, 3.5, 0.0};
  CHECK(rmse(v, v) == 0.0);
  CHECK(mae(v, v) == 0.0);
  CHECK(mape(v, v) == 0.0);
}

TEST_CASE("hand-computed residual oracle") {
  const std::vector<double> pred = {0.0, 0.0};
  const std::vector<double> actual = {3.0, 4.0};
  CHECK(rmse(pred, actual) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(rmse(pred, actual) == doctest::Approx(3.5355339059327378).epsilon(1e-12));
  CHECK(mae(pred, actual) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("mape epsilon guard fires on zero actuals") {
  const std::vector<double> pred = {0.5};
  const std::vector<double> actual = {0.0};
  // term = |0.5| / max(0, 0.01) -> 50, times 100 -> 5000%
  CHECK(mape(pred, actual, 0.01) == doctest::Approx(5000.0).epsilon(1e-12));
  CHECK(std::isfinite(mape(pred, actual, 0.01)));
}

TEST_CASE("metric validation errors") {
  const std::vector<double> empty;
  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(rmse(empty, empty), ValidationError);
  CHECK_THROWS_AS(mae(one, two), ShapeError);
  CHECK_THROWS_AS(mape(two, one), ShapeError);
}

TEST_CASE("metrics agree with brute-force loops within 1e-9") {
  Rng rng(211);
  for (long n : {1L, 7L, 100L, 10000L}) {
    std::vector<double> pred(static_cast<std::size_t>(n));
    std::vector<double> actual(static_cast<std::size_t>(n));
    for (auto& x : pred) x = rng.uniform(-5.0, 5.0);
    for (auto& x : actual) x = rng.uniform(-5.0, 5.0);

    double sq = 0.0, ab = 0.0, ape = 0.0;
    for (long i = 0; i < n; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      sq += (pred[u] - actual[u]) * (pred[u] - actual[u]);
      ab += std::abs(pred[u] - actual[u]);
      ape += std::abs(pred[u] - actual[u]) / std::max(std::abs(actual[u]), 0.01);
    }
    CHECK(std::abs(rmse(pred, actual) - std::sqrt(sq / static_cast<double>(n))) < 1e-9);
    CHECK(std::abs(mae(pred, actual) - ab / static_cast<double>(n)) < 1e-9);
    CHECK(std::abs(mape(pred, actual) - 100.0 * ape / static_cast<double>(n)) < 1e-9);
  }
}

TEST_CASE("rmse >= mae on random residual sets") {
  Rng rng(223);
  for (int trial = 0; trial < 1000; ++trial) {
    const long n = 1 + static_cast<long>(rng.next_below(40));
    std::vector<double> pred(static_cast<std::size_t>(n));
    std::vector<double> actual(static_cast<std::size_t>(n));
    for (auto& x : pred) x = rng.uniform(-10.0, 10.0);
    for (auto& x : actual) x = rng.uniform(-10.0, 10.0);
    CHECK(rmse(pred, actual) >= mae(pred, actual) - 1e-12);
  }
}

namespace {

RasterTile tile_of(std::vector<double> values, long h = 2, long w = 2,
                   const std::string& county = "c0") {
  RasterTile t;
  t.county_id = county;
  t.date = Date::from_ymd(2022, 10, 1);
  t.radiance = Tensor::from({h, w}, std::move(values));
  return t;
}

}  // namespace

TEST_CASE("percent_of_normal oracle values") {
  RasterTile day = tile_of({10.0, 2.5, 5.0, 0.0});
  RasterTile c1 = tile_of({10.0, 10.0, 0.0, 0.0});
  RasterTile c2 = tile_of({10.0, 10.0, 0.0, 0.0});
  RasterTile c3 = tile_of({10.0, 10.0, 0.0, 0.0});
  OutageMap m = percent_of_normal(day, {&c1, &c2, &c3});
  CHECK(m.percent_normal[0] == doctest::Approx(100.0));  // 10 / 10
  CHECK(m.percent_normal[1] == doctest::Approx(25.0));   // 2.5 / 10
  CHECK(m.percent_normal[2] == doctest::Approx(100.0));  // zero baseline sentinel
  CHECK(m.percent_normal[3] == doctest::Approx(100.0));  // zero baseline sentinel
}

TEST_CASE("percent_of_normal validates shapes, counties and georefs") {
  RasterTile day = tile_of({1, 1, 1, 1});
  RasterTile other = tile_of({1, 1, 1, 1}, 2, 2, "c1");
  CHECK_THROWS_AS(percent_of_normal(day, {&other}), ValidationError);
  RasterTile big;
  big.county_id = "c0";
  big.radiance = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(percent_of_normal(day, {&big}), ValidationError);
  RasterTile shifted = tile_of({1, 1, 1, 1});
  shifted.georef.origin_x = 5.0;
  CHECK_THROWS_AS(percent_of_normal(day, {&shifted}), ValidationError);
  CHECK_THROWS_AS(percent_of_normal(day, {}), ValidationError);
}

TEST_CASE("percent_of_normal is scale-equivariant in the day tile") {
  Rng rng(227);
  RasterTile day;
  day.county_id = "c0";
  day.radiance = nightcast::testing::random_tensor({4, 4}, rng, 0.0, 20.0);
  RasterTile comp;
  comp.county_id = "c0";
  comp.radiance = nightcast::testing::random_tensor({4, 4}, rng, 0.5, 20.0);
  RasterTile doubled = day;
  doubled.radiance = day.radiance.clone();
  doubled.radiance.scale_(2.0);

  OutageMap a = percent_of_normal(day, {&comp});
  OutageMap b = percent_of_normal(doubled, {&comp});
  for (long i = 0; i < 16; ++i) {
    CHECK(b.percent_normal[i] == doctest::Approx(2.0 * a.percent_normal[i]).epsilon(1e-12));
  }
}

TEST_CASE("eq6 matches a brute-force per-pixel loop on random triples") {
  Rng rng(229);
  for (int trial = 0; trial < 100; ++trial) {
    const long h = 1 + static_cast<long>(rng.next_below(6));
    const long w = 1 + static_cast<long>(rng.next_below(6));
    RasterTile day;
    day.county_id = "c0";
    day.radiance = nightcast::testing::random_tensor({h, w}, rng, 0.0, 30.0);
    std::vector<RasterTile> comps(3);
    for (auto& c : comps) {
      c.county_id = "c0";
      c.radiance = nightcast::testing::random_tensor({h, w}, rng, 0.0, 30.0);
    }
    OutageMap m = percent_of_normal(day, {&comps[0], &comps[1], &comps[2]});
    for (long i = 0; i < h * w; ++i) {
      const double baseline = (comps[0].radiance[i] + comps[1].radiance[i] +
                               comps[2].radiance[i]) /
                              3.0;
      const double expect =
          baseline <= 1e-6 ? 100.0 : 100.0 * day.radiance[i] / baseline;
      CHECK(std::abs(m.percent_normal[i] - expect) < 1e-9);
    }
  }
}

TEST_CASE("rendering clamps and is deterministic") {
  OutageMap all_normal;
  all_normal.percent_normal = Tensor::full({8, 8}, 100.0);
  RgbImage green = render_outage_map(all_normal);
  const Rgb g = severity_color(100.0);
  for (long r = 0; r < 8; ++r) {
    for (long c = 0; c < 8; ++c) {
      CHECK(green.pixels[(r * green.width + c) * 3 + 0] == g.r);
      CHECK(green.pixels[(r * green.width + c) * 3 + 1] == g.g);
      CHECK(green.pixels[(r * green.width + c) * 3 + 2] == g.b);
    }
  }

  OutageMap all_out;
  all_out.percent_normal = Tensor::zeros({8, 8});
  RgbImage red = render_outage_map(all_out);
  const Rgb r0 = severity_color(0.0);
  CHECK(red.pixels[0] == r0.r);
  CHECK(red.pixels[1] == r0.g);
  CHECK(red.pixels[2] == r0.b);

  OutageMap over;
  over.percent_normal = Tensor::full({8, 8}, 150.0);
  CHECK(encode_png(render_outage_map(over)) ==
        encode_png(render_outage_map(all_normal)));  // 150 renders as 100
  CHECK(encode_png(render_outage_map(all_out)) ==
        encode_png(render_outage_map(all_out)));  // byte-deterministic
}

TEST_CASE("outage map tif/png round trip") {
  TempDir dir("maps");
  OutageMap m;
  m.county_id = "c0";
  m.date = Date::from_ymd(2022, 10, 2);
  m.percent_normal = Tensor::from({2, 2}, {0.0, 25.0, 75.0, 150.0});
  write_outage_tif(dir / "m.tif", m);
  write_outage_png(dir / "m.png", m);
  OutageMap back = read_outage_tif(dir / "m.tif");
  for (long i = 0; i < 4; ++i) {
    CHECK(back.percent_normal[i] == m.percent_normal[i]);
  }
  std::ifstream png(dir / "m.png", std::ios::binary);
  char sig[8];
  png.read(sig, 8);
  CHECK(static_cast<unsigned char>(sig[0]) == 0x89);
  CHECK(sig[1] == 'P');
}

TEST_CASE("metrics csv carries the table columns") {
  TempDir dir("csv");
  MetricReport r;
  r.case_name = "alpha";
  r.rmse = 0.43;
  r.mae = 0.20;
  r.mape = 146.94;
  r.num_windows = 53;
  write_metrics_csv(dir / "metrics.csv", {r}, "normalized");
  std::ifstream in(dir / "metrics.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "case,rmse,mae,mape,num_windows,space");
  CHECK(row.find("alpha,0.43,0.2,146.94,53,normalized") == 0);
}

namespace {

// A model whose prediction becomes the window target: evaluate_case's oracle
// option; exercised through the full path below.

}  // namespace

TEST_CASE("evaluate_case: oracle scores zero and persistence lags the event") {
  SyntheticSpec spec;
  spec.node_count = 2;
  spec.grid_size = 8;
  spec.num_days = 14;
  spec.landfall_day = 7;
  spec.depth = 0.9;
  spec.noise_sigma = 0.02;
  spec.event_id = "evt";

  std::vector<EventArchive> archives = {synthesize_event(spec)};
  {
    SyntheticSpec b = spec;
    b.event_id = "evt2";
    b.seed = 9;
    archives.push_back(synthesize_event(b));
    SyntheticSpec c = spec;
    c.event_id = "evt3";
    c.seed = 10;
    archives.push_back(synthesize_event(c));
  }
  CaseSplit split = make_case_split(archives, "evt", 3, 1, 0.0);
  std::vector<const GraphSignalWindow*> ptrs;
  for (const auto& w : split.train) ptrs.push_back(&w);
  const Normalizer norm = Normalizer::fit(ptrs, 0.99);

  ModelConfig mc;
  mc.codec.depth = 1;
  mc.codec.base_channels = 2;
  mc.codec.embedding_size = 4;
  mc.codec.input_h = mc.codec.input_w = 8;
  mc.temporal.size = 2;
  mc.stgnn.layers = 1;
  mc.stgnn.dilations = {1};
  mc.stgnn.residual_channels = 4;
  mc.stgnn.skip_channels = 4;
  mc.stgnn.node_embedding_dim = 2;
  mc.stgnn.input_width = 6;
  mc.stgnn.output_width = 4;
  mc.stgnn.use_static_supports = false;
  VstModel model(mc, 2, {}, 1);

  EvalOptions opts;
  opts.oracle = true;
  const CaseEvalResult oracle = evaluate_case(model, norm, split, nullptr, opts);
  CHECK(oracle.model.rmse == 0.0);
  CHECK(oracle.model.mae == 0.0);
  CHECK(oracle.model.mape == 0.0);
  CHECK(oracle.model.num_windows == static_cast<long>(split.test.size()));
  // persistence cannot be perfect across a blackout
  CHECK(oracle.persistence.rmse > 0.0);

  CaseSplit empty_split;
  empty_split.case_name = "evt";
  CHECK_THROWS_AS(evaluate_case(model, norm, empty_split, nullptr, opts),
                  ValidationError);
}

TEST_CASE("evaluate_case writes maps through the sink") {
  SyntheticSpec spec;
  spec.node_count = 2;
  spec.grid_size = 8;
  spec.num_days = 10;
  spec.landfall_day = 5;
  spec.event_id = "evt";
  std::vector<EventArchive> archives;
  for (int i = 0; i < 3; ++i) {
    SyntheticSpec s = spec;
    s.event_id = "evt" + std::to_string(i);
    s.seed = 42 + static_cast<std::uint64_t>(i);
    archives.push_back(synthesize_event(s));
  }
  CaseSplit split = make_case_split(archives, "evt0", 3, 1, 0.0);
  std::vector<const GraphSignalWindow*> ptrs;
  for (const auto& w : split.train) ptrs.push_back(&w);
  const Normalizer norm = Normalizer::fit(ptrs, 0.99);

  SyntheticSpec comp_spec = spec;
  comp_spec.event_id = "evt0";
  comp_spec.seed = 42;
  CompositeSet comps = synthesize_composites(comp_spec);

  ModelConfig mc;
  mc.codec.depth = 1;
  mc.codec.base_channels = 2;
  mc.codec.embedding_size = 4;
  mc.codec.input_h = mc.codec.input_w = 8;
  mc.temporal.size = 2;
  mc.stgnn.layers = 1;
  mc.stgnn.dilations = {1};
  mc.stgnn.residual_channels = 4;
  mc.stgnn.skip_channels = 4;
  mc.stgnn.node_embedding_dim = 2;
  mc.stgnn.input_width = 6;
  mc.stgnn.output_width = 4;
  mc.stgnn.use_static_supports = false;
  VstModel model(mc, 2, {}, 1);

  long maps = 0;
  EvalOptions opts;
  opts.oracle = true;
  evaluate_case(model, norm, split, &comps, opts,
                [&](const OutageMap& pred, const OutageMap& actual) {
                  CHECK(pred.county_id == actual.county_id);
                  CHECK(pred.date == actual.date);
                  CHECK(pred.percent_normal.all_finite());
                  // oracle predictions equal the actuals
                  for (long i = 0; i < pred.percent_normal.numel(); ++i) {
                    CHECK(pred.percent_normal[i] ==
                          doctest::Approx(actual.percent_normal[i]).epsilon(1e-9));
                  }
                  ++maps;
                });
  // 6 test windows x 2 counties
  CHECK(maps == static_cast<long>(split.test.size()) * 2);
}
