#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "nightcast/metrics.hpp"
#include "nightcast/trainer.hpp"

using namespace nightcast;
using nightcast::testing::TempDir;

namespace {

SyntheticSpec event_spec(const std::string& id, std::uint64_t seed,
                         long days = 61, long nodes = 3, long grid = 8) {
  SyntheticSpec spec;
  spec.node_count = nodes;
  spec.grid_size = grid;
  spec.num_days = days;
  spec.landfall_day = days / 2;
  spec.depth = 0.8;
  spec.noise_sigma = 0.05;
  spec.seed = seed;
  spec.event_id = id;
  return spec;
}

std::vector<EventArchive> three_events(long days = 61, long nodes = 3,
                                       long grid = 8) {
  return {synthesize_event(event_spec("alpha", 1, days, nodes, grid)),
          synthesize_event(event_spec("bravo", 2, days, nodes, grid)),
          synthesize_event(event_spec("charlie", 3, days, nodes, grid))};
}

ModelConfig tiny_model(long grid = 8) {
  ModelConfig cfg;
  cfg.codec.depth = 2;
  cfg.codec.base_channels = 4;
  cfg.codec.embedding_size = 8;
  cfg.codec.input_h = cfg.codec.input_w = grid;
  cfg.temporal.size = 4;
  cfg.stgnn.layers = 2;
  cfg.stgnn.dilations = {1, 2};
  cfg.stgnn.residual_channels = 8;
  cfg.stgnn.skip_channels = 8;
  cfg.stgnn.diffusion_steps = 1;
  cfg.stgnn.node_embedding_dim = 3;
  cfg.stgnn.horizon = 1;
  cfg.stgnn.input_width = 12;
  cfg.stgnn.output_width = 8;
  return cfg;
}

std::vector<Tensor> grid_supports(long nodes) {
  SyntheticSpec spec;
  spec.node_count = nodes;
  const auto geoms = parse_geojson(synthetic_county_geojson(spec));
  AdjacencyMatrix adj = build_static_adjacency(geoms, AdjacencyRule::border());
  auto [fwd, bwd] = transition_pair(adj);
  return {fwd, bwd};
}

Normalizer fit_norm(const CaseSplit& split) {
  std::vector<const GraphSignalWindow*> ptrs;
  for (const auto& w : split.train) ptrs.push_back(&w);
  return Normalizer::fit(ptrs, 0.99);
}

}  // namespace

TEST_CASE("make_case_split sizes for three 61-day events") {
  const auto archives = three_events();
  CaseSplit split = make_case_split(archives, "alpha", 8, 1, 0.3);
  CHECK(split.case_name == "alpha");
  CHECK(split.test.size() == 53);
  // two 53-window events pool to 106; floor(0.3 * 106) = 31 validation windows
  CHECK(split.val.size() == 31);
  CHECK(split.train.size() == 75);

  // boundary: no validation set. Note: total train windows from two 61-day
  // events is 106 (not 118); 61 days with S=8, T=1 yields 53 windows per event.
  CaseSplit no_val = make_case_split(archives, "alpha", 8, 1, 0.0);
  CHECK(no_val.val.size() == 0);
  CHECK(no_val.train.size() == 106);

  CHECK_THROWS_AS(make_case_split(archives, "nosuch", 8, 1, 0.3),
                  ValidationError);
  std::vector<EventArchive> two(archives.begin(), archives.begin() + 2);
  CHECK_THROWS_AS(make_case_split(two, "alpha", 8, 1, 0.3), ValidationError);
}

TEST_CASE("67-day training events reproduce the 83/35/53 split sizes") {
  // 30 days before a multi-day event plus 30 after lands at 67 days for a
  // 7-day storm; two such events give 59 + 59 = 118 train+val windows and a
  // 61-day held-out event gives 53 test windows.
  std::vector<EventArchive> archives = {
      synthesize_event(event_spec("alpha", 1, 61)),
      synthesize_event(event_spec("bravo", 2, 67)),
      synthesize_event(event_spec("charlie", 3, 67))};
  CaseSplit split = make_case_split(archives, "alpha", 8, 1, 0.3);
  CHECK(split.test.size() == 53);
  CHECK(split.val.size() == 35);
  CHECK(split.train.size() == 83);
}

TEST_CASE("the three leave-one-out test sets partition all windows") {
  const auto archives = three_events(20);
  std::size_t total = 0;
  std::vector<std::string> seen;
  for (const std::string& held : {"alpha", "bravo", "charlie"}) {
    CaseSplit split = make_case_split(archives, held, 4, 1, 0.25);
    total += split.test.size();
    for (const auto& w : split.test) {
      CHECK(w.event_id == held);
      seen.push_back(w.event_id + "/" + w.input_dates[0].to_string());
    }
    CHECK(split.test.size() == 20 - 4 - 1 + 1);
    // train/val never leak the held-out event
    for (const auto& w : split.train) CHECK(w.event_id != held);
    for (const auto& w : split.val) CHECK(w.event_id != held);
    // validation windows are the chronological tail of each event
    for (const auto& wv : split.val) {
      for (const auto& wt : split.train) {
        if (wt.event_id == wv.event_id) {
          CHECK(wt.input_dates[0] < wv.input_dates[0]);
        }
      }
    }
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::unique(seen.begin(), seen.end()) == seen.end());
  CHECK(total == 3 * 16);
}

TEST_CASE("training overfits a single window") {
  const auto archives = three_events(10, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.0);
  split.train.resize(1);
  split.val = split.train;

  const Normalizer norm = fit_norm(split);
  VstModel model(tiny_model(), 2, grid_supports(2), 42);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.micro_batch = 1;
  cfg.epochs = 250;
  cfg.learning_rate = 5e-3;
  cfg.min_lr = 1e-4;
  const TrainResult result = train(model, split, cfg, norm);
  CHECK(result.history.back().train_mse < 1e-3);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto archives = three_events(14, 2, 8);
  auto run = [&]() {
    CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.3);
    const Normalizer norm = fit_norm(split);
    VstModel model(tiny_model(), 2, grid_supports(2), 42);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    return train(model, split, cfg, norm).history;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(a[0].train_mse == b[0].train_mse);  // identical epoch-0 loss
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train_mse == b[i].train_mse);
    CHECK(a[i].val_mse == b[i].val_mse);
    CHECK(a[i].lr == b[i].lr);
  }
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto archives = three_events(10, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.0);
  split.train.resize(2);
  const Normalizer norm = fit_norm(split);
  VstModel model(tiny_model(), 2, grid_supports(2), 7);
  std::vector<Tensor> before;
  for (Param* p : model.parameters()) before.push_back(p->value.clone());
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  train(model, split, cfg, norm);
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (long j = 0; j < before[i].numel(); ++j) {
      CHECK(params[i]->value[j] == before[i][j]);
    }
  }
}

TEST_CASE("loss decreases over the first epochs for most seeds") {
  const auto archives = three_events(12, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.0);
  const Normalizer norm = fit_norm(split);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    VstModel model(tiny_model(), 2, grid_supports(2), seed);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 5;
    const TrainResult r = train(model, split, cfg, norm);
    if (r.history.back().train_mse < r.history.front().train_mse) ++improved;
  }
  CHECK(improved >= 9);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  const auto archives = three_events(10, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.0);
  const Normalizer norm = fit_norm(split);
  VstModel model(tiny_model(), 2, grid_supports(2), 42);
  model.parameters()[0]->value[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(model, split, cfg, norm);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("parameter norms") != std::string::npos);
  }
}

TEST_CASE("checkpoint round-trip preserves predictions exactly") {
  TempDir dir("ckpt");
  const auto archives = three_events(12, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.3);
  const Normalizer norm = fit_norm(split);
  VstModel model(tiny_model(), 2, grid_supports(2), 42);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  train(model, split, cfg, norm);

  const std::vector<Tensor> before = predict(model, norm, split.test);

  Checkpoint ckpt = make_checkpoint(model, norm, archives[0].counties,
                                    {{"held_out", "charlie"}});
  save_checkpoint(dir / "model.nck", ckpt);
  const Checkpoint loaded = load_checkpoint(dir / "model.nck");
  CHECK(loaded.meta.at("held_out") == "charlie");
  CHECK(node_order_from_checkpoint(loaded) == archives[0].counties);

  const VstModel restored = model_from_checkpoint(loaded);
  const Normalizer norm2 = normalizer_from_checkpoint(loaded);
  CHECK(norm2.scale == norm.scale);
  const std::vector<Tensor> after = predict(restored, norm2, split.test);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (long j = 0; j < before[i].numel(); ++j) {
      CHECK(std::abs(before[i][j] - after[i][j]) < 1e-6);
    }
  }
}

TEST_CASE("predict is pure and handles empty input") {
  const auto archives = three_events(10, 2, 8);
  CaseSplit split = make_case_split(archives, "charlie", 3, 1, 0.0);
  const Normalizer norm = fit_norm(split);
  VstModel model(tiny_model(), 2, grid_supports(2), 42);

  CHECK(predict(model, norm, {}).empty());

  const auto a = predict(model, norm, {split.test[0]});
  const auto b = predict(model, norm, {split.test[0]});
  for (long i = 0; i < a[0].numel(); ++i) CHECK(a[0][i] == b[0][i]);
  CHECK(a[0].shape() == Shape{2, 1, 1, 8, 8});
}

TEST_CASE("history csv format") {
  TempDir dir("hist");
  write_history_csv(dir / "history.csv",
                    {{0, 0.5, 0.6, 0.001}, {1, 0.4, 0.55, 0.0009}});
  std::ifstream in(dir / "history.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_mse,val_mse,lr");
  std::getline(in, line);
  CHECK(line.substr(0, 2) == "0,");
}
