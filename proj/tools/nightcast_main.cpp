#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "nightcast/config.hpp"
#include "nightcast/graph.hpp"
#include "nightcast/metrics.hpp"

namespace fs = std::filesystem;
using namespace nightcast;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set trainer.epochs=10");
}

ExperimentConfig load_config(const CommonArgs& args) {
  return ExperimentConfig::load(args.config_path, args.overrides);
}

std::map<std::string, Geometry> load_geometries(const ExperimentConfig& cfg) {
  if (!cfg.geojson_path.empty()) return load_geojson(cfg.geojson_path);
  const fs::path generated = fs::path(cfg.data_root) / "counties.geojson";
  if (fs::exists(generated)) return load_geojson(generated.string());
  return parse_geojson(synthetic_county_geojson(cfg.synthetic_for(
      cfg.events.empty() ? "synthetic" : cfg.events.front())));
}

AdjacencyMatrix build_graph(const ExperimentConfig& cfg) {
  const auto geometries = load_geometries(cfg);
  const AdjacencyRule rule = cfg.graph_rule == "border"
                                 ? AdjacencyRule::border()
                                 : AdjacencyRule::knn(cfg.graph_k);
  return build_static_adjacency(geometries, rule);
}

std::vector<EventArchive> load_event_archives(const ExperimentConfig& cfg) {
  std::vector<EventArchive> archives;
  for (const std::string& event_id : cfg.events) {
    archives.push_back(load_archive(cfg.data_root, event_id));
  }
  return archives;
}

int cmd_synth(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const fs::path geojson = fs::path(cfg.data_root) / "counties.geojson";
  if (!fs::exists(geojson) || args.force) {
    fs::create_directories(geojson.parent_path());
    std::ofstream out(geojson);
    out << synthetic_county_geojson(cfg.synthetic_for(cfg.events.front()));
  }
  for (const std::string& event_id : cfg.events) {
    const SyntheticSpec spec = cfg.synthetic_for(event_id);
    const fs::path manifest =
        fs::path(cfg.data_root) / event_id / "manifest.json";
    if (fs::exists(manifest) && !args.force) {
      std::cout << event_id << ": already present, skipping (use --force)\n";
      continue;
    }
    EventArchive archive = synthesize_event(spec);
    save_archive(archive, cfg.data_root);
    save_composites(synthesize_composites(spec), cfg.data_root, event_id);
    std::cout << event_id << ": " << archive.tile_count() << " tiles over "
              << archive.range.num_days() << " days, landfall "
              << archive.landfall->to_string() << "\n";
  }
  return 0;
}

int cmd_fetch(const CommonArgs& args, const std::string& event_id) {
  const ExperimentConfig cfg = load_config(args);
  bool known = false;
  for (const std::string& e : cfg.events) known = known || e == event_id;
  if (!known) {
    throw ConfigError("unknown event '" + event_id +
                      "'; add it to the config's events list");
  }
  auto it = cfg.event_dates.find(event_id);
  if (it == cfg.event_dates.end()) {
    throw ConfigError("no archive.event_dates entry for '" + event_id + "'");
  }

  const auto geometries = load_geometries(cfg);
  std::map<std::string, BoundingBox> bboxes;
  for (const auto& [county, geom] : geometries) {
    BoundingBox box;
    bool first = true;
    auto extend = [&](const Point& p) {
      if (first) {
        box = {p.x, p.y, p.x, p.y};
        first = false;
      } else {
        box.min_lon = std::min(box.min_lon, p.x);
        box.min_lat = std::min(box.min_lat, p.y);
        box.max_lon = std::max(box.max_lon, p.x);
        box.max_lat = std::max(box.max_lat, p.y);
      }
    };
    if (std::holds_alternative<Polygon>(geom)) {
      for (const auto& ring : std::get<Polygon>(geom).rings) {
        for (const Point& p : ring) extend(p);
      }
    } else {
      const Point& p = std::get<Point>(geom);
      extend({p.x - 0.25, p.y - 0.25});
      extend({p.x + 0.25, p.y + 0.25});
    }
    bboxes[county] = box;
  }

  std::unique_ptr<ArchiveBackend> backend;
  if (!cfg.fixture_root.empty()) {
    backend = std::make_unique<DirectoryBackend>(cfg.fixture_root);
  } else if (!cfg.archive_host.empty()) {
    backend = std::make_unique<HttpBackend>(cfg.archive_host, cfg.archive_port,
                                            cfg.archive_base, cfg.fetch_attempts);
  } else {
    throw ConfigError(
        "no archive source configured: set archive.fixture_root or archive.host");
  }

  EventArchive archive =
      fetch_event(*backend, cfg.product, event_id, it->second, bboxes);
  save_archive(archive, cfg.data_root, /*skip_existing=*/!args.force);
  std::cout << event_id << ": " << archive.tile_count() << " tiles, "
            << archive.gaps.size() << " gaps recorded\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  if (cfg.held_out.empty()) {
    throw ConfigError("train: config needs held_out (or --set held_out=...)");
  }
  const auto archives = load_event_archives(cfg);
  CaseSplit split = make_case_split(archives, cfg.held_out, cfg.window_s,
                                    cfg.horizon_t, cfg.trainer.val_fraction,
                                    cfg.resize);
  std::vector<const GraphSignalWindow*> train_ptr;
  for (const auto& w : split.train) train_ptr.push_back(&w);
  const Normalizer norm = Normalizer::fit(train_ptr, cfg.norm_quantile);

  const AdjacencyMatrix adjacency = build_graph(cfg);
  if (adjacency.node_order != archives.front().counties) {
    throw ValidationError(
        "county geometries do not match the archives' county set");
  }
  auto [forward, backward] = transition_pair(adjacency);

  VstModel model(cfg.model, adjacency.size(), {forward, backward},
                 cfg.trainer.seed);
  std::cout << "training case '" << cfg.held_out << "': " << split.train.size()
            << " train / " << split.val.size() << " val / " << split.test.size()
            << " test windows, normalizer scale " << norm.scale << "\n";

  const TrainResult result = train(model, split, cfg.trainer, norm);

  const fs::path case_dir = fs::path(cfg.output_root) / cfg.held_out;
  write_history_csv((case_dir / "history.csv").string(), result.history);
  write_adjacency_csv((case_dir / "static_adjacency.csv").string(), adjacency);
  write_matrix_csv((case_dir / "adaptive_adjacency.csv").string(),
                   model.stgnn.adaptive_snapshot(adjacency.node_order));

  nlohmann::json extra;
  extra["held_out"] = cfg.held_out;
  extra["window_s"] = cfg.window_s;
  extra["horizon_t"] = cfg.horizon_t;
  extra["resize"] = cfg.resize;
  extra["best_epoch"] = result.best_epoch;
  extra["events"] = cfg.events;
  Checkpoint ckpt = make_checkpoint(model, norm, adjacency.node_order, extra);
  const fs::path ckpt_path = case_dir / "checkpoint.nck";
  save_checkpoint(ckpt_path.string(), ckpt);
  std::cout << "best epoch " << result.best_epoch << " (val mse "
            << result.best_val << "); checkpoint at " << ckpt_path.string()
            << "\n";
  return 0;
}

// Rebuilds the held-out event's windows the way the checkpoint was trained.
CaseSplit test_split_for(const ExperimentConfig& cfg, const Checkpoint& ckpt) {
  const std::string held = ckpt.meta.at("held_out").get<std::string>();
  const long window_s = ckpt.meta.at("window_s").get<long>();
  const long horizon_t = ckpt.meta.at("horizon_t").get<long>();
  const long resize = ckpt.meta.value("resize", 0L);
  EventArchive archive = load_archive(cfg.data_root, held);
  CaseSplit split;
  split.case_name = held;
  split.test =
      build_windows(apply_gap_policy(archive), window_s, horizon_t, resize);
  return split;
}

int cmd_predict(const CommonArgs& args, const std::string& ckpt_path) {
  const ExperimentConfig cfg = load_config(args);
  if (!fs::exists(ckpt_path)) {
    throw IoError("missing checkpoint file: " + ckpt_path);
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const VstModel model = model_from_checkpoint(ckpt);
  const Normalizer norm = normalizer_from_checkpoint(ckpt);
  const auto node_order = node_order_from_checkpoint(ckpt);
  CaseSplit split = test_split_for(cfg, ckpt);

  const std::vector<Tensor> preds = predict(model, norm, split.test);
  const fs::path out_dir =
      fs::path(cfg.output_root) / split.case_name / "pred";

  // Georefs for predictions come from the archive tiles at model resolution.
  EventArchive archive = load_archive(cfg.data_root, split.case_name);
  std::map<std::string, Georef> georefs;
  for (const std::string& county : archive.counties) {
    const RasterTile* t = archive.find(county, archive.range.start);
    if (t) {
      RasterTile r = *t;
      const long resize = ckpt.meta.value("resize", 0L);
      if (resize > 0) r = resize_tile(r, resize, resize);
      georefs[county] = r.georef;
    }
  }

  long written = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const GraphSignalWindow& w = split.test[i];
    const Shape s = preds[i].shape();
    const long V = s[0], T = s[1], H = s[3], W = s[4];
    for (long v = 0; v < V; ++v) {
      for (long t = 0; t < T; ++t) {
        RasterTile tile;
        tile.county_id = node_order[static_cast<std::size_t>(v)];
        tile.date = w.target_dates[static_cast<std::size_t>(t)];
        tile.georef = georefs.count(tile.county_id) ? georefs[tile.county_id]
                                                    : Georef{};
        tile.radiance = Tensor({H, W});
        std::copy_n(preds[i].data() + (v * T + t) * H * W, H * W,
                    tile.radiance.data());
        const fs::path p =
            out_dir / tile.county_id / (tile.date.to_string() + ".tif");
        write_tile(p.string(), tile);
        ++written;
      }
    }
  }
  std::cout << "wrote " << written << " predicted rasters under "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path, bool oracle) {
  const ExperimentConfig cfg = load_config(args);
  if (!fs::exists(ckpt_path)) {
    throw IoError("missing checkpoint file: " + ckpt_path);
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const VstModel model = model_from_checkpoint(ckpt);
  const Normalizer norm = normalizer_from_checkpoint(ckpt);
  CaseSplit split = test_split_for(cfg, ckpt);

  CompositeSet composites = load_composites(cfg.data_root, split.case_name);
  EvalOptions opts;
  opts.mape_eps = cfg.mape_eps;
  opts.raw_space = cfg.eval_raw_space;
  opts.oracle = oracle;

  const fs::path case_dir = fs::path(cfg.output_root) / split.case_name;
  const fs::path maps_dir = case_dir / "maps";
  MapSink sink = nullptr;
  if (!composites.monthly.empty()) {
    sink = [&](const OutageMap& pred, const OutageMap& actual) {
      const std::string base = pred.county_id + "/" + pred.date.to_string();
      write_outage_tif((maps_dir / (base + "_pred.tif")).string(), pred);
      write_outage_png((maps_dir / (base + "_pred.png")).string(), pred);
      write_outage_tif((maps_dir / (base + "_actual.tif")).string(), actual);
      write_outage_png((maps_dir / (base + "_actual.png")).string(), actual);
    };
  } else {
    log_warn("no monthly composites found; skipping outage maps");
  }

  const CaseEvalResult result = evaluate_case(
      model, norm, split, composites.monthly.empty() ? nullptr : &composites,
      opts, sink);

  MetricReport persistence = result.persistence;
  persistence.case_name += "-persistence";
  write_metrics_csv((case_dir / "metrics.csv").string(),
                    {result.model, persistence},
                    opts.raw_space ? "radiance" : "normalized");
  std::printf("%-24s rmse %.4f  mae %.4f  mape %.2f%%  (%ld windows)\n",
              result.model.case_name.c_str(), result.model.rmse,
              result.model.mae, result.model.mape, result.model.num_windows);
  std::printf("%-24s rmse %.4f  mae %.4f  mape %.2f%%\n",
              persistence.case_name.c_str(), persistence.rmse, persistence.mae,
              persistence.mape);
  return 0;
}

int cmd_render(const std::string& maps_dir) {
  if (!fs::exists(maps_dir)) {
    throw IoError("missing maps directory: " + maps_dir);
  }
  long rendered = 0;
  for (const auto& entry : fs::recursive_directory_iterator(maps_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".tif") continue;
    OutageMap map = read_outage_tif(entry.path().string());
    fs::path png = entry.path();
    png.replace_extension(".png");
    write_outage_png(png.string(), map);
    ++rendered;
  }
  std::cout << "rendered " << rendered << " maps under " << maps_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nighttime-lights forecasting and outage severity mapping"};
  app.require_subcommand(1);

  CommonArgs synth_args, fetch_args, train_args, predict_args, eval_args;
  std::string fetch_event_id, predict_ckpt, eval_ckpt, render_dir;
  bool eval_oracle = false;

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic event archives");
  add_common(synth, synth_args);
  synth->add_flag("--force", synth_args.force, "overwrite existing archives");

  CLI::App* fetch = app.add_subcommand("fetch", "fetch one event's tiles into the data root");
  add_common(fetch, fetch_args);
  fetch->add_option("--event", fetch_event_id, "event id")->required();
  fetch->add_flag("--force", fetch_args.force, "re-download tiles that already exist");

  CLI::App* train_cmd = app.add_subcommand("train", "train on all events except held_out");
  add_common(train_cmd, train_args);

  CLI::App* predict_cmd = app.add_subcommand("predict", "write predicted rasters for the held-out event");
  add_common(predict_cmd, predict_args);
  predict_cmd->add_option("--checkpoint", predict_ckpt, "checkpoint file")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "metrics and outage maps for the held-out event");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_flag("--oracle", eval_oracle,
                     "score the targets against themselves (pipeline upper bound)");

  CLI::App* render_cmd = app.add_subcommand("render", "re-render PNGs from percent-of-normal GeoTIFFs");
  render_cmd->add_option("--maps-dir", render_dir, "directory of _pred/_actual tifs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (fetch->parsed()) return cmd_fetch(fetch_args, fetch_event_id);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (predict_cmd->parsed()) return cmd_predict(predict_args, predict_ckpt);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_oracle);
    if (render_cmd->parsed()) return cmd_render(render_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
