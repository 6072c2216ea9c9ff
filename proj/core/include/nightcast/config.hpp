#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nightcast/archive.hpp"
#include "nightcast/model.hpp"
#include "nightcast/trainer.hpp"

namespace nightcast {

// One experiment: where data lives, which events exist, which is held out,
// and every module's settings. Loaded from a JSON file; `--set a.b=c` flags
// override individual keys, and NIGHTCAST_DATA_ROOT overrides the data root.
struct ExperimentConfig {
  std::string data_root = "data";
  std::string output_root = "out";
  std::vector<std::string> events;
  std::string held_out;

  // ingest
  std::string product = "VNP46A2";
  long resize = 0;  // 0 = keep native tile resolution
  double fill_value = 65535.0;
  long window_s = 8;
  long horizon_t = 1;
  double norm_quantile = 0.99;

  // graph
  std::string graph_rule = "border";  // border | knn
  int graph_k = 4;
  std::string geojson_path;  // empty: use the synthetic county layout

  // remote archive (fetch)
  std::string archive_host;
  int archive_port = 80;
  std::string archive_base;
  std::string fixture_root;  // offline backend when set
  int fetch_attempts = 3;
  std::map<std::string, DateRange> event_dates;  // fetch ranges per event

  SyntheticSpec synthetic;
  std::map<std::string, nlohmann::json> synthetic_overrides;  // per event

  ModelConfig model;
  TrainConfig trainer;

  double mape_eps = 0.01;
  bool eval_raw_space = false;

  void validate() const;
  SyntheticSpec synthetic_for(const std::string& event_id) const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static ExperimentConfig load(const std::string& path,
                               const std::vector<std::string>& overrides = {});
};

// "a.b.c=value" -> patches j at /a/b/c with a bool/number/string guess.
void apply_override(nlohmann::json& j, const std::string& spec);

}  // namespace nightcast
