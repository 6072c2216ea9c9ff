#include "nightcast/config.hpp"

#include <cstdlib>
#include <fstream>

using nlohmann::json;

namespace nightcast {

void ExperimentConfig::validate() const {
  if (events.empty()) throw ConfigError("config: events list is empty");
  if (!held_out.empty()) {
    bool found = false;
    for (const auto& e : events) found = found || e == held_out;
    if (!found) {
      throw ConfigError("config: held_out '" + held_out +
                        "' is not in the events list");
    }
  }
  if (window_s < 1 || horizon_t < 1) {
    throw ConfigError("config: window_s and horizon_t must be >= 1");
  }
  if (graph_rule != "border" && graph_rule != "knn") {
    throw ConfigError("config: graph_rule must be 'border' or 'knn', got '" +
                      graph_rule + "'");
  }
  model.validate();
  trainer.validate();
}

SyntheticSpec ExperimentConfig::synthetic_for(const std::string& event_id) const {
  SyntheticSpec spec = synthetic;
  spec.event_id = event_id;
  // Distinct default noise stream per event; overrides may pin anything.
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i] == event_id) index = i;
  }
  spec.seed = synthetic.seed + index;
  spec.start_date = synthetic.start_date;
  auto it = synthetic_overrides.find(event_id);
  if (it != synthetic_overrides.end()) {
    const json& o = it->second;
    spec.num_days = o.value("num_days", spec.num_days);
    spec.landfall_day = o.value("landfall_day", spec.landfall_day);
    spec.depth = o.value("depth", spec.depth);
    spec.recovery_half_life_days =
        o.value("recovery_half_life_days", spec.recovery_half_life_days);
    spec.noise_sigma = o.value("noise_sigma", spec.noise_sigma);
    spec.seed = o.value("seed", spec.seed);
    if (o.contains("start_date")) {
      spec.start_date = Date::parse(o.at("start_date").get<std::string>());
    }
  }
  return spec;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("paths")) {
    c.data_root = j.at("paths").value("data_root", c.data_root);
    c.output_root = j.at("paths").value("output_root", c.output_root);
  }
  c.events = j.value("events", c.events);
  c.held_out = j.value("held_out", c.held_out);

  if (j.contains("ingest")) {
    const json& i = j.at("ingest");
    c.product = i.value("product", c.product);
    c.resize = i.value("resize", c.resize);
    c.fill_value = i.value("fill_value", c.fill_value);
    c.window_s = i.value("window_s", c.window_s);
    c.horizon_t = i.value("horizon_t", c.horizon_t);
    c.norm_quantile = i.value("norm_quantile", c.norm_quantile);
  }
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    c.graph_rule = g.value("rule", c.graph_rule);
    c.graph_k = g.value("k", c.graph_k);
    c.geojson_path = g.value("geojson", c.geojson_path);
  }
  if (j.contains("archive")) {
    const json& a = j.at("archive");
    c.archive_host = a.value("host", c.archive_host);
    c.archive_port = a.value("port", c.archive_port);
    c.archive_base = a.value("base_path", c.archive_base);
    c.fixture_root = a.value("fixture_root", c.fixture_root);
    c.fetch_attempts = a.value("attempts", c.fetch_attempts);
    if (a.contains("event_dates")) {
      for (const auto& [event_id, r] : a.at("event_dates").items()) {
        DateRange range;
        range.start = Date::parse(r.at("start").get<std::string>());
        range.end = Date::parse(r.at("end").get<std::string>());
        c.event_dates[event_id] = range;
      }
    }
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    c.synthetic.node_count = s.value("node_count", c.synthetic.node_count);
    c.synthetic.grid_size = s.value("grid_size", c.synthetic.grid_size);
    c.synthetic.num_days = s.value("num_days", c.synthetic.num_days);
    c.synthetic.landfall_day = s.value("landfall_day", c.synthetic.landfall_day);
    c.synthetic.depth = s.value("depth", c.synthetic.depth);
    c.synthetic.recovery_half_life_days = s.value(
        "recovery_half_life_days", c.synthetic.recovery_half_life_days);
    c.synthetic.noise_sigma = s.value("noise_sigma", c.synthetic.noise_sigma);
    c.synthetic.seed = s.value("seed", c.synthetic.seed);
    c.synthetic.pattern_seed = s.value("pattern_seed", c.synthetic.pattern_seed);
    if (s.contains("start_date")) {
      c.synthetic.start_date = Date::parse(s.at("start_date").get<std::string>());
    }
    if (s.contains("events")) {
      for (const auto& [event_id, o] : s.at("events").items()) {
        c.synthetic_overrides[event_id] = o;
      }
    }
  }
  c.model = model_config_from_json(j);
  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    c.trainer.batch_size = t.value("batch_size", c.trainer.batch_size);
    c.trainer.learning_rate = t.value("learning_rate", c.trainer.learning_rate);
    c.trainer.min_lr = t.value("min_lr", c.trainer.min_lr);
    c.trainer.epochs = t.value("epochs", c.trainer.epochs);
    c.trainer.seed = t.value("seed", c.trainer.seed);
    c.trainer.val_fraction = t.value("val_fraction", c.trainer.val_fraction);
    c.trainer.grad_clip = t.value("grad_clip", c.trainer.grad_clip);
    c.trainer.micro_batch = t.value("micro_batch", c.trainer.micro_batch);
    c.trainer.deterministic = t.value("deterministic", c.trainer.deterministic);
  }
  if (j.contains("eval")) {
    c.mape_eps = j.at("eval").value("mape_eps", c.mape_eps);
    c.eval_raw_space = j.at("eval").value("raw_space", c.eval_raw_space);
  }

  // Derived defaults: the codec works at the ingest resolution and the st-GNN
  // widths follow the embedding sizes unless pinned explicitly.
  if (c.resize > 0 && !(j.contains("codec") && j.at("codec").contains("input_h"))) {
    c.model.codec.input_h = c.resize;
    c.model.codec.input_w = c.resize;
  }
  if (!(j.contains("stgnn") && j.at("stgnn").contains("input_width"))) {
    c.model.stgnn.input_width = c.model.combined_width();
  }
  if (!(j.contains("stgnn") && j.at("stgnn").contains("output_width"))) {
    c.model.stgnn.output_width = c.model.codec.embedding_size;
  }
  if (!(j.contains("stgnn") && j.at("stgnn").contains("horizon"))) {
    c.model.stgnn.horizon = c.horizon_t;
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["paths"] = {{"data_root", data_root}, {"output_root", output_root}};
  j["events"] = events;
  j["held_out"] = held_out;
  j["ingest"] = {{"product", product},       {"resize", resize},
                 {"fill_value", fill_value}, {"window_s", window_s},
                 {"horizon_t", horizon_t},   {"norm_quantile", norm_quantile}};
  j["graph"] = {{"rule", graph_rule}, {"k", graph_k}, {"geojson", geojson_path}};
  j["archive"] = {{"host", archive_host},
                  {"port", archive_port},
                  {"base_path", archive_base},
                  {"fixture_root", fixture_root},
                  {"attempts", fetch_attempts}};
  if (!event_dates.empty()) {
    json dates;
    for (const auto& [event_id, range] : event_dates) {
      dates[event_id] = {{"start", range.start.to_string()},
                         {"end", range.end.to_string()}};
    }
    j["archive"]["event_dates"] = dates;
  }
  j["synthetic"] = {
      {"node_count", synthetic.node_count},
      {"grid_size", synthetic.grid_size},
      {"num_days", synthetic.num_days},
      {"landfall_day", synthetic.landfall_day},
      {"depth", synthetic.depth},
      {"recovery_half_life_days", synthetic.recovery_half_life_days},
      {"noise_sigma", synthetic.noise_sigma},
      {"seed", synthetic.seed},
      {"pattern_seed", synthetic.pattern_seed},
      {"start_date", synthetic.start_date.to_string()}};
  if (!synthetic_overrides.empty()) {
    json o;
    for (const auto& [event_id, ov] : synthetic_overrides) o[event_id] = ov;
    j["synthetic"]["events"] = o;
  }
  const json m = model_config_to_json(model);
  j["codec"] = m.at("codec");
  j["temporal"] = m.at("temporal");
  j["stgnn"] = m.at("stgnn");
  j["trainer"] = {{"batch_size", trainer.batch_size},
                  {"learning_rate", trainer.learning_rate},
                  {"min_lr", trainer.min_lr},
                  {"epochs", trainer.epochs},
                  {"seed", trainer.seed},
                  {"val_fraction", trainer.val_fraction},
                  {"grad_clip", trainer.grad_clip},
                  {"micro_batch", trainer.micro_batch},
                  {"deterministic", trainer.deterministic}};
  j["eval"] = {{"mape_eps", mape_eps}, {"raw_space", eval_raw_space}};
  return j;
}

void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value, got '" +
                      spec + "'");
  }
  std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  std::string pointer = "/";
  for (char ch : key) pointer += ch == '.' ? '/' : ch;

  json parsed;
  if (value == "true") {
    parsed = true;
  } else if (value == "false") {
    parsed = false;
  } else {
    try {
      std::size_t pos = 0;
      if (value.find('.') != std::string::npos ||
          value.find('e') != std::string::npos ||
          value.find('E') != std::string::npos) {
        parsed = std::stod(value, &pos);
      } else {
        parsed = static_cast<std::int64_t>(std::stoll(value, &pos));
      }
      if (pos != value.size()) parsed = value;
    } catch (const std::exception&) {
      parsed = value;
    }
  }
  try {
    j[json::json_pointer(pointer)] = parsed;
  } catch (const json::exception& e) {
    throw ConfigError("cannot apply override '" + spec + "': " + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  ExperimentConfig c = from_json(j);
  if (const char* env = std::getenv("NIGHTCAST_DATA_ROOT"); env && *env) {
    c.data_root = env;
  }
  c.validate();
  return c;
}

}  // namespace nightcast
