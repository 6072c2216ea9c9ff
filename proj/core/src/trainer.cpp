#include "nightcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

namespace nightcast {

CaseSplit make_case_split(const std::vector<EventArchive>& archives,
                          const std::string& held_out, long window_s,
                          long horizon_t, double val_fraction, long resize) {
  if (archives.size() != 3) {
    throw ValidationError("make_case_split: expected exactly 3 events, got " +
                          std::to_string(archives.size()));
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ValidationError("make_case_split: val_fraction must be in [0, 1)");
  }
  const EventArchive* held = nullptr;
  for (const EventArchive& a : archives) {
    if (a.event_id == held_out) held = &a;
  }
  if (!held) {
    std::string names;
    for (const EventArchive& a : archives) names += " '" + a.event_id + "'";
    throw ValidationError("make_case_split: unknown held-out event '" +
                          held_out + "'; events are:" + names);
  }
  for (const EventArchive& a : archives) {
    if (a.counties != archives.front().counties) {
      throw ValidationError("make_case_split: event '" + a.event_id +
                            "' has a different county set");
    }
  }

  CaseSplit split;
  split.case_name = held_out;
  split.test = build_windows(apply_gap_policy(*held), window_s, horizon_t, resize);

  // Pool the training events' window counts, take floor(val_fraction * total)
  // validation windows, and apportion by largest remainder.
  std::vector<std::vector<GraphSignalWindow>> event_windows;
  for (const EventArchive& a : archives) {
    if (a.event_id == held_out) continue;
    event_windows.push_back(
        build_windows(apply_gap_policy(a), window_s, horizon_t, resize));
  }
  long total = 0;
  for (const auto& w : event_windows) total += static_cast<long>(w.size());
  const long val_total =
      static_cast<long>(std::floor(val_fraction * static_cast<double>(total) + 1e-9));

  std::vector<long> quota(event_windows.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  long assigned = 0;
  for (std::size_t e = 0; e < event_windows.size(); ++e) {
    const double exact =
        val_fraction * static_cast<double>(event_windows[e].size());
    quota[e] = static_cast<long>(std::floor(exact + 1e-9));
    assigned += quota[e];
    remainders.emplace_back(-(exact - std::floor(exact + 1e-9)), e);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < val_total && i < remainders.size(); ++i) {
    ++quota[remainders[i].second];
    ++assigned;
  }

  for (std::size_t e = 0; e < event_windows.size(); ++e) {
    auto& windows = event_windows[e];
    const long n = static_cast<long>(windows.size());
    const long n_val = std::min(quota[e], n);
    for (long i = 0; i < n - n_val; ++i) {
      split.train.push_back(std::move(windows[static_cast<std::size_t>(i)]));
    }
    for (long i = n - n_val; i < n; ++i) {
      split.val.push_back(std::move(windows[static_cast<std::size_t>(i)]));
    }
  }
  return split;
}

namespace {

std::vector<long> window_day_indices(const GraphSignalWindow& w) {
  std::vector<long> idx;
  for (Date d : w.input_dates) idx.push_back(w.day_index(d));
  return idx;
}

double eval_mse(const VstModel& model, const Normalizer& norm,
                const std::vector<GraphSignalWindow>& windows) {
  if (windows.empty()) return 0.0;
  double total = 0.0;
  for (const GraphSignalWindow& w : windows) {
    const Tensor pred = model.predict_normalized(w, norm);
    const Tensor target = norm.normalize(w.targets);
    const double* p = pred.data();
    const double* t = target.data();
    double s = 0.0;
    for (long i = 0; i < pred.numel(); ++i) {
      const double d = p[i] - t[i];
      s += d * d;
    }
    total += s / static_cast<double>(pred.numel());
  }
  return total / static_cast<double>(windows.size());
}

std::string param_norms_digest(const std::vector<Param*>& params) {
  std::string out;
  int listed = 0;
  for (const Param* p : params) {
    double sq = 0.0;
    for (long i = 0; i < p->value.numel(); ++i) sq += p->value[i] * p->value[i];
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s=%.4g", p->name.c_str(), std::sqrt(sq));
    out += std::string(listed ? ", " : "") + buf;
    if (++listed == 6) break;
  }
  return out;
}

}  // namespace

TrainResult train(VstModel& model, const CaseSplit& split,
                  const TrainConfig& cfg, const Normalizer& norm) {
  cfg.validate();
  if (split.train.empty()) {
    throw ValidationError("train: no training windows");
  }

  std::vector<Param*> params = model.parameters();
  AdamOptimizer opt(params);
  Rng order_rng(subseed(cfg.seed, "batch_order"));

  // Normalize once; windows are reused every epoch.
  std::vector<Tensor> inputs, targets;
  std::vector<std::vector<long>> days;
  for (const GraphSignalWindow& w : split.train) {
    inputs.push_back(norm.normalize(w.inputs));
    targets.push_back(norm.normalize(w.targets));
    days.push_back(window_day_indices(w));
  }

  TrainResult result;
  std::map<std::string, Tensor> best_params;
  double best_metric = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.learning_rate, cfg.min_lr, epoch, cfg.epochs);
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(b1 - b0);
      opt.zero_grad();
      for (std::size_t m0 = b0; m0 < b1;
           m0 += static_cast<std::size_t>(cfg.micro_batch)) {
        const std::size_t m1 =
            std::min(b1, m0 + static_cast<std::size_t>(cfg.micro_batch));
        Tape tape;
        std::vector<Var> losses;
        for (std::size_t i = m0; i < m1; ++i) {
          const std::size_t w = order[i];
          Var x = tape.constant(inputs[w]);
          Var pred = model.forward(tape, x, days[w]);
          losses.push_back(tape.mse(pred, tape.constant(targets[w])));
        }
        Var sum = tape.add_many(losses);
        for (Var l : losses) epoch_loss += l.value()[0];
        if (!std::isfinite(sum.value()[0])) {
          throw NumericError(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              ", batch starting at window " + std::to_string(b0) +
              "; parameter norms: " + param_norms_digest(params));
        }
        tape.backward(sum, inv_batch);
      }
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      opt.step(lr);
    }
    epoch_loss /= static_cast<double>(order.size());

    const double val_mse = eval_mse(model, norm, split.val);
    result.history.push_back({epoch, epoch_loss, val_mse, lr});

    const double metric = split.val.empty() ? epoch_loss : val_mse;
    if (metric < best_metric) {
      best_metric = metric;
      result.best_epoch = epoch;
      result.best_val = metric;
      best_params.clear();
      for (Param* p : params) best_params[p->name] = p->value.clone();
    }
  }

  for (Param* p : params) {
    auto it = best_params.find(p->name);
    if (it != best_params.end()) p->value = it->second.clone();
  }
  return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << "epoch,train_mse,val_mse,lr\n";
    for (const EpochStats& e : history) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g\n", e.epoch,
                    e.train_mse, e.val_mse, e.lr);
      out << buf;
    }
  }
  fs::rename(tmp, target);
}

std::vector<Tensor> predict(const VstModel& model, const Normalizer& norm,
                            const std::vector<GraphSignalWindow>& windows) {
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const GraphSignalWindow& w : windows) {
    out.push_back(norm.denormalize(model.predict_normalized(w, norm)));
  }
  return out;
}

Tensor persistence_prediction(const GraphSignalWindow& window) {
  const Shape s = window.inputs.shape();  // (V, S, C, H, W)
  const long V = s[0], S = s[1], C = s[2], H = s[3], W = s[4];
  const long T = window.targets.dim(1);
  Tensor out({V, T, C, H, W});
  const long frame = C * H * W;
  for (long v = 0; v < V; ++v) {
    const double* last = window.inputs.data() + (v * S + (S - 1)) * frame;
    for (long t = 0; t < T; ++t) {
      std::copy_n(last, frame, out.data() + (v * T + t) * frame);
    }
  }
  return out;
}

}  // namespace nightcast
