#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"

namespace mtc::schedule {

enum class Kind { cosine, exponential, plateau };

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::cosine: return "cosine";
    case Kind::exponential: return "exponential";
    case Kind::plateau: return "plateau";
  }
  return "?";
}

inline Kind parse_kind(const std::string& s) {
  if (s == "cosine") return Kind::cosine;
  if (s == "exponential") return Kind::exponential;
  if (s == "plateau") return Kind::plateau;
  throw ConfigError("unknown scheduler kind '" + s + "' (expected cosine, exponential or plateau)");
}

/// Per-epoch learning-rate policy. Only the fields of the selected kind are
/// read.
struct SchedulerSpec {
  Kind kind = Kind::cosine;
  double t_max = 25;
  double eta_min = 0.0;
  double gamma = 0.95;
  std::size_t patience = 10;
  double factor = 0.1;
  double min_lr = 1e-6;

  static SchedulerSpec cosine(double t_max, double eta_min = 0.0) {
    SchedulerSpec s;
    s.kind = Kind::cosine;
    s.t_max = t_max;
    s.eta_min = eta_min;
    return s;
  }
  static SchedulerSpec exponential(double gamma) {
    SchedulerSpec s;
    s.kind = Kind::exponential;
    s.gamma = gamma;
    return s;
  }
  static SchedulerSpec plateau(std::size_t patience, double factor = 0.1, double min_lr = 1e-6) {
    SchedulerSpec s;
    s.kind = Kind::plateau;
    s.patience = patience;
    s.factor = factor;
    s.min_lr = min_lr;
    return s;
  }

  void validate() const {
    if (kind == Kind::cosine && !(t_max > 0)) throw ConfigError("cosine scheduler needs t_max > 0");
    if (kind == Kind::exponential && !(gamma > 0)) throw ConfigError("exponential scheduler needs gamma > 0");
    if (kind == Kind::plateau && !(factor > 0 && factor < 1)) throw ConfigError("plateau factor must lie in (0,1)");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = to_string(kind);
    switch (kind) {
      case Kind::cosine:
        j["t_max"] = t_max;
        j["eta_min"] = eta_min;
        break;
      case Kind::exponential:
        j["gamma"] = gamma;
        break;
      case Kind::plateau:
        j["patience"] = patience;
        j["factor"] = factor;
        j["min_lr"] = min_lr;
        break;
    }
    return j;
  }

  static SchedulerSpec from_json(const nlohmann::json& j) {
    SchedulerSpec s;
    for (const auto& [key, v] : j.items()) {
      if (key == "kind") s.kind = parse_kind(v.get<std::string>());
      else if (key == "t_max") s.t_max = v.get<double>();
      else if (key == "eta_min") s.eta_min = v.get<double>();
      else if (key == "gamma") s.gamma = v.get<double>();
      else if (key == "patience") s.patience = v.get<std::size_t>();
      else if (key == "factor") s.factor = v.get<double>();
      else if (key == "min_lr") s.min_lr = v.get<double>();
      else throw ConfigError("unknown scheduler option '" + key + "'");
    }
    s.validate();
    return s;
  }
};

/// Learning rate for 0-based `epoch`, stepped once per epoch.
///   cosine:      eta_min + (base - eta_min) (1 + cos(pi epoch / t_max)) / 2
///   exponential: base * gamma^epoch
///   plateau:     replays `monitor` (one value per finished epoch, higher is
///                better); after more than `patience` consecutive epochs
///                without a strict improvement the rate is multiplied by
///                `factor` (floored at min_lr) and the counter restarts.
inline double scheduler_lr(const SchedulerSpec& spec, std::size_t epoch, double base_lr,
                           std::span<const double> monitor = {}) {
  switch (spec.kind) {
    case Kind::cosine:
      return spec.eta_min + 0.5 * (base_lr - spec.eta_min) *
                                (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / spec.t_max));
    case Kind::exponential:
      return base_lr * std::pow(spec.gamma, static_cast<double>(epoch));
    case Kind::plateau: {
      if (monitor.size() < epoch) throw UsageError("plateau scheduler needs one monitor value per finished epoch");
      double lr = base_lr;
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bad = 0;
      for (std::size_t e = 0; e < epoch; ++e) {
        if (monitor[e] > best) {
          best = monitor[e];
          bad = 0;
        } else if (++bad > spec.patience) {
          lr = std::max(lr * spec.factor, std::min(spec.min_lr, lr));
          bad = 0;
        }
      }
      return lr;
    }
  }
  throw ConfigError("unknown scheduler kind");
}

/// SWALR: linear anneal from `start_lr` to `swa_lr` over `anneal_epochs`
/// epochs, then constant. `swa_epoch` counts from 0 at the first SWA epoch,
/// which already takes one anneal step.
inline double swalr(std::size_t swa_epoch, double start_lr, double swa_lr, std::size_t anneal_epochs) {
  if (anneal_epochs == 0) return swa_lr;
  const double t = std::min(1.0, static_cast<double>(swa_epoch + 1) / static_cast<double>(anneal_epochs));
  return start_lr + t * (swa_lr - start_lr);
}

/// Running mean of weight snapshots (double accumulators).
struct SwaState {
  std::vector<std::vector<double>> average;
  std::size_t n_averaged = 0;
};

/// avg <- avg + (w - avg) / (n + 1). The first snapshot fixes the shapes.
template <class T>
void swa_update(SwaState& state, const std::vector<std::span<const T>>& weights) {
  if (state.n_averaged == 0) {
    state.average.clear();
    for (const auto& w : weights) state.average.emplace_back(w.begin(), w.end());
    state.n_averaged = 1;
    return;
  }
  if (weights.size() != state.average.size()) throw DimensionError("swa_update: tensor count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].size() != state.average[i].size()) throw DimensionError("swa_update: tensor shape mismatch");
  }
  const double inv = 1.0 / static_cast<double>(state.n_averaged + 1);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& avg = state.average[i];
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += (static_cast<double>(weights[i][k]) - avg[k]) * inv;
  }
  ++state.n_averaged;
}

}  // namespace mtc::schedule
