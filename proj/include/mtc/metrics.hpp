#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"

namespace mtc::metrics {

struct LabelMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::string task;     // "pos" or "contlex"
  std::string masking;  // masking mode the predictions were made under
  std::size_t n = 0;
  double accuracy = 0.0;
  std::vector<LabelMetrics> per_label;
  Averages weighted;
  Averages macro;  // over labels with support > 0
  // Labels whose precision or recall had a zero denominator and were set to 0.
  std::vector<std::string> zero_division;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task;
    j["masking"] = masking;
    j["n"] = n;
    j["accuracy"] = accuracy;
    auto avg = [](const Averages& a) {
      nlohmann::ordered_json o;
      o["precision"] = a.precision;
      o["recall"] = a.recall;
      o["f1"] = a.f1;
      return o;
    };
    j["weighted"] = avg(weighted);
    j["macro"] = avg(macro);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& l : per_label) {
      nlohmann::ordered_json r;
      r["label"] = l.label;
      r["precision"] = l.precision;
      r["recall"] = l.recall;
      r["f1"] = l.f1;
      r["support"] = l.support;
      rows.push_back(r);
    }
    j["per_label"] = rows;
    j["zero_division"] = zero_division;
    return j;
  }
};

/// Per-label and averaged precision/recall/F1 for single-label predictions.
/// Ids index `label_names`. Zero denominators give 0.
inline MetricsReport compute_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                                     const std::vector<std::string>& label_names, std::string task = {},
                                     std::string masking = {}) {
  if (preds.size() != golds.size()) {
    throw UsageError("compute_metrics: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(golds.size()) + " gold labels");
  }
  if (preds.empty()) throw UsageError("compute_metrics: no samples");
  const std::size_t K = label_names.size();
  MetricsReport r;
  r.task = std::move(task);
  r.masking = std::move(masking);
  r.n = preds.size();
  r.per_label.resize(K);
  for (std::size_t k = 0; k < K; ++k) r.per_label[k].label = label_names[k];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= K || golds[i] >= K) throw IndexError("compute_metrics: label id out of range");
    ++r.per_label[golds[i]].support;
    if (preds[i] == golds[i]) {
      ++r.per_label[golds[i]].tp;
      ++correct;
    } else {
      ++r.per_label[preds[i]].fp;
      ++r.per_label[golds[i]].fn;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  std::size_t supported = 0;
  for (auto& l : r.per_label) {
    const auto pd = l.tp + l.fp, rd = l.tp + l.fn;
    l.precision = pd ? static_cast<double>(l.tp) / static_cast<double>(pd) : 0.0;
    l.recall = rd ? static_cast<double>(l.tp) / static_cast<double>(rd) : 0.0;
    l.f1 = (l.precision + l.recall) > 0 ? 2 * l.precision * l.recall / (l.precision + l.recall) : 0.0;
    if (pd == 0 || rd == 0) r.zero_division.push_back(l.label);
    if (l.support == 0) continue;
    ++supported;
    const double w = static_cast<double>(l.support) / static_cast<double>(r.n);
    r.weighted.precision += w * l.precision;
    r.weighted.recall += w * l.recall;
    r.weighted.f1 += w * l.f1;
    r.macro.precision += l.precision;
    r.macro.recall += l.recall;
    r.macro.f1 += l.f1;
  }
  r.macro.precision /= static_cast<double>(supported);
  r.macro.recall /= static_cast<double>(supported);
  r.macro.f1 /= static_cast<double>(supported);
  return r;
}

}  // namespace mtc::metrics
