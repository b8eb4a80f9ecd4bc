#pragma once

#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtc/augment.hpp"
#include "mtc/bpe.hpp"
#include "mtc/error.hpp"
#include "mtc/hash.hpp"
#include "mtc/labels.hpp"
#include "mtc/metrics.hpp"
#include "mtc/model.hpp"
#include "mtc/tsv.hpp"

namespace mtc::eval {

enum class MaskingMode { none, predicted_pos, gold_pos };

inline std::string to_string(MaskingMode m) {
  switch (m) {
    case MaskingMode::none: return "none";
    case MaskingMode::predicted_pos: return "predicted-pos";
    case MaskingMode::gold_pos: return "gold-pos";
  }
  return "?";
}

inline MaskingMode parse_masking(const std::string& s) {
  if (s == "none") return MaskingMode::none;
  if (s == "predicted-pos") return MaskingMode::predicted_pos;
  if (s == "gold-pos") return MaskingMode::gold_pos;
  throw ConfigError("unknown masking mode '" + s + "' (expected none, predicted-pos or gold-pos)");
}

inline constexpr MaskingMode kAllMaskingModes[] = {MaskingMode::none, MaskingMode::predicted_pos,
                                                  MaskingMode::gold_pos};

/// Tokenized model input with its gold labels (contlex as a global id).
struct Example {
  std::vector<bpe::TokenId> ids;
  std::size_t pos = 0;
  std::size_t contlex = 0;
};

/// Argmax over `scores` restricted to [begin, end); ties go to the lowest id.
inline std::size_t argmax(std::span<const double> scores, std::size_t begin, std::size_t end) {
  std::size_t best = begin;
  for (std::size_t i = begin + 1; i < end; ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

inline std::size_t argmax(std::span<const double> scores) { return argmax(scores, 0, scores.size()); }

/// Tokenizes the lemma plus up to `max_forms - 1` forms. Sequences longer than
/// `max_len` are cut from the right; the lemma itself must fit.
inline std::vector<bpe::TokenId> encode_entry(const bpe::BpeModel& tok, const augment::AugmentedEntry& entry,
                                              std::size_t max_forms, std::size_t max_len) {
  auto ids = bpe::encode(tok, augment::assemble_input(entry, max_forms));
  if (ids.size() > max_len) {
    const auto lemma_len = bpe::encode(tok, entry.record.lemma).size();
    if (lemma_len > max_len) {
      throw DataError("lemma '" + entry.record.lemma + "' needs " + std::to_string(lemma_len) +
                      " tokens, more than max_len " + std::to_string(max_len));
    }
    ids.resize(max_len);
  }
  return ids;
}

inline std::vector<Example> make_examples(const std::vector<augment::AugmentedEntry>& entries,
                                          const bpe::BpeModel& tok, const labels::LabelSpace& space,
                                          std::size_t max_forms, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    out.push_back({encode_entry(tok, e, max_forms, max_len), space.encode_pos(e.record.pos),
                   space.encode_contlex(e.record.pos, e.record.contlex)});
  }
  return out;
}

/// Model, labels and tokenizer must agree on their sizes.
inline void check_compatible(const model::ModelConfig& cfg, const labels::LabelSpace& space,
                             std::size_t vocab_size) {
  if (cfg.n_pos != space.n_pos() || cfg.n_contlex != space.n_contlex()) {
    throw ConfigError("model predicts " + std::to_string(cfg.n_pos) + " POS / " + std::to_string(cfg.n_contlex) +
                      " contlex labels but the label space has " + std::to_string(space.n_pos()) + " / " +
                      std::to_string(space.n_contlex()));
  }
  if (cfg.vocab_size != vocab_size) {
    throw ConfigError("model vocabulary " + std::to_string(cfg.vocab_size) + " differs from tokenizer vocabulary " +
                      std::to_string(vocab_size));
  }
}

struct Predictions {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> contlex;
};

/// `Model` needs `BatchLogits infer(const model::Batch&) const`.
template <class Model>
Predictions predict(const Model& m, const std::vector<Example>& data, const labels::LabelSpace& space,
                    MaskingMode mode, std::size_t batch_size = 256) {
  Predictions out;
  out.pos.reserve(data.size());
  out.contlex.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t stop = std::min(data.size(), start + batch_size);
    std::vector<const std::vector<bpe::TokenId>*> seqs;
    for (std::size_t i = start; i < stop; ++i) seqs.push_back(&data[i].ids);
    const auto logits = m.infer(model::make_batch(seqs, std::numeric_limits<std::size_t>::max()));
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      std::span<const double> ps(logits.pos.data() + b * logits.n_pos, logits.n_pos);
      std::span<const double> cs(logits.contlex.data() + b * logits.n_contlex, logits.n_contlex);
      const std::size_t p = argmax(ps);
      std::size_t c = 0;
      switch (mode) {
        case MaskingMode::none: c = argmax(cs); break;
        case MaskingMode::predicted_pos: {
          const auto blk = space.block(p);
          c = argmax(cs, blk.offset, blk.offset + blk.size);
          break;
        }
        case MaskingMode::gold_pos: {
          const auto blk = space.block(data[start + b].pos);
          c = argmax(cs, blk.offset, blk.offset + blk.size);
          break;
        }
      }
      out.pos.push_back(p);
      out.contlex.push_back(c);
    }
  }
  return out;
}

struct TaskReports {
  metrics::MetricsReport pos;
  metrics::MetricsReport contlex;
};

template <class Model>
TaskReports evaluate_model(const Model& m, const std::vector<Example>& data, const labels::LabelSpace& space,
                           MaskingMode mode, std::size_t batch_size = 256) {
  if (data.empty()) throw UsageError("evaluate_model: empty dataset");
  const auto pred = predict(m, data, space, mode, batch_size);
  std::vector<std::size_t> gp, gc;
  for (const auto& e : data) {
    gp.push_back(e.pos);
    gc.push_back(e.contlex);
  }
  const auto tag = to_string(mode);
  return {metrics::compute_metrics(pred.pos, gp, space.pos_labels(), "pos", tag),
          metrics::compute_metrics(pred.contlex, gc, space.global_contlex(), "contlex", tag)};
}

struct SweepRow {
  std::size_t k = 0;
  double pos_accuracy = 0.0;
  double contlex_accuracy = 0.0;
};

/// Accuracy of both tasks when inputs are capped at k items (lemma plus k-1
/// forms), for each k.
template <class Model>
std::vector<SweepRow> sweep_forms(const Model& m, const std::vector<augment::AugmentedEntry>& entries,
                                  const bpe::BpeModel& tok, const labels::LabelSpace& space,
                                  const std::vector<std::size_t>& k_values, MaskingMode mode, std::size_t max_len) {
  std::vector<SweepRow> rows;
  for (auto k : k_values) {
    if (k < 1) throw UsageError("sweep_forms: k must be >= 1");
    const auto data = make_examples(entries, tok, space, k, max_len);
    const auto r = evaluate_model(m, data, space, mode);
    rows.push_back({k, r.pos.accuracy, r.contlex.accuracy});
  }
  return rows;
}

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "k,pos_accuracy,contlex_accuracy\n";
  for (const auto& r : rows)
    out += std::to_string(r.k) + "," + format_number(r.pos_accuracy) + "," + format_number(r.contlex_accuracy) + "\n";
  return out;
}

/// Whitespace-separated columns for gnuplot (`plot 'f.dat' using 1:3`).
inline std::string sweep_dat(const std::vector<SweepRow>& rows) {
  std::string out = "# k pos_accuracy contlex_accuracy\n";
  for (const auto& r : rows)
    out += std::to_string(r.k) + " " + format_number(r.pos_accuracy) + " " + format_number(r.contlex_accuracy) + "\n";
  return out;
}

/// Parses "3", "1,2,5" or "1..15".
inline std::vector<std::size_t> parse_k_values(const std::string& spec) {
  std::vector<std::size_t> out;
  auto num = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("bad k value '" + s + "' in '" + spec + "'");
    return std::stoul(s);
  };
  for (const auto& part : tsv::split(spec, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(num(part));
      continue;
    }
    const auto lo = num(part.substr(0, dots)), hi = num(part.substr(dots + 2));
    if (hi < lo) throw UsageError("empty k range '" + part + "'");
    for (auto k = lo; k <= hi; ++k) out.push_back(k);
  }
  for (auto k : out)
    if (k < 1) throw UsageError("k must be >= 1");
  return out;
}

/// Report document: headline reports under `masking`, plus a compact summary
/// of every masking mode.
struct EvalReport {
  std::string config_hash;
  std::string model;
  MaskingMode masking = MaskingMode::predicted_pos;
  TaskReports primary;
  std::vector<std::pair<MaskingMode, TaskReports>> all_modes;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["model"] = model;
    j["masking"] = to_string(masking);
    j["pos"] = primary.pos.to_json();
    j["contlex"] = primary.contlex.to_json();
    nlohmann::ordered_json modes = nlohmann::ordered_json::object();
    for (const auto& [mode, r] : all_modes) {
      nlohmann::ordered_json s;
      s["pos_accuracy"] = r.pos.accuracy;
      s["pos_weighted_f1"] = r.pos.weighted.f1;
      s["contlex_accuracy"] = r.contlex.accuracy;
      s["contlex_weighted_f1"] = r.contlex.weighted.f1;
      s["contlex_macro_f1"] = r.contlex.macro.f1;
      modes[to_string(mode)] = s;
    }
    j["by_masking"] = modes;
    return j;
  }
};

inline void write_report(const EvalReport& report, const std::string& path) {
  write_file(path, report.to_json().dump(2) + "\n");
}

}  // namespace mtc::eval
