#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"
#include "mtc/hash.hpp"
#include "mtc/log.hpp"
#include "mtc/rng.hpp"
#include "mtc/tsv.hpp"

namespace mtc::corpus {

/// One dictionary entry. `contlex` is empty until normalize() runs.
struct LexemeRecord {
  std::string lemma;
  std::string pos;
  std::string contlex_raw;
  std::string contlex;

  bool operator==(const LexemeRecord&) const = default;
};

using Records = std::vector<LexemeRecord>;

/// Input/output counts of one cleaning stage.
struct FilterStage {
  std::string stage;
  std::size_t in_count = 0;
  std::size_t out_count = 0;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
};

struct Dataset {
  Records records;
  std::string source;
  std::vector<FilterStage> log;
};

struct SplitSpec {
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Parses the lexeme table (header `lemma pos contlex`; extra columns are
/// ignored). An empty input yields no records.
inline Records parse_lexemes(std::string_view text, const std::string& source) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    log::warn(source + " is empty");
    return {};
  }
  const auto table = tsv::parse(text, source);
  const auto c_lemma = table.column("lemma");
  const auto c_pos = table.column("pos");
  const auto c_contlex = table.column("contlex");
  Records out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[c_lemma].empty() || row[c_pos].empty() || row[c_contlex].empty()) {
      throw FormatError(source + ": line " + std::to_string(table.line_numbers[r]) + " has an empty field");
    }
    out.push_back({row[c_lemma], row[c_pos], row[c_contlex], ""});
  }
  return out;
}

inline Records load_lexemes(const std::string& path) { return parse_lexemes(read_file(path), path); }

inline Records filter_pos(const Records& records, const std::set<std::string>& allowed = {"N", "V"}) {
  Records out;
  for (const auto& r : records)
    if (allowed.count(r.pos)) out.push_back(r);
  return out;
}

/// Lemma-exclusion patterns used when no filter file overrides them:
/// whitespace, digits, leading or trailing hyphen.
inline std::vector<std::string> default_exclusion_patterns() { return {R"(\s)", R"(\d)", R"(^-)", R"(-$)"}; }

/// Drops records whose lemma matches any of `patterns` (ECMAScript syntax,
/// searched anywhere in the lemma).
inline Records regex_filter(const Records& records, const std::vector<std::string>& patterns) {
  std::vector<std::regex> compiled;
  for (const auto& p : patterns) {
    try {
      compiled.emplace_back(p, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid exclusion pattern '" + p + "': " + e.what());
    }
  }
  Records out;
  for (const auto& r : records) {
    bool excluded = false;
    for (const auto& re : compiled) {
      if (std::regex_search(r.lemma, re)) {
        excluded = true;
        break;
      }
    }
    if (!excluded) out.push_back(r);
  }
  return out;
}

/// Truncates a label just before its second underscore:
/// "V_JOAQTTED_ERRORTH" -> "V_JOAQTTED".
inline std::string normalize_contlex(const std::string& label) {
  const auto first = label.find('_');
  if (first == std::string::npos) return label;
  const auto second = label.find('_', first + 1);
  if (second == std::string::npos) return label;
  return label.substr(0, second);
}

/// Normalizes every record and checks that the label is prefixed by the
/// record's POS.
inline Records normalize(const Records& records) {
  Records out = records;
  for (auto& r : out) {
    r.contlex = normalize_contlex(r.contlex_raw);
    if (r.contlex.rfind(r.pos + "_", 0) != 0) {
      throw DataError("contlex '" + r.contlex_raw + "' of lemma '" + r.lemma + "' does not start with POS prefix '" +
                      r.pos + "_'");
    }
  }
  return out;
}

struct SupportResult {
  Records records;
  std::map<std::string, std::vector<std::string>> kept_labels;  // pos -> sorted labels
};

/// Keeps only (pos, contlex) classes with at least `min_support` records.
inline SupportResult filter_min_support(const Records& records, std::size_t min_support = 50) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& r : records) ++counts[{r.pos, r.contlex}];
  SupportResult res;
  for (const auto& [key, n] : counts)
    if (n >= min_support) res.kept_labels[key.first].push_back(key.second);
  for (const auto& r : records)
    if (counts[{r.pos, r.contlex}] >= min_support) res.records.push_back(r);
  return res;
}

struct Split {
  Records train;
  Records test;
};

/// Per (pos, contlex) class, round(test_fraction * size) records go to test,
/// clamped to [1, size - 1]. Returns 1 for every test record.
inline std::vector<std::uint8_t> stratified_test_mask(const Records& records, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0,1), got " + std::to_string(spec.test_fraction));
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < records.size(); ++i) classes[{records[i].pos, records[i].contlex}].push_back(i);
  std::string too_small;
  for (const auto& [key, idx] : classes) {
    if (idx.size() < 2) too_small += " " + key.first + "/" + key.second;
  }
  if (!too_small.empty()) throw DataError("classes with fewer than 2 records cannot be split:" + too_small);

  Rng rng(spec.seed);
  std::vector<std::uint8_t> in_test(records.size(), 0);
  for (auto& [key, idx] : classes) {
    const auto n = static_cast<long>(idx.size());
    long k = std::lround(spec.test_fraction * static_cast<double>(n));
    k = std::clamp(k, 1L, n - 1);
    auto order = idx;
    rng.shuffle(order);
    for (long i = 0; i < k; ++i) in_test[order[static_cast<std::size_t>(i)]] = 1;
  }
  return in_test;
}

/// Stratified split; both halves keep input order.
inline Split stratified_split(const Records& records, const SplitSpec& spec) {
  const auto in_test = stratified_test_mask(records, spec);
  Split s;
  for (std::size_t i = 0; i < records.size(); ++i) (in_test[i] ? s.test : s.train).push_back(records[i]);
  return s;
}

/// Cleaning options, loadable from a filters JSON file.
struct FilterConfig {
  std::set<std::string> allowed_pos{"N", "V"};
  std::vector<std::string> exclude_patterns = default_exclusion_patterns();
  std::size_t min_support = 50;

  static FilterConfig from_json(const nlohmann::json& j) {
    FilterConfig c;
    for (const auto& [key, value] : j.items()) {
      if (key == "allowed_pos") {
        c.allowed_pos = value.get<std::set<std::string>>();
      } else if (key == "exclude_patterns") {
        c.exclude_patterns = value.get<std::vector<std::string>>();
      } else if (key == "min_support") {
        c.min_support = value.get<std::size_t>();
      } else {
        throw ConfigError("unknown filter option '" + key + "'");
      }
    }
    return c;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["allowed_pos"] = allowed_pos;
    j["exclude_patterns"] = exclude_patterns;
    j["min_support"] = min_support;
    return j;
  }
};

/// load -> filter_pos -> regex_filter -> normalize -> min_support, logging
/// each stage's counts.
inline Dataset prepare(const Records& loaded, const FilterConfig& cfg, std::string source = {}) {
  Dataset ds;
  ds.source = std::move(source);
  ds.log.push_back({"load", loaded.size(), loaded.size(), {}});
  auto pos = filter_pos(loaded, cfg.allowed_pos);
  ds.log.push_back({"filter_pos", loaded.size(), pos.size(), {{"allowed", cfg.allowed_pos}}});
  auto clean = regex_filter(pos, cfg.exclude_patterns);
  ds.log.push_back({"regex_filter", pos.size(), clean.size(), {{"patterns", cfg.exclude_patterns}}});
  auto norm = normalize(clean);
  std::set<std::string> raw_labels, norm_labels;
  for (const auto& r : norm) {
    raw_labels.insert(r.pos + "\t" + r.contlex_raw);
    norm_labels.insert(r.pos + "\t" + r.contlex);
  }
  ds.log.push_back({"normalize_contlex",
                    clean.size(),
                    norm.size(),
                    {{"raw_labels", raw_labels.size()}, {"normalized_labels", norm_labels.size()}}});
  auto support = filter_min_support(norm, cfg.min_support);
  std::size_t kept = 0;
  nlohmann::ordered_json per_pos = nlohmann::ordered_json::object();
  for (const auto& [p, labels] : support.kept_labels) {
    kept += labels.size();
    per_pos[p] = labels.size();
  }
  ds.log.push_back({"min_support",
                    norm.size(),
                    support.records.size(),
                    {{"min_support", cfg.min_support}, {"kept_labels", kept}, {"kept_labels_per_pos", per_pos}}});
  ds.records = std::move(support.records);
  return ds;
}

inline nlohmann::ordered_json filter_log_json(const std::vector<FilterStage>& log) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : log) {
    nlohmann::ordered_json e;
    e["stage"] = s.stage;
    e["in_count"] = s.in_count;
    e["out_count"] = s.out_count;
    for (const auto& [k, v] : s.params.items()) e[k] = v;
    arr.push_back(std::move(e));
  }
  return arr;
}

/// Cleaned dataset table: lemma, pos, contlex (normalized), contlex_raw.
inline std::string format_dataset(const Records& records) {
  std::string out = tsv::join_row({"lemma", "pos", "contlex", "contlex_raw"});
  for (const auto& r : records) out += tsv::join_row({r.lemma, r.pos, r.contlex, r.contlex_raw});
  return out;
}

inline Records parse_dataset(std::string_view text, const std::string& source) {
  const auto table = tsv::parse(text, source);
  const auto c_lemma = table.column("lemma");
  const auto c_pos = table.column("pos");
  const auto c_contlex = table.column("contlex");
  const auto c_raw = table.column("contlex_raw");
  Records out;
  for (const auto& row : table.rows) out.push_back({row[c_lemma], row[c_pos], row[c_raw], row[c_contlex]});
  return out;
}

inline Records load_dataset(const std::string& path) { return parse_dataset(read_file(path), path); }

}  // namespace mtc::corpus
