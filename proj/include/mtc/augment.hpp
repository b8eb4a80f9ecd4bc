#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mtc/corpus.hpp"
#include "mtc/error.hpp"
#include "mtc/tsv.hpp"

namespace mtc::augment {

/// Reserved word separator placed between the lemma and each form. It is
/// its own token and never takes part in subword merges.
inline constexpr std::string_view kSeparator = "\xE2\x90\x9F";  // U+241F

/// Per-POS ordered tag inventory of a miniparadigm.
struct MiniparadigmSpec {
  std::map<std::string, std::vector<std::string>> tags;

  const std::vector<std::string>& tags_for(const std::string& pos) const {
    auto it = tags.find(pos);
    if (it == tags.end()) throw ConfigError("miniparadigm spec has no tags for POS '" + pos + "'");
    return it->second;
  }

  std::size_t max_forms() const {
    std::size_t m = 0;
    for (const auto& [pos, t] : tags) m = std::max(m, t.size());
    return m;
  }

  static MiniparadigmSpec from_json(const nlohmann::json& j) {
    MiniparadigmSpec s;
    for (const auto& [pos, list] : j.items()) s.tags[pos] = list.get<std::vector<std::string>>();
    if (s.tags.empty()) throw ConfigError("miniparadigm spec is empty");
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [pos, t] : tags) j[pos] = t;
    return j;
  }
};

/// The ten verb and ten noun forms used for augmentation, in table order.
inline MiniparadigmSpec default_miniparadigms() {
  MiniparadigmSpec s;
  s.tags["V"] = {"V+Ind+Prs+ConNeg", "V+Ind+Prs+Sg3", "V+Ind+Prt+Sg1", "V+Ind+Prt+Sg3", "V+Inf",
                 "V+Ind+Prs+Sg1",    "V+Pass+PrfPrc", "V+Ind+Prs+Pl3", "V+Imprt+Sg3",   "V+Imprt+Pl3"};
  s.tags["N"] = {"N+Sg+Loc", "N+Sg+Ill",        "N+Pl+Gen",
                 "N+Sg+Nom", "N+Sg+Gen",        "N+Sg+Loc+PxSg3",
                 "N+Ess",    "N+Der/Dimin+N+Sg+Nom", "N+Der/Dimin+N+Sg+Gen",
                 "N+Sg+Ill+PxSg1"};
  return s;
}

/// Source of inflected surface forms; stands where a morphological
/// generator (an FST) would be queried.
class FormGenerator {
 public:
  virtual ~FormGenerator() = default;
  virtual std::vector<std::string> generate(const std::string& lemma, const std::string& pos,
                                            const std::string& tag) const = 0;
};

/// Answers queries from an in-memory (lemma, pos, tag) -> forms multimap.
class TableFormGenerator final : public FormGenerator {
 public:
  void add(const std::string& lemma, const std::string& pos, const std::string& tag, std::string form) {
    table_[key(lemma, pos, tag)].push_back(std::move(form));
  }

  std::vector<std::string> generate(const std::string& lemma, const std::string& pos,
                                    const std::string& tag) const override {
    auto it = table_.find(key(lemma, pos, tag));
    return it == table_.end() ? std::vector<std::string>{} : it->second;
  }

  std::size_t size() const { return table_.size(); }

 private:
  static std::string key(const std::string& lemma, const std::string& pos, const std::string& tag) {
    std::string k = lemma;
    k += '\t';
    k += pos;
    k += '\t';
    k += tag;
    return k;
  }

  std::map<std::string, std::vector<std::string>> table_;
};

inline TableFormGenerator parse_forms(std::string_view text, const std::string& source) {
  TableFormGenerator gen;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return gen;
  const auto table = tsv::parse(text, source);
  const auto c_lemma = table.column("lemma");
  const auto c_pos = table.column("pos");
  const auto c_tag = table.column("tag");
  const auto c_form = table.column("form");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[c_lemma].empty() || row[c_pos].empty() || row[c_tag].empty() || row[c_form].empty()) {
      throw FormatError(source + ": line " + std::to_string(table.line_numbers[r]) + " has an empty field");
    }
    gen.add(row[c_lemma], row[c_pos], row[c_tag], row[c_form]);
  }
  return gen;
}

/// Generator backed by a forms table (`lemma pos tag form`).
inline TableFormGenerator file_backed_generator(const std::string& path) {
  return parse_forms(read_file(path), path);
}

struct TaggedForm {
  std::string tag;
  std::string form;

  bool operator==(const TaggedForm&) const = default;
};

struct AugmentedEntry {
  corpus::LexemeRecord record;
  std::vector<TaggedForm> forms;  // miniparadigm order, missing tags omitted

  bool operator==(const AugmentedEntry&) const = default;
};

/// Queries `gen` for every tag of the record's POS, keeping the first form
/// returned per tag.
inline AugmentedEntry generate_forms(const FormGenerator& gen, const corpus::LexemeRecord& record,
                                     const MiniparadigmSpec& spec) {
  AugmentedEntry e{record, {}};
  for (const auto& tag : spec.tags_for(record.pos)) {
    auto forms = gen.generate(record.lemma, record.pos, tag);
    if (!forms.empty()) e.forms.push_back({tag, std::move(forms.front())});
  }
  return e;
}

inline std::vector<AugmentedEntry> generate_all(const FormGenerator& gen, const corpus::Records& records,
                                                const MiniparadigmSpec& spec) {
  std::vector<AugmentedEntry> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(generate_forms(gen, r, spec));
  return out;
}

/// Lemma followed by at most `max_forms - 1` forms, separated by the
/// reserved separator token.
inline std::string assemble_input(const AugmentedEntry& entry, std::size_t max_forms) {
  if (max_forms < 1) throw UsageError("max_forms must be >= 1");
  std::string text = entry.record.lemma;
  const std::size_t n = std::min(max_forms - 1, entry.forms.size());
  for (std::size_t i = 0; i < n; ++i) {
    text += ' ';
    text += kSeparator;
    text += ' ';
    text += entry.forms[i].form;
  }
  return text;
}

/// Largest useful max_forms for an entry list (lemma plus every form).
inline std::size_t full_context(const MiniparadigmSpec& spec) { return 1 + spec.max_forms(); }

// Augmented corpus: one line per entry. `tags` joins the tags with '|', and
// `text` is the fully assembled input.
inline std::string format_augmented(const std::vector<AugmentedEntry>& entries) {
  std::string out = tsv::join_row({"lemma", "pos", "contlex", "contlex_raw", "tags", "text"});
  for (const auto& e : entries) {
    std::string tags;
    for (std::size_t i = 0; i < e.forms.size(); ++i) {
      if (i) tags += '|';
      tags += e.forms[i].tag;
    }
    out += tsv::join_row({e.record.lemma, e.record.pos, e.record.contlex, e.record.contlex_raw, tags,
                          assemble_input(e, e.forms.size() + 1)});
  }
  return out;
}

inline std::vector<AugmentedEntry> parse_augmented(std::string_view text, const std::string& source) {
  const auto table = tsv::parse(text, source);
  const auto c_lemma = table.column("lemma");
  const auto c_pos = table.column("pos");
  const auto c_contlex = table.column("contlex");
  const auto c_raw = table.column("contlex_raw");
  const auto c_tags = table.column("tags");
  const auto c_text = table.column("text");
  const std::string joiner = " " + std::string(kSeparator) + " ";
  std::vector<AugmentedEntry> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    AugmentedEntry e;
    e.record = {row[c_lemma], row[c_pos], row[c_raw], row[c_contlex]};
    std::vector<std::string> words;
    std::string_view rest = row[c_text];
    for (;;) {
      const auto p = rest.find(joiner);
      if (p == std::string_view::npos) {
        words.emplace_back(rest);
        break;
      }
      words.emplace_back(rest.substr(0, p));
      rest.remove_prefix(p + joiner.size());
    }
    const auto tags = row[c_tags].empty() ? std::vector<std::string>{} : tsv::split(row[c_tags], '|');
    if (words.empty() || words.front() != e.record.lemma || tags.size() + 1 != words.size()) {
      throw FormatError(source + ": line " + std::to_string(table.line_numbers[r]) +
                        " has inconsistent tags/text columns");
    }
    for (std::size_t i = 0; i < tags.size(); ++i) e.forms.push_back({tags[i], words[i + 1]});
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<AugmentedEntry> load_augmented(const std::string& path) {
  return parse_augmented(read_file(path), path);
}

inline corpus::Records records_of(const std::vector<AugmentedEntry>& entries) {
  corpus::Records out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.record);
  return out;
}

}  // namespace mtc::augment
