#pragma once

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mtc/augment.hpp"
#include "mtc/corpus.hpp"
#include "mtc/error.hpp"
#include "mtc/rng.hpp"
#include "mtc/unicode.hpp"

namespace mtc::synth {

// Artificial morphology. Classes come in pairs that share the lemma suffix and
// the endings of the first `kSharedSlots` forms; they differ from the next
// slot on. So the lemma alone fixes the POS and the pair, but the class only
// shows in the third form.

inline constexpr std::size_t kSharedSlots = 2;

struct SynthOptions {
  std::size_t classes = 8;
  std::size_t per_class = 80;
  std::uint64_t seed = 0;
  std::size_t noise_rows = 8;  // non-N/V rows that prepare must drop

  void validate() const {
    if (classes < 2) throw ConfigError("synth needs at least 2 classes");
    if (per_class < 10) throw ConfigError("synth needs at least 10 lexemes per class");
    if (classes > 100) throw ConfigError("synth supports at most 100 classes");
  }
};

struct ClassRule {
  std::string pos;
  std::string label;      // normalized contlex
  std::string raw_label;  // as written to the lexeme table
  std::size_t pair = 0;
  std::string lemma_suffix;
  std::vector<std::string> endings;  // one per miniparadigm slot
};

struct Corpus {
  std::vector<ClassRule> rules;
  corpus::Records lexemes;  // contlex holds the raw label
  augment::TableFormGenerator forms;
  std::string lexemes_tsv;
  std::string forms_tsv;
};

inline const std::vector<std::string>& alphabet() {
  static const std::vector<std::string> a = {"a", "e", "i", "o", "u", "õ", "k", "t", "p",
                                             "s", "m", "n", "l", "r", "v", "j", "ʹ"};
  return a;
}

namespace detail {

inline std::string random_string(Rng& rng, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += alphabet()[rng.below(alphabet().size())];
  return s;
}

// Consonant-vowel alternation keeps stems pronounceable and varied.
inline std::string random_stem(Rng& rng) {
  static const std::vector<std::string> cons = {"k", "t", "p", "s", "m", "n", "l", "r", "v", "j"};
  static const std::vector<std::string> vow = {"a", "e", "i", "o", "u", "õ"};
  const std::size_t len = 3 + rng.below(3);
  std::string s;
  const bool start_vowel = rng.below(2) == 0;
  for (std::size_t i = 0; i < len; ++i) {
    const bool vowel = (i % 2 == 0) == start_vowel;
    const auto& set = vowel ? vow : cons;
    s += set[rng.below(set.size())];
  }
  if (rng.below(4) == 0) s += "ʹ";
  return s;
}

inline std::string unique(Rng& rng, std::set<std::string>& used, std::size_t len) {
  for (;;) {
    auto s = random_string(rng, len);
    if (used.insert(s).second) return s;
  }
}

}  // namespace detail

inline std::vector<ClassRule> make_rules(const SynthOptions& opt) {
  opt.validate();
  const auto spec = augment::default_miniparadigms();
  Rng rng = Rng(opt.seed).split("rules");
  std::set<std::string> suffixes;
  std::vector<ClassRule> rules;
  const std::size_t n_pairs = (opt.classes + 1) / 2;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::string pos = p % 2 == 0 ? "N" : "V";
    const auto n_slots = spec.tags_for(pos).size();
    const auto suffix = detail::unique(rng, suffixes, 2);
    std::vector<std::string> shared;
    for (std::size_t s = 0; s < kSharedSlots; ++s) shared.push_back(detail::random_string(rng, 3));
    std::vector<std::string> first_member_endings;
    for (std::size_t m = 0; m < 2 && rules.size() < opt.classes; ++m) {
      ClassRule r;
      const std::size_t c = rules.size();
      r.pos = pos;
      char id[8];
      std::snprintf(id, sizeof id, "K%02zu", c);
      r.label = pos + "_" + id;
      r.raw_label = c % 3 == 1 ? r.label + "_X" : r.label;
      r.pair = p;
      r.lemma_suffix = suffix;
      r.endings = shared;
      for (std::size_t s = kSharedSlots; s < n_slots; ++s) {
        std::string e;
        do {
          e = detail::random_string(rng, 3);
        } while (m == 1 && e == first_member_endings[s]);
        r.endings.push_back(e);
      }
      if (m == 0) first_member_endings = r.endings;
      rules.push_back(std::move(r));
    }
  }
  return rules;
}

/// Generates `classes * per_class` N/V lexemes plus a few rows prepare drops.
inline Corpus generate(const SynthOptions& opt) {
  Corpus out;
  out.rules = make_rules(opt);
  const auto spec = augment::default_miniparadigms();
  Rng rng = Rng(opt.seed).split("lexemes");
  std::set<std::string> stems;
  out.lexemes_tsv = "lemma\tpos\tcontlex\n";
  out.forms_tsv = "lemma\tpos\ttag\tform\n";
  for (std::size_t i = 0; i < opt.per_class; ++i) {
    for (const auto& r : out.rules) {
      std::string stem;
      do {
        stem = detail::random_stem(rng);
      } while (!stems.insert(stem).second);
      const std::string lemma = stem + r.lemma_suffix;
      out.lexemes.push_back({lemma, r.pos, r.raw_label, ""});
      out.lexemes_tsv += lemma + "\t" + r.pos + "\t" + r.raw_label + "\n";
      const auto& tags = spec.tags_for(r.pos);
      for (std::size_t s = 0; s < tags.size(); ++s) {
        const std::string form = stem + r.endings[s];
        out.forms.add(lemma, r.pos, tags[s], form);
        out.forms_tsv += lemma + "\t" + r.pos + "\t" + tags[s] + "\t" + form + "\n";
      }
    }
  }
  Rng noise = Rng(opt.seed).split("noise");
  for (std::size_t i = 0; i < opt.noise_rows; ++i) {
    std::string lemma = detail::random_stem(noise);
    std::string pos = "A";
    if (i % 4 == 1) {
      lemma += "-" + detail::random_stem(noise);
      pos = "N";
    } else if (i % 4 == 3) {
      lemma += std::to_string(i);
      pos = "V";
    }
    const std::string label = pos + "_NOISE";
    out.lexemes.push_back({lemma, pos, label, ""});
    out.lexemes_tsv += lemma + "\t" + pos + "\t" + label + "\n";
  }
  return out;
}

/// Classifier that reads the generator's rules: the lemma suffix gives the
/// pair, the first distinguishing form the member. Falls back to the first
/// member of the pair when that form is absent.
class OracleClassifier {
 public:
  explicit OracleClassifier(std::vector<ClassRule> rules) : rules_(std::move(rules)) {}

  /// (pos, contlex) for an entry.
  std::pair<std::string, std::string> classify(const augment::AugmentedEntry& e) const {
    const ClassRule* fallback = nullptr;
    for (const auto& r : rules_) {
      if (!ends_with(e.record.lemma, r.lemma_suffix)) continue;
      if (!fallback) fallback = &r;
      const std::string stem = e.record.lemma.substr(0, e.record.lemma.size() - r.lemma_suffix.size());
      if (e.forms.size() <= kSharedSlots) break;
      if (e.forms[kSharedSlots].form == stem + r.endings[kSharedSlots]) return {r.pos, r.label};
    }
    if (!fallback) throw DataError("oracle: lemma '" + e.record.lemma + "' matches no class");
    return {fallback->pos, fallback->label};
  }

 private:
  static bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  }
  std::vector<ClassRule> rules_;
};

}  // namespace mtc::synth
