#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtc/augment.hpp"
#include "mtc/error.hpp"
#include "mtc/hash.hpp"
#include "mtc/unicode.hpp"

namespace mtc::bpe {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kSep = 2;
inline constexpr std::size_t kNumSpecials = 3;
inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kFormatVersion = "bpe/v1";

/// Learned subword model. Ids: specials 0..2, then the alphabet (end-of-word
/// marker first, then characters in codepoint order), then one id per
/// distinct merge result in merge order.
class BpeModel {
 public:
  BpeModel() = default;

  BpeModel(std::vector<std::string> alphabet, std::vector<std::pair<std::string, std::string>> merges)
      : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
    rebuild();
  }

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::size_t vocab_size() const { return symbols_.size(); }
  const std::string& symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(symbols_.size()));
    }
    return symbols_[static_cast<std::size_t>(id)];
  }

  /// Id of a symbol string, or kUnk.
  TokenId id_of(std::string_view sym) const {
    auto it = vocab_.find(std::string(sym));
    return it == vocab_.end() ? kUnk : it->second;
  }

  /// Segments one word (without separator or whitespace) into token ids.
  std::vector<TokenId> encode_word(std::string_view word) const {
    std::vector<TokenId> seq;
    for (const auto& cp : utf8::codepoints(word)) seq.push_back(id_of(cp));
    seq.push_back(eow_id_);
    // Equivalent to applying every merge in rank order: repeatedly take
    // the lowest-ranked applicable merge beyond the last one applied.
    std::size_t last = 0;
    for (;;) {
      std::size_t best = SIZE_MAX;
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        auto it = rank_.find(pair_key(seq[i], seq[i + 1]));
        if (it != rank_.end() && it->second.first >= last && it->second.first < best) best = it->second.first;
      }
      if (best == SIZE_MAX) break;
      const auto& [l, r] = merge_ids_[best];
      const TokenId merged = merge_result_[best];
      std::vector<TokenId> next;
      next.reserve(seq.size());
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i + 1 < seq.size() && seq[i] == l && seq[i + 1] == r) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(seq[i]);
        }
      }
      seq = std::move(next);
      last = best + 1;
    }
    return seq;
  }

 private:
  static std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  void rebuild() {
    symbols_ = {"<pad>", "<unk>", "<sep>"};
    vocab_.clear();
    rank_.clear();
    merge_ids_.clear();
    merge_result_.clear();
    if (alphabet_.empty() || alphabet_.front() != kEndOfWord) {
      throw FormatError("alphabet must start with the end-of-word marker");
    }
    auto intern = [&](const std::string& s) {
      auto [it, inserted] = vocab_.emplace(s, static_cast<TokenId>(symbols_.size()));
      if (inserted) symbols_.push_back(s);
      return it->second;
    };
    for (const auto& a : alphabet_) {
      if (vocab_.count(a)) throw FormatError("duplicate alphabet symbol '" + a + "'");
      intern(a);
    }
    eow_id_ = vocab_.at(std::string(kEndOfWord));
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      const auto& [l, r] = merges_[i];
      auto li = vocab_.find(l);
      auto ri = vocab_.find(r);
      if (li == vocab_.end() || ri == vocab_.end()) {
        throw FormatError("merge " + std::to_string(i) + " uses unknown symbol: '" + l + "' '" + r + "'");
      }
      const TokenId a = li->second, b = ri->second;
      merge_ids_.emplace_back(a, b);
      merge_result_.push_back(intern(l + r));
      rank_.emplace(pair_key(a, b), std::make_pair(i, merge_result_.back()));
    }
  }

  std::vector<std::string> alphabet_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> vocab_;
  std::unordered_map<std::uint64_t, std::pair<std::size_t, TokenId>> rank_;
  std::vector<std::pair<TokenId, TokenId>> merge_ids_;
  std::vector<TokenId> merge_result_;
  TokenId eow_id_ = 0;
};

/// A piece of pre-tokenized text: a word, or the reserved separator.
struct Piece {
  bool separator = false;
  std::string word;
};

/// Splits on ASCII whitespace; the separator is always its own piece.
inline std::vector<Piece> pretokenize(std::string_view text) {
  std::vector<Piece> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back({false, std::move(cur)});
    cur.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      flush();
      ++i;
    } else if (text.compare(i, augment::kSeparator.size(), augment::kSeparator) == 0) {
      flush();
      out.push_back({true, {}});
      i += augment::kSeparator.size();
    } else {
      cur += c;
      ++i;
    }
  }
  flush();
  return out;
}

struct TrainOptions {
  std::size_t vocab_size = 2000;
  std::size_t min_frequency = 2;
};

/// Greedy pair-merge training. Each step merges the most frequent adjacent
/// symbol pair (ties: smaller left symbol, then smaller right symbol) in
/// every word, left to right. Stops when the vocabulary reaches
/// `vocab_size` or no pair occurs `min_frequency` times.
inline BpeModel train_bpe(const std::vector<std::string>& lines, const TrainOptions& opt = {}) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : lines) {
    for (auto& p : pretokenize(line))
      if (!p.separator) ++word_counts[p.word];
  }
  if (word_counts.empty()) throw ConfigError("train_bpe: corpus contains no words");

  std::set<std::string> chars;
  std::vector<std::vector<std::string>> split_words;
  std::vector<std::size_t> freq;
  for (const auto& [w, n] : word_counts) {
    auto cps = utf8::codepoints(w);
    chars.insert(cps.begin(), cps.end());
    cps.emplace_back(kEndOfWord);
    split_words.push_back(std::move(cps));
    freq.push_back(n);
  }
  std::vector<std::string> alphabet{std::string(kEndOfWord)};
  alphabet.insert(alphabet.end(), chars.begin(), chars.end());
  if (opt.vocab_size < kNumSpecials + alphabet.size()) {
    throw ConfigError("vocab_size " + std::to_string(opt.vocab_size) + " is smaller than specials + alphabet (" +
                      std::to_string(kNumSpecials + alphabet.size()) + ")");
  }
  const std::size_t min_freq = std::max<std::size_t>(opt.min_frequency, 1);

  // Symbols are interned as integers; ties are resolved on their strings.
  std::vector<std::string> names;
  std::unordered_map<std::string, std::uint32_t> ids;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = ids.emplace(s, static_cast<std::uint32_t>(names.size()));
    if (inserted) names.push_back(s);
    return it->second;
  };
  for (const auto& a : alphabet) intern(a);
  std::vector<std::vector<std::uint32_t>> words;
  for (const auto& sw : split_words) {
    std::vector<std::uint32_t> w;
    for (const auto& s : sw) w.push_back(ids.at(s));
    words.push_back(std::move(w));
  }

  auto key = [](std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; };
  std::unordered_map<std::uint64_t, long long> counts;
  std::unordered_map<std::uint64_t, std::set<std::size_t>> where;
  auto account = [&](std::size_t wi, long long sign) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      const auto k = key(w[i], w[i + 1]);
      auto& c = counts[k];
      c += sign * static_cast<long long>(freq[wi]);
      if (sign > 0) where[k].insert(wi);
      if (c == 0) counts.erase(k);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t vocab = kNumSpecials + alphabet.size();
  while (vocab < opt.vocab_size) {
    std::uint64_t best = 0;
    long long best_count = 0;
    for (const auto& [k, c] : counts) {
      if (c < static_cast<long long>(min_freq)) continue;
      if (c > best_count) {
        best = k;
        best_count = c;
      } else if (c == best_count) {
        const auto& bl = names[best >> 32];
        const auto& br = names[best & 0xFFFFFFFFu];
        const auto& kl = names[k >> 32];
        const auto& kr = names[k & 0xFFFFFFFFu];
        if (kl < bl || (kl == bl && kr < br)) best = k;
      }
    }
    if (best_count == 0) break;
    const std::uint32_t l = static_cast<std::uint32_t>(best >> 32);
    const std::uint32_t r = static_cast<std::uint32_t>(best & 0xFFFFFFFFu);
    const std::size_t before = names.size();
    const std::uint32_t merged = intern(names[l] + names[r]);
    if (names.size() > before) ++vocab;
    merges.emplace_back(names[l], names[r]);
    const auto affected = where[best];
    for (std::size_t wi : affected) {
      auto& w = words[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.size(); ++i) present = present || (w[i] == l && w[i + 1] == r);
      if (!present) continue;
      account(wi, -1);
      std::vector<std::uint32_t> next;
      next.reserve(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == l && w[i + 1] == r) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = std::move(next);
      account(wi, +1);
    }
    where.erase(best);
  }
  return BpeModel(std::move(alphabet), std::move(merges));
}

/// Token ids of `text`: per word, its subword segmentation ending in the
/// end-of-word marker; separators map to kSep; unseen characters to kUnk.
inline std::vector<TokenId> encode(const BpeModel& model, std::string_view text) {
  std::vector<TokenId> ids;
  for (const auto& p : pretokenize(text)) {
    if (p.separator) {
      ids.push_back(kSep);
    } else {
      const auto w = model.encode_word(p.word);
      ids.insert(ids.end(), w.begin(), w.end());
    }
  }
  return ids;
}

/// Inverse of encode on whitespace-normalized text: words (and separators)
/// are re-joined with single spaces. PAD ids are skipped.
inline std::string decode(const BpeModel& model, std::span<const TokenId> ids) {
  std::vector<std::string> words;
  std::string cur;
  bool open = false;
  for (TokenId id : ids) {
    if (id == kPad) continue;
    if (id == kSep) {
      if (open) words.push_back(std::move(cur));
      cur.clear();
      open = false;
      words.emplace_back(augment::kSeparator);
      continue;
    }
    const std::string& sym = id == kUnk ? std::string("\xEF\xBF\xBD") : model.symbol(id);
    open = true;
    if (sym.size() >= kEndOfWord.size() && sym.compare(sym.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
      cur.append(sym, 0, sym.size() - kEndOfWord.size());
      words.push_back(std::move(cur));
      cur.clear();
      open = false;
    } else {
      cur += sym;
    }
  }
  if (open) words.push_back(std::move(cur));
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

inline std::string serialize(const BpeModel& model) {
  std::ostringstream os;
  os << kFormatVersion << ' ' << model.vocab_size() << '\n';
  os << "#alphabet " << model.alphabet().size() << '\n';
  for (const auto& a : model.alphabet()) os << a << '\n';
  os << "#merges " << model.merges().size() << '\n';
  for (const auto& [l, r] : model.merges()) os << l << ' ' << r << '\n';
  return os.str();
}

inline BpeModel deserialize(std::string_view text, const std::string& source = "<bpe>") {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) {
        throw FormatError(source + ": truncated (last line has no newline)");
      }
      lines.emplace_back(text.substr(start, end - start));
      start = end + 1;
    }
  }
  auto fail = [&](const std::string& why) -> BpeModel { throw FormatError(source + ": " + why); };
  if (lines.empty()) return fail("empty file");
  std::istringstream head(lines[0]);
  std::string version;
  std::size_t vocab_size = 0;
  if (!(head >> version >> vocab_size)) return fail("bad header '" + lines[0] + "'");
  if (version != kFormatVersion) return fail("version mismatch: expected " + std::string(kFormatVersion) + ", got " + version);
  std::size_t at = 1;
  auto section = [&](const std::string& name) {
    if (at >= lines.size()) fail("missing " + name + " section");
    std::istringstream s(lines[at++]);
    std::string tag;
    std::size_t n = 0;
    if (!(s >> tag >> n) || tag != name) fail("expected '" + name + " <count>' at line " + std::to_string(at));
    return n;
  };
  const std::size_t n_alpha = section("#alphabet");
  if (at + n_alpha > lines.size()) return fail("truncated alphabet");
  std::vector<std::string> alphabet(lines.begin() + static_cast<long>(at), lines.begin() + static_cast<long>(at + n_alpha));
  at += n_alpha;
  const std::size_t n_merges = section("#merges");
  if (at + n_merges != lines.size()) return fail("expected " + std::to_string(n_merges) + " merges, found " + std::to_string(lines.size() - at));
  std::vector<std::pair<std::string, std::string>> merges;
  for (; at < lines.size(); ++at) {
    const auto sp = lines[at].find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= lines[at].size() || lines[at].find(' ', sp + 1) != std::string::npos) {
      return fail("malformed merge at line " + std::to_string(at + 1));
    }
    merges.emplace_back(lines[at].substr(0, sp), lines[at].substr(sp + 1));
  }
  BpeModel model(std::move(alphabet), std::move(merges));
  if (model.vocab_size() != vocab_size) {
    return fail("header vocab size " + std::to_string(vocab_size) + " does not match reconstructed " +
                std::to_string(model.vocab_size()));
  }
  return model;
}

inline void save_model(const BpeModel& model, const std::string& path) { write_file(path, serialize(model)); }

inline BpeModel load_model(const std::string& path) { return deserialize(read_file(path), path); }

}  // namespace mtc::bpe
