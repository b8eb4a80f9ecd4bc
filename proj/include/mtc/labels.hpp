#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtc/corpus.hpp"
#include "mtc/error.hpp"
#include "mtc/hash.hpp"

namespace mtc::labels {

/// Contiguous range of global Contlex ids owned by one POS.
struct Block {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// POS encoder, one Contlex encoder per POS, and the flattened global
/// Contlex index used by the single classification head: the per-POS label
/// lists concatenated in POS order.
class LabelSpace {
 public:
  LabelSpace() = default;

  LabelSpace(std::vector<std::string> pos_labels, std::map<std::string, std::vector<std::string>> per_pos)
      : pos_labels_(std::move(pos_labels)), per_pos_(std::move(per_pos)) {
    build();
  }

  /// Sorted label inventories of `records` (contlex must be normalized).
  static LabelSpace fit(const corpus::Records& records) {
    if (records.empty()) throw UsageError("cannot fit labels on an empty record set");
    std::set<std::string> pos;
    std::map<std::string, std::set<std::string>> per;
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& r : records) {
      if (r.contlex.rfind(r.pos + "_", 0) != 0) {
        throw DataError("contlex '" + r.contlex + "' of lemma '" + r.lemma + "' is inconsistent with POS '" + r.pos + "'");
      }
      pos.insert(r.pos);
      per[r.pos].insert(r.contlex);
      ++counts[{r.pos, r.contlex}];
    }
    std::map<std::string, std::vector<std::string>> lists;
    for (const auto& [p, s] : per) lists[p] = {s.begin(), s.end()};
    LabelSpace space({pos.begin(), pos.end()}, std::move(lists));
    space.counts_ = std::move(counts);
    return space;
  }

  std::size_t n_pos() const { return pos_labels_.size(); }
  std::size_t n_contlex() const { return global_.size(); }
  const std::vector<std::string>& pos_labels() const { return pos_labels_; }
  const std::vector<std::string>& contlex_labels(const std::string& pos) const { return per_pos_.at(pos); }
  const std::vector<std::string>& global_contlex() const { return global_; }
  const std::map<std::pair<std::string, std::string>, std::size_t>& counts() const { return counts_; }

  std::size_t encode_pos(const std::string& pos) const {
    for (std::size_t i = 0; i < pos_labels_.size(); ++i)
      if (pos_labels_[i] == pos) return i;
    throw LookupError("unknown POS label '" + pos + "'");
  }

  const std::string& decode_pos(std::size_t id) const {
    if (id >= pos_labels_.size()) throw LookupError("POS id " + std::to_string(id) + " out of range");
    return pos_labels_[id];
  }

  std::size_t encode_contlex(const std::string& pos, const std::string& label) const {
    const auto b = block(encode_pos(pos));
    const auto& list = per_pos_.at(pos);
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i] == label) return b.offset + i;
    throw LookupError("unknown contlex '" + label + "' for POS '" + pos + "'");
  }

  std::pair<std::string, std::string> decode_contlex(std::size_t id) const {
    if (id >= global_.size()) throw LookupError("contlex id " + std::to_string(id) + " out of range");
    return {pos_labels_[pos_of_global_[id]], global_[id]};
  }

  std::size_t pos_of_global(std::size_t id) const { return pos_of_global_.at(id); }

  Block block(std::size_t pos_id) const { return blocks_.at(pos_id); }

  std::vector<bool> mask_for_pos(const std::string& pos) const { return mask_for_pos_id(encode_pos(pos)); }

  std::vector<bool> mask_for_pos_id(std::size_t pos_id) const {
    std::vector<bool> m(global_.size(), false);
    const auto b = block(pos_id);
    for (std::size_t i = 0; i < b.size; ++i) m[b.offset + i] = true;
    return m;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pos_labels"] = pos_labels_;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& p : pos_labels_) per[p] = per_pos_.at(p);
    j["per_pos_contlex"] = per;
    return j;
  }

  static LabelSpace from_json(const nlohmann::json& j) {
    try {
      return LabelSpace(j.at("pos_labels").get<std::vector<std::string>>(),
                        j.at("per_pos_contlex").get<std::map<std::string, std::vector<std::string>>>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed label space: ") + e.what());
    }
  }

  void save(const std::string& path) const { write_file(path, to_json().dump(2) + "\n"); }

  static LabelSpace load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ": " + e.what());
    }
  }

  bool operator==(const LabelSpace& o) const { return pos_labels_ == o.pos_labels_ && per_pos_ == o.per_pos_; }

 private:
  void build() {
    global_.clear();
    pos_of_global_.clear();
    blocks_.clear();
    std::set<std::string> seen;
    for (std::size_t p = 0; p < pos_labels_.size(); ++p) {
      auto it = per_pos_.find(pos_labels_[p]);
      if (it == per_pos_.end() || it->second.empty()) {
        throw FormatError("POS '" + pos_labels_[p] + "' has no contlex labels");
      }
      blocks_.push_back({global_.size(), it->second.size()});
      for (const auto& l : it->second) {
        if (!seen.insert(l).second) throw FormatError("contlex label '" + l + "' appears twice");
        global_.push_back(l);
        pos_of_global_.push_back(p);
      }
    }
    if (per_pos_.size() != pos_labels_.size()) throw FormatError("per_pos_contlex keys do not match pos_labels");
  }

  std::vector<std::string> pos_labels_;
  std::map<std::string, std::vector<std::string>> per_pos_;
  std::vector<std::string> global_;
  std::vector<std::size_t> pos_of_global_;
  std::vector<Block> blocks_;
  std::map<std::pair<std::string, std::string>, std::size_t> counts_;
};

}  // namespace mtc::labels
