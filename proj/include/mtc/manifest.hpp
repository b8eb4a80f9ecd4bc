#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"
#include "mtc/hash.hpp"

namespace mtc::manifest {

// Workdir bookkeeping. Every artifact entry records its file hash, the hash
// of the config that produced it, and the hashes of the upstream artifacts it
// was built from. Consumers re-hash the file and compare the upstream hashes
// against the current entries, so a stale or foreign artifact is rejected.

struct Artifact {
  std::string path;  // relative to the workdir
  std::string hash;
  std::string config_hash;
  std::string producer;  // command that wrote it
  std::map<std::string, std::string> upstream;  // artifact name -> hash at build time
};

class Manifest {
 public:
  static constexpr const char* kFile = "manifest.json";

  explicit Manifest(std::filesystem::path workdir) : dir_(std::move(workdir)) {
    const auto p = dir_ / kFile;
    if (!std::filesystem::exists(p)) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(p.string()));
      for (const auto& [name, a] : j.at("artifacts").items()) {
        Artifact art;
        art.path = a.at("path").get<std::string>();
        art.hash = a.at("hash").get<std::string>();
        art.config_hash = a.at("config_hash").get<std::string>();
        art.producer = a.at("producer").get<std::string>();
        art.upstream = a.at("upstream").get<std::map<std::string, std::string>>();
        artifacts_[name] = std::move(art);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::string path_of(const std::string& rel) const { return (dir_ / rel).string(); }
  bool has(const std::string& name) const { return artifacts_.count(name) != 0; }
  const std::map<std::string, Artifact>& artifacts() const { return artifacts_; }

  /// Checks `name` and returns its absolute path. `hint` names the command
  /// that produces it.
  std::string require(const std::string& name, const std::string& hint) const {
    auto it = artifacts_.find(name);
    if (it == artifacts_.end()) {
      throw IoError("missing artifact '" + name + "' in " + dir_.string() + "; run `mtc " + hint + "` first");
    }
    const auto& a = it->second;
    const auto full = path_of(a.path);
    if (!std::filesystem::exists(full)) {
      throw IoError("missing file " + full + " (artifact '" + name + "'); run `mtc " + hint + "` again");
    }
    if (hash_file(full) != a.hash) {
      throw FormatError(full + " was modified after `mtc " + a.producer + "` wrote it; rerun that command");
    }
    for (const auto& [up, h] : a.upstream) {
      auto u = artifacts_.find(up);
      if (u == artifacts_.end() || u->second.hash != h) {
        throw FormatError("artifact '" + name + "' was built from a different '" + up +
                          "' than the one in this workdir; rerun `mtc " + a.producer + "`");
      }
    }
    return full;
  }

  const Artifact& get(const std::string& name) const { return artifacts_.at(name); }

  /// Records a freshly written file. Upstream artifacts must already be
  /// registered.
  void record(const std::string& name, const std::string& rel_path, const std::string& producer,
              const std::string& config_hash, const std::vector<std::string>& upstream) {
    Artifact a;
    a.path = rel_path;
    a.hash = hash_file(path_of(rel_path));
    a.config_hash = config_hash;
    a.producer = producer;
    for (const auto& u : upstream) a.upstream[u] = artifacts_.at(u).hash;
    artifacts_[name] = std::move(a);
  }

  /// Records an input that lives outside the workdir (detected by hash only).
  void record_input(const std::string& name, const std::string& abs_path) {
    Artifact a;
    a.path = std::filesystem::absolute(abs_path).string();
    a.hash = hash_file(abs_path);
    a.producer = "input";
    artifacts_[name] = std::move(a);
  }

  void save() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json arts = nlohmann::ordered_json::object();
    for (const auto& [name, a] : artifacts_) {
      nlohmann::ordered_json o;
      o["path"] = a.path;
      o["hash"] = a.hash;
      o["config_hash"] = a.config_hash;
      o["producer"] = a.producer;
      o["upstream"] = a.upstream;
      arts[name] = o;
    }
    j["artifacts"] = arts;
    write_file((dir_ / kFile).string(), j.dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Artifact> artifacts_;
};

}  // namespace mtc::manifest
