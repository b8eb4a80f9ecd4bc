#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"
#include "mtc/hash.hpp"
#include "mtc/model.hpp"
#include "mtc/optim.hpp"

namespace mtc::checkpoint {

inline constexpr std::string_view kMagic = "mtc/v1";

// Layout: one line of JSON header, '\n', then a little-endian float32 blob.
// The header lists every tensor with its shape and byte offset in the blob.

struct StoredTensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  model::ModelConfig config;
  std::size_t epoch = 0;
  std::map<std::string, StoredTensor> tensors;  // model weights
  std::map<std::string, StoredTensor> adam_m;
  std::map<std::string, StoredTensor> adam_v;
  std::optional<std::size_t> optimizer_step;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

namespace detail {

inline void put_floats(std::string& blob, const std::vector<float>& v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");
  const auto* p = reinterpret_cast<const char*>(v.data());
  blob.append(p, v.size() * sizeof(float));
}

template <class T>
std::vector<float> to_float(std::span<const T> s) {
  return {s.begin(), s.end()};
}

}  // namespace detail

/// Serializes model weights and, when given, the optimizer moments.
template <class T>
std::string serialize(const model::TransformerClassifier<T>& m, const optim::AdamW<T>* opt, std::size_t epoch,
                      const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::string blob;
  auto add = [&](const std::string& name, const std::vector<std::size_t>& shape, const std::vector<float>& v) {
    manifest.push_back({{"name", name}, {"shape", shape}, {"offset", blob.size()}});
    detail::put_floats(blob, v);
  };
  const auto params = m.parameters();
  for (const auto& p : params) add(p.name, p.tensor.shape(), detail::to_float<T>(p.tensor.data()));
  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["config"] = m.config().to_json();
  header["epoch"] = epoch;
  if (opt) {
    header["optimizer"] = {{"kind", "adamw"}, {"step", opt->step_count()}};
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& mo = opt->moments()[i];
      std::vector<float> zero(params[i].tensor.numel(), 0.0f);
      add("adam.m." + params[i].name, params[i].tensor.shape(),
          mo.m.empty() ? zero : detail::to_float<T>(std::span<const T>(mo.m)));
      add("adam.v." + params[i].name, params[i].tensor.shape(),
          mo.v.empty() ? zero : detail::to_float<T>(std::span<const T>(mo.v)));
    }
  }
  header["meta"] = meta;
  header["tensors"] = manifest;
  header["blob_bytes"] = blob.size();
  std::string out = header.dump();
  out += '\n';
  out += blob;
  return out;
}

template <class T>
void save_checkpoint(const model::TransformerClassifier<T>& m, const optim::AdamW<T>* opt, std::size_t epoch,
                     const std::string& path, const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  write_file(path, serialize(m, opt, epoch, meta));
}

inline Checkpoint deserialize(const std::string& bytes, const std::string& source = "<checkpoint>") {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError(source + ": missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(source + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  try {
    if (header.at("magic").get<std::string>() != kMagic) {
      throw FormatError(source + ": not a " + std::string(kMagic) + " checkpoint");
    }
    ck.config = model::ModelConfig::from_json(header.at("config"));
    ck.epoch = header.at("epoch").get<std::size_t>();
    const auto blob_bytes = header.at("blob_bytes").get<std::size_t>();
    if (bytes.size() - nl - 1 != blob_bytes) {
      throw FormatError(source + ": blob has " + std::to_string(bytes.size() - nl - 1) + " bytes, header says " +
                        std::to_string(blob_bytes));
    }
    const char* blob = bytes.data() + nl + 1;
    for (const auto& t : header.at("tensors")) {
      StoredTensor st;
      st.shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto n = nn::numel(st.shape);
      if (offset % sizeof(float) != 0 || offset + n * sizeof(float) > blob_bytes) {
        throw FormatError(source + ": tensor '" + t.at("name").get<std::string>() + "' lies outside the blob");
      }
      st.values.resize(n);
      std::memcpy(st.values.data(), blob + offset, n * sizeof(float));
      const auto name = t.at("name").get<std::string>();
      if (name.rfind("adam.m.", 0) == 0) ck.adam_m[name.substr(7)] = std::move(st);
      else if (name.rfind("adam.v.", 0) == 0) ck.adam_v[name.substr(7)] = std::move(st);
      else ck.tensors[name] = std::move(st);
    }
    if (header.contains("optimizer")) ck.optimizer_step = header["optimizer"].at("step").get<std::size_t>();
    if (header.contains("meta")) ck.meta = header["meta"];
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": malformed checkpoint header: " + e.what());
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize(read_file(path), path); }

/// Rebuilds a model from stored weights.
template <class T>
model::TransformerClassifier<T> restore_model(const Checkpoint& ck) {
  model::TransformerClassifier<T> m(ck.config, typename model::TransformerClassifier<T>::Uninitialized{});
  for (auto& p : m.parameters()) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint lacks tensor '" + p.name + "'");
    if (it->second.shape != p.tensor.shape()) throw FormatError("checkpoint tensor '" + p.name + "' has wrong shape");
    auto& dst = p.tensor.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
  }
  return m;
}

/// Restores optimizer moments into `opt`, which must belong to a model of
/// `expected` config. A differing config is a format error.
template <class T>
void restore_optimizer(const Checkpoint& ck, const model::ModelConfig& expected, optim::AdamW<T>& opt) {
  if (!(ck.config == expected)) throw FormatError("checkpoint config does not match the model being resumed");
  if (!ck.optimizer_step) throw FormatError("checkpoint has no optimizer state");
  opt.set_step_count(*ck.optimizer_step);
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto& name = opt.params()[i].name;
    auto m = ck.adam_m.find(name);
    auto v = ck.adam_v.find(name);
    if (m == ck.adam_m.end() || v == ck.adam_v.end()) throw FormatError("checkpoint lacks moments for '" + name + "'");
    opt.moments()[i].m.assign(m->second.values.begin(), m->second.values.end());
    opt.moments()[i].v.assign(v->second.values.begin(), v->second.values.end());
  }
}

}  // namespace mtc::checkpoint
