#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtc/error.hpp"
#include "mtc/ops.hpp"
#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

namespace mtc::model {

struct ModelConfig {
  std::size_t vocab_size = 2000;
  std::size_t d_model = 128;
  std::size_t ffn_dim = 512;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  double dropout = 0.1;
  std::size_t max_len = 192;
  std::size_t n_pos = 2;
  std::size_t n_contlex = 73;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (vocab_size < 1 || d_model < 1 || ffn_dim < 1 || n_pos < 1 || n_contlex < 1 || max_len < 1) {
      throw ConfigError("model dimensions must be >= 1");
    }
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["vocab_size"] = vocab_size;
    j["d_model"] = d_model;
    j["ffn_dim"] = ffn_dim;
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["dropout"] = dropout;
    j["max_len"] = max_len;
    j["n_pos"] = n_pos;
    j["n_contlex"] = n_contlex;
    j["seed"] = seed;
    return j;
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.vocab_size = j.at("vocab_size").get<std::size_t>();
      c.d_model = j.at("d_model").get<std::size_t>();
      c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
      c.n_layers = j.at("n_layers").get<std::size_t>();
      c.n_heads = j.at("n_heads").get<std::size_t>();
      c.dropout = j.at("dropout").get<double>();
      c.max_len = j.at("max_len").get<std::size_t>();
      c.n_pos = j.at("n_pos").get<std::size_t>();
      c.n_contlex = j.at("n_contlex").get<std::size_t>();
      c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed model config: ") + e.what());
    }
    return c;
  }
};

/// Right-padded token batch. PAD is id 0.
struct Batch {
  std::vector<std::int32_t> ids;  // batch x len
  nn::SequenceMask mask;
};

/// Pads sequences to the longest one, after truncating each to `max_len`.
inline Batch make_batch(const std::vector<const std::vector<std::int32_t>*>& seqs, std::size_t max_len) {
  Batch b;
  std::size_t len = 1;
  for (const auto* s : seqs) len = std::max(len, std::min(s->size(), max_len));
  b.mask.batch = seqs.size();
  b.mask.len = len;
  b.ids.assign(seqs.size() * len, 0);
  b.mask.valid.assign(seqs.size() * len, 0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::size_t n = std::min(seqs[i]->size(), max_len);
    for (std::size_t l = 0; l < n; ++l) {
      b.ids[i * len + l] = (*seqs[i])[l];
      b.mask.valid[i * len + l] = 1;
    }
  }
  return b;
}

inline Batch make_batch(const std::vector<std::vector<std::int32_t>>& seqs, std::size_t max_len) {
  std::vector<const std::vector<std::int32_t>*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return make_batch(ptrs, max_len);
}

template <class T>
struct Logits {
  nn::Tensor<T> pos;      // batch x n_pos
  nn::Tensor<T> contlex;  // batch x n_contlex
};

/// Detached eval-mode scores, independent of the model's scalar type.
struct BatchLogits {
  std::size_t batch = 0;
  std::size_t n_pos = 0;
  std::size_t n_contlex = 0;
  std::vector<double> pos;
  std::vector<double> contlex;
};

/// Per-layer attention probabilities recorded during forward, each
/// [batch x heads x len x len].
template <class T>
struct AttentionTrace {
  std::vector<std::vector<T>> layers;
};

template <class T>
struct NamedTensor {
  std::string name;
  nn::Tensor<T> tensor;
};

/// Fixed sinusoidal position table [len x d].
inline std::vector<double> sinusoidal_table(std::size_t len, std::size_t d) {
  std::vector<double> pe(len * d);
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(p) / std::pow(10000.0, expo);
      pe[p * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

inline double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Shared-embedding transformer encoder with a POS head and a Contlex head.
///
/// forward(): embed * sqrt(d_model) + sinusoidal positions, dropout, then
/// n_layers post-norm blocks (self-attention with padded keys masked,
/// add & norm, ReLU FFN, add & norm), mean pooling over non-PAD positions,
/// and one linear head per task.
///
/// Copies share weights; use clone() for an independent model.
template <class T>
class TransformerClassifier {
 public:
  struct Layer {
    nn::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Tensor<T> ln1_g, ln1_b;
    nn::Tensor<T> w1, b1, w2, b2;
    nn::Tensor<T> ln2_g, ln2_b;
  };

  explicit TransformerClassifier(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng(cfg_.seed).split("init");
    const std::size_t d = cfg_.d_model;
    embedding_ = xavier(rng, cfg_.vocab_size, d);
    layers_.resize(cfg_.n_layers);
    for (auto& L : layers_) {
      L.wq = xavier(rng, d, d);
      L.bq = zeros(d);
      L.wk = xavier(rng, d, d);
      L.bk = zeros(d);
      L.wv = xavier(rng, d, d);
      L.bv = zeros(d);
      L.wo = xavier(rng, d, d);
      L.bo = zeros(d);
      L.ln1_g = ones(d);
      L.ln1_b = zeros(d);
      L.w1 = xavier(rng, d, cfg_.ffn_dim);
      L.b1 = zeros(cfg_.ffn_dim);
      L.w2 = xavier(rng, cfg_.ffn_dim, d);
      L.b2 = zeros(d);
      L.ln2_g = ones(d);
      L.ln2_b = zeros(d);
    }
    pos_w_ = xavier(rng, d, cfg_.n_pos);
    pos_b_ = zeros(cfg_.n_pos);
    contlex_w_ = xavier(rng, d, cfg_.n_contlex);
    contlex_b_ = zeros(cfg_.n_contlex);
    const auto pe = sinusoidal_table(cfg_.max_len, d);
    positions_.assign(pe.begin(), pe.end());
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Every learnable tensor, in a fixed order with stable names.
  std::vector<NamedTensor<T>> parameters() const {
    std::vector<NamedTensor<T>> p;
    p.push_back({"embedding", embedding_});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& L = layers_[i];
      const std::string pre = "layer" + std::to_string(i) + ".";
      p.push_back({pre + "attn.wq", L.wq});
      p.push_back({pre + "attn.bq", L.bq});
      p.push_back({pre + "attn.wk", L.wk});
      p.push_back({pre + "attn.bk", L.bk});
      p.push_back({pre + "attn.wv", L.wv});
      p.push_back({pre + "attn.bv", L.bv});
      p.push_back({pre + "attn.wo", L.wo});
      p.push_back({pre + "attn.bo", L.bo});
      p.push_back({pre + "ln1.gamma", L.ln1_g});
      p.push_back({pre + "ln1.beta", L.ln1_b});
      p.push_back({pre + "ffn.w1", L.w1});
      p.push_back({pre + "ffn.b1", L.b1});
      p.push_back({pre + "ffn.w2", L.w2});
      p.push_back({pre + "ffn.b2", L.b2});
      p.push_back({pre + "ln2.gamma", L.ln2_g});
      p.push_back({pre + "ln2.beta", L.ln2_b});
    }
    p.push_back({"pos_head.weight", pos_w_});
    p.push_back({"pos_head.bias", pos_b_});
    p.push_back({"contlex_head.weight", contlex_w_});
    p.push_back({"contlex_head.bias", contlex_b_});
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

  /// Independent deep copy (optionally converted to another scalar type).
  template <class U = T>
  TransformerClassifier<U> clone() const {
    TransformerClassifier<U> out(cfg_, typename TransformerClassifier<U>::Uninitialized{});
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto& dv = dst[i].tensor.values();
      const auto& sv = src[i].tensor.values();
      for (std::size_t k = 0; k < sv.size(); ++k) dv[k] = static_cast<U>(sv[k]);
    }
    return out;
  }

  Logits<T> forward(const Batch& batch, bool training, Rng& rng, AttentionTrace<T>* trace = nullptr) const {
    const std::size_t B = batch.mask.batch, L = batch.mask.len, d = cfg_.d_model;
    if (L > cfg_.max_len) {
      throw DataError("sequence length " + std::to_string(L) + " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    if (batch.ids.size() != B * L) throw DimensionError("batch ids do not match mask shape");
    const double p = training ? cfg_.dropout : 0.0;

    auto x = nn::embedding(embedding_, std::span<const std::int32_t>(batch.ids));
    x = nn::scale(x, static_cast<T>(std::sqrt(static_cast<double>(d))));
    std::vector<T> pe(B * L * d);
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(positions_.begin(), L * d, pe.begin() + static_cast<long>(b * L * d));
    x = nn::add(x, nn::Tensor<T>::from({B * L, d}, std::move(pe)));
    x = nn::dropout(x, p, training, rng);

    if (trace) trace->layers.clear();
    for (const auto& Ly : layers_) {
      auto q = nn::add_bias(nn::matmul(x, Ly.wq), Ly.bq);
      auto k = nn::add_bias(nn::matmul(x, Ly.wk), Ly.bk);
      auto v = nn::add_bias(nn::matmul(x, Ly.wv), Ly.bv);
      std::vector<T>* probs = nullptr;
      if (trace) probs = &trace->layers.emplace_back();
      auto a = nn::attention(q, k, v, batch.mask, cfg_.n_heads, p, training, rng, probs);
      a = nn::add_bias(nn::matmul(a, Ly.wo), Ly.bo);
      x = nn::layer_norm(nn::add(x, a), Ly.ln1_g, Ly.ln1_b, static_cast<T>(1e-5));
      auto h = nn::relu(nn::add_bias(nn::matmul(x, Ly.w1), Ly.b1));
      h = nn::dropout(h, p, training, rng);
      auto f = nn::add_bias(nn::matmul(h, Ly.w2), Ly.b2);
      x = nn::layer_norm(nn::add(x, f), Ly.ln2_g, Ly.ln2_b, static_cast<T>(1e-5));
    }
    auto pooled = nn::masked_mean_pool(x, batch.mask);
    return {nn::add_bias(nn::matmul(pooled, pos_w_), pos_b_),
            nn::add_bias(nn::matmul(pooled, contlex_w_), contlex_b_)};
  }

  /// Eval-mode forward without graph recording.
  BatchLogits infer(const Batch& batch) const {
    nn::NoGradGuard guard;
    Rng unused(0);
    const auto out = forward(batch, false, unused);
    BatchLogits r;
    r.batch = batch.mask.batch;
    r.n_pos = cfg_.n_pos;
    r.n_contlex = cfg_.n_contlex;
    r.pos.assign(out.pos.values().begin(), out.pos.values().end());
    r.contlex.assign(out.contlex.values().begin(), out.contlex.values().end());
    return r;
  }

  struct Uninitialized {};
  TransformerClassifier(const ModelConfig& cfg, Uninitialized) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model;
    embedding_ = nn::Tensor<T>::zeros({cfg_.vocab_size, d}, true);
    layers_.resize(cfg_.n_layers);
    for (auto& L : layers_) {
      L.wq = nn::Tensor<T>::zeros({d, d}, true);
      L.bq = zeros(d);
      L.wk = nn::Tensor<T>::zeros({d, d}, true);
      L.bk = zeros(d);
      L.wv = nn::Tensor<T>::zeros({d, d}, true);
      L.bv = zeros(d);
      L.wo = nn::Tensor<T>::zeros({d, d}, true);
      L.bo = zeros(d);
      L.ln1_g = ones(d);
      L.ln1_b = zeros(d);
      L.w1 = nn::Tensor<T>::zeros({d, cfg_.ffn_dim}, true);
      L.b1 = zeros(cfg_.ffn_dim);
      L.w2 = nn::Tensor<T>::zeros({cfg_.ffn_dim, d}, true);
      L.b2 = zeros(d);
      L.ln2_g = ones(d);
      L.ln2_b = zeros(d);
    }
    pos_w_ = nn::Tensor<T>::zeros({d, cfg_.n_pos}, true);
    pos_b_ = zeros(cfg_.n_pos);
    contlex_w_ = nn::Tensor<T>::zeros({d, cfg_.n_contlex}, true);
    contlex_b_ = zeros(cfg_.n_contlex);
    const auto pe = sinusoidal_table(cfg_.max_len, d);
    positions_.assign(pe.begin(), pe.end());
  }

 private:
  static nn::Tensor<T> xavier(Rng& rng, std::size_t rows, std::size_t cols) {
    const double a = xavier_bound(rows, cols);
    std::vector<T> w(rows * cols);
    // Largest T strictly inside the bound, so rounding keeps the interval open.
    T limit = static_cast<T>(a);
    while (static_cast<double>(limit) >= a) limit = std::nextafter(limit, T(0));
    for (auto& x : w) x = std::clamp(static_cast<T>(rng.uniform(-a, a)), -limit, limit);
    return nn::Tensor<T>::from({rows, cols}, std::move(w), true);
  }
  static nn::Tensor<T> zeros(std::size_t n) { return nn::Tensor<T>::zeros({n}, true); }
  static nn::Tensor<T> ones(std::size_t n) { return nn::Tensor<T>::from({n}, std::vector<T>(n, T(1)), true); }

  ModelConfig cfg_;
  nn::Tensor<T> embedding_;
  std::vector<Layer> layers_;
  nn::Tensor<T> pos_w_, pos_b_, contlex_w_, contlex_b_;
  std::vector<T> positions_;
};

}  // namespace mtc::model
