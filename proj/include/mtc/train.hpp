#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/checkpoint.hpp"
#include "mtc/error.hpp"
#include "mtc/evaluate.hpp"
#include "mtc/labels.hpp"
#include "mtc/log.hpp"
#include "mtc/model.hpp"
#include "mtc/ops.hpp"
#include "mtc/optim.hpp"
#include "mtc/rng.hpp"
#include "mtc/schedule.hpp"

namespace mtc::train {

struct LossWeights {
  double pos = 1.0;
  double contlex = 1.0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 512;
  double lr = 0.003;
  schedule::SchedulerSpec scheduler = schedule::SchedulerSpec::cosine(25);
  optim::AdamWOptions adam;
  LossWeights loss_weights;
  std::size_t swa_start_epoch = 80;  // 1-based, inclusive
  double swa_lr = 0.0005;
  std::size_t swa_anneal_epochs = 5;
  std::uint64_t seed = 0;
  eval::MaskingMode checkpoint_masking = eval::MaskingMode::predicted_pos;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (!(swa_lr > 0)) throw ConfigError("swa_lr must be > 0");
    if (swa_start_epoch < 1 || swa_start_epoch > epochs) {
      throw ConfigError("swa_start_epoch must lie in [1, epochs], got " + std::to_string(swa_start_epoch));
    }
    if (loss_weights.pos < 0 || loss_weights.contlex < 0) throw ConfigError("loss weights must be >= 0");
    if (adam.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
      throw ConfigError("adam betas must lie in [0,1)");
    }
    scheduler.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["scheduler"] = scheduler.to_json();
    j["weight_decay"] = adam.weight_decay;
    j["betas"] = {adam.beta1, adam.beta2};
    j["eps"] = adam.eps;
    j["loss_weights"] = {{"pos", loss_weights.pos}, {"contlex", loss_weights.contlex}};
    j["swa_start_epoch"] = swa_start_epoch;
    j["swa_lr"] = swa_lr;
    j["swa_anneal_epochs"] = swa_anneal_epochs;
    j["seed"] = seed;
    j["checkpoint_masking"] = eval::to_string(checkpoint_masking);
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }

  /// Starts from `base` and overrides the keys present in `j`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    auto& c = base;
    try {
      for (const auto& [key, v] : j.items()) {
        if (key == "epochs") c.epochs = v.get<std::size_t>();
        else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "scheduler") c.scheduler = schedule::SchedulerSpec::from_json(v);
        else if (key == "weight_decay") c.adam.weight_decay = v.get<double>();
        else if (key == "betas") {
          const auto b = v.get<std::vector<double>>();
          if (b.size() != 2) throw ConfigError("betas needs two values");
          c.adam.beta1 = b[0];
          c.adam.beta2 = b[1];
        } else if (key == "eps") c.adam.eps = v.get<double>();
        else if (key == "loss_weights") {
          for (const auto& [wk, wv] : v.items()) {
            if (wk == "pos") c.loss_weights.pos = wv.get<double>();
            else if (wk == "contlex") c.loss_weights.contlex = wv.get<double>();
            else throw ConfigError("unknown loss weight '" + wk + "'");
          }
        } else if (key == "swa_start_epoch") c.swa_start_epoch = v.get<std::size_t>();
        else if (key == "swa_lr") c.swa_lr = v.get<double>();
        else if (key == "swa_anneal_epochs") c.swa_anneal_epochs = v.get<std::size_t>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "checkpoint_masking") c.checkpoint_masking = eval::parse_masking(v.get<std::string>());
        else throw ConfigError("unknown train config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad train config value: ") + e.what());
    }
    c.validate();
    return c;
  }
};

template <class T>
struct LossParts {
  nn::Tensor<T> total;
  nn::Tensor<T> pos;
  nn::Tensor<T> contlex;
};

/// w_pos * CE(pos) + w_contlex * CE(contlex).
template <class T>
LossParts<T> combined_loss(const nn::Tensor<T>& pos_logits, const nn::Tensor<T>& contlex_logits,
                           std::span<const std::size_t> pos_targets, std::span<const std::size_t> contlex_targets,
                           const LossWeights& w) {
  if (w.pos < 0 || w.contlex < 0) throw ConfigError("loss weights must be >= 0");
  if (pos_logits.dim(0) != contlex_logits.dim(0)) throw DimensionError("combined_loss: batch sizes differ");
  auto lp = nn::cross_entropy(pos_logits, pos_targets);
  auto lc = nn::cross_entropy(contlex_logits, contlex_targets);
  auto total = nn::add(nn::scale(lp, static_cast<T>(w.pos)), nn::scale(lc, static_cast<T>(w.contlex)));
  return {total, lp, lc};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  bool swa = false;
  double loss = 0.0;
  double loss_pos = 0.0;
  double loss_contlex = 0.0;
  double val_pos_f1 = 0.0;
  double val_contlex_f1 = 0.0;
  double val_metric = 0.0;
  std::string checkpoint;  // written this epoch, if any

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["phase"] = swa ? "swa" : "schedule";
    j["loss"] = loss;
    j["loss_pos"] = loss_pos;
    j["loss_contlex"] = loss_contlex;
    j["val_pos_weighted_f1"] = val_pos_f1;
    j["val_contlex_weighted_f1"] = val_contlex_f1;
    j["val_metric"] = val_metric;
    j["checkpoint"] = checkpoint.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(checkpoint);
    return j;
  }

  static EpochRecord from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.lr = j.at("lr").get<double>();
    r.swa = j.at("phase").get<std::string>() == "swa";
    r.loss = j.at("loss").get<double>();
    r.loss_pos = j.at("loss_pos").get<double>();
    r.loss_contlex = j.at("loss_contlex").get<double>();
    r.val_pos_f1 = j.at("val_pos_weighted_f1").get<double>();
    r.val_contlex_f1 = j.at("val_contlex_weighted_f1").get<double>();
    r.val_metric = j.at("val_metric").get<double>();
    if (!j.at("checkpoint").is_null()) r.checkpoint = j.at("checkpoint").get<std::string>();
    return r;
  }
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t swa_snapshots = 0;
  std::string best_checkpoint;
  std::string swa_model;

  /// One JSON object per epoch, one per line.
  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : epochs) out += e.to_json().dump() + "\n";
    return out;
  }

  static RunHistory from_jsonl(std::string_view text, const std::string& source = "<history>") {
    RunHistory h;
    std::size_t line = 0;
    for (const auto& l : tsv::split(text, '\n')) {
      ++line;
      if (l.empty()) continue;
      try {
        h.epochs.push_back(EpochRecord::from_json(nlohmann::json::parse(l)));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": line " + std::to_string(line) + ": " + e.what());
      }
    }
    return h;
  }

  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs.size();
    j["best_epoch"] = best_epoch;
    j["best_metric"] = best_metric;
    j["best_checkpoint"] = best_checkpoint;
    j["swa_snapshots"] = swa_snapshots;
    j["swa_model"] = swa_model;
    return j;
  }
};

template <class T>
struct TrainResult {
  model::TransformerClassifier<T> swa;
  model::TransformerClassifier<T> best;
  model::TransformerClassifier<T> last;  // weights after the final epoch
  RunHistory history;
};

struct TrainOutputs {
  std::string checkpoint_dir;  // empty: keep everything in memory
  bool resume_checkpoints = true;  // write last.ckpt with optimizer state each epoch
};

/// Learning rate of 1-based `epoch`, given the monitor values of the epochs
/// before it.
inline double epoch_lr(const TrainConfig& cfg, std::size_t epoch, std::span<const double> monitor) {
  if (epoch < cfg.swa_start_epoch) return schedule::scheduler_lr(cfg.scheduler, epoch - 1, cfg.lr, monitor);
  const double start =
      schedule::scheduler_lr(cfg.scheduler, cfg.swa_start_epoch - 1, cfg.lr, monitor.first(cfg.swa_start_epoch - 1));
  return schedule::swalr(epoch - cfg.swa_start_epoch, start, cfg.swa_lr, cfg.swa_anneal_epochs);
}

namespace detail {

template <class T>
std::vector<std::span<const T>> weight_views(const model::TransformerClassifier<T>& m) {
  std::vector<std::span<const T>> out;
  for (const auto& p : m.parameters()) out.push_back(p.tensor.data());
  return out;
}

template <class T>
model::TransformerClassifier<T> from_average(const model::TransformerClassifier<T>& like,
                                             const schedule::SwaState& swa) {
  auto out = like.clone();
  auto params = out.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i].tensor.values();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<T>(swa.average[i][k]);
  }
  return out;
}

inline std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

}  // namespace detail

/// Full training run. Epochs before swa_start_epoch follow the configured
/// scheduler; from swa_start_epoch on the rate follows SWALR and one weight
/// snapshot per epoch enters the running average. The best validation
/// weights are kept as well.
template <class T>
TrainResult<T> train(model::TransformerClassifier<T> net, const std::vector<eval::Example>& train_set,
                     const std::vector<eval::Example>& val_set, const labels::LabelSpace& space,
                     const TrainConfig& cfg, const TrainOutputs& outputs = {},
                     const std::optional<checkpoint::Checkpoint>& resume = std::nullopt) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");
  eval::check_compatible(net.config(), space, net.config().vocab_size);

  optim::AdamW<T> opt(net.parameters(), cfg.adam);
  RunHistory history;
  std::vector<double> monitor;
  std::optional<model::TransformerClassifier<T>> best;
  schedule::SwaState swa;
  std::size_t first_epoch = 1;

  namespace fs = std::filesystem;
  if (!outputs.checkpoint_dir.empty()) fs::create_directories(outputs.checkpoint_dir);

  if (resume) {
    // Resume restarts at an epoch boundary, so every stream below is
    // re-derived from (seed, epoch) exactly as in an uninterrupted run.
    if (!(resume->config == net.config())) throw FormatError("checkpoint config does not match the model being resumed");
    if (!resume->meta.contains("train_config") || nlohmann::json::parse(resume->meta["train_config"].dump()) != nlohmann::json::parse(cfg.to_json().dump())) {
      throw FormatError("checkpoint was written under a different train config");
    }
    if (resume->epoch + 1 > cfg.swa_start_epoch) {
      throw ConfigError("resuming inside the SWA phase is not supported");
    }
    auto restored = checkpoint::restore_model<T>(*resume);
    auto dst = net.parameters();
    auto src = restored.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].tensor.values() = src[i].tensor.values();
    checkpoint::restore_optimizer(*resume, net.config(), opt);
    for (const auto& e : resume->meta.at("history")) {
      history.epochs.push_back(EpochRecord::from_json(nlohmann::json::parse(e.dump())));
    }
    for (const auto& e : history.epochs) monitor.push_back(e.val_metric);
    const auto& b = resume->meta.at("best");
    history.best_epoch = b.at("epoch").get<std::size_t>();
    history.best_metric = b.at("metric").get<double>();
    history.best_checkpoint = b.at("checkpoint").get<std::string>();
    if (history.best_epoch > 0) {
      if (history.best_checkpoint.empty()) throw FormatError("resume checkpoint does not name the best weights");
      best = checkpoint::restore_model<T>(checkpoint::load_checkpoint(history.best_checkpoint));
    }
    first_epoch = resume->epoch + 1;
  }

  const Rng root(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    const bool in_swa = epoch >= cfg.swa_start_epoch;
    const double lr = epoch_lr(cfg, epoch, monitor);

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler = root.split("shuffle", epoch);
    shuffler.shuffle(order);
    const Rng dropout_root = root.split("dropout", epoch);

    double sum_total = 0, sum_pos = 0, sum_contlex = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const std::vector<bpe::TokenId>*> seqs;
      std::vector<std::size_t> tp, tc;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = train_set[order[i]];
        seqs.push_back(&ex.ids);
        tp.push_back(ex.pos);
        tc.push_back(ex.contlex);
      }
      const auto batch = model::make_batch(seqs, net.config().max_len);
      Rng drop = dropout_root.split("batch", batch_index);
      opt.zero_grad();
      const auto logits = net.forward(batch, true, drop);
      const auto loss = combined_loss(logits.pos, logits.contlex, tp, tc, cfg.loss_weights);
      nn::backward(loss.total);
      opt.step(lr);
      const double n = static_cast<double>(stop - start);
      sum_total += n * loss.total.item();
      sum_pos += n * loss.pos.item();
      sum_contlex += n * loss.contlex.item();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.swa = in_swa;
    const double N = static_cast<double>(train_set.size());
    rec.loss = sum_total / N;
    rec.loss_pos = sum_pos / N;
    rec.loss_contlex = sum_contlex / N;
    if (!std::isfinite(rec.loss)) throw NumericError("training loss is not finite at epoch " + std::to_string(epoch));

    const auto val = eval::evaluate_model(net, val_set, space, cfg.checkpoint_masking);
    rec.val_pos_f1 = val.pos.weighted.f1;
    rec.val_contlex_f1 = val.contlex.weighted.f1;
    rec.val_metric = 0.5 * (rec.val_pos_f1 + rec.val_contlex_f1);
    monitor.push_back(rec.val_metric);

    if (!best || rec.val_metric > history.best_metric) {
      best = net.clone();
      history.best_epoch = epoch;
      history.best_metric = rec.val_metric;
      if (!outputs.checkpoint_dir.empty()) {
        rec.checkpoint = (fs::path(outputs.checkpoint_dir) / detail::epoch_name(epoch)).string();
        checkpoint::save_checkpoint<T>(net, nullptr, epoch, rec.checkpoint, {{"val_metric", rec.val_metric}});
        history.best_checkpoint = rec.checkpoint;
      }
    }
    if (in_swa) schedule::swa_update<T>(swa, detail::weight_views(net));

    log::info("epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) + " lr " +
              eval::format_number(lr) + " loss " + eval::format_number(rec.loss) + " val " +
              eval::format_number(rec.val_metric) + (in_swa ? " [swa]" : ""));
    history.epochs.push_back(rec);

    if (!outputs.checkpoint_dir.empty() && outputs.resume_checkpoints && !in_swa) {
      nlohmann::ordered_json meta;
      meta["train_config"] = cfg.to_json();
      nlohmann::ordered_json hist = nlohmann::ordered_json::array();
      for (const auto& e : history.epochs) hist.push_back(e.to_json());
      meta["history"] = hist;
      meta["best"] = {{"epoch", history.best_epoch},
                      {"metric", history.best_metric},
                      {"checkpoint", history.best_checkpoint}};
      checkpoint::save_checkpoint<T>(net, &opt, epoch, (fs::path(outputs.checkpoint_dir) / "last.ckpt").string(),
                                     meta);
    }
  }

  history.swa_snapshots = swa.n_averaged;
  auto swa_model = detail::from_average(net, swa);
  if (!outputs.checkpoint_dir.empty()) {
    history.swa_model = (fs::path(outputs.checkpoint_dir) / "swa.ckpt").string();
    checkpoint::save_checkpoint<T>(swa_model, nullptr, cfg.epochs, history.swa_model,
                                   {{"swa_snapshots", swa.n_averaged}});
  }
  return {std::move(swa_model), std::move(*best), std::move(net), std::move(history)};
}

}  // namespace mtc::train
