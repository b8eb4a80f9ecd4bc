#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtc/augment.hpp"
#include "mtc/bpe.hpp"
#include "mtc/checkpoint.hpp"
#include "mtc/corpus.hpp"
#include "mtc/error.hpp"
#include "mtc/evaluate.hpp"
#include "mtc/hash.hpp"
#include "mtc/labels.hpp"
#include "mtc/log.hpp"
#include "mtc/manifest.hpp"
#include "mtc/model.hpp"
#include "mtc/synth.hpp"
#include "mtc/train.hpp"

// One function per CLI subcommand. All of them read and write inside a
// workdir tracked by a manifest.

namespace mtc::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kDataset = "dataset.tsv";
inline constexpr const char* kFilterLog = "filter_log.json";
inline constexpr const char* kAugmented = "augmented.tsv";
inline constexpr const char* kBpe = "bpe.model";
inline constexpr const char* kEncoded = "encoded.tsv";
inline constexpr const char* kTrainSplit = "train.tsv";
inline constexpr const char* kTestSplit = "test.tsv";
inline constexpr const char* kLabels = "labels.json";

inline constexpr std::size_t kAllForms = std::numeric_limits<std::size_t>::max();

namespace detail {

inline std::string json_hash(const nlohmann::ordered_json& j) { return hash_string(j.dump()); }

inline manifest::Manifest open(const std::string& workdir) {
  fs::create_directories(workdir);
  return manifest::Manifest(workdir);
}

inline std::string read_config_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("config file " + path + " does not exist");
  return read_file(path);
}

inline nlohmann::json parse_json(const std::string& text, const std::string& source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------- synth

struct SynthFiles {
  std::string lexemes;
  std::string forms;
};

inline SynthFiles cmd_synth(const synth::SynthOptions& opt, const std::string& out_dir) {
  const auto corpus = synth::generate(opt);
  fs::create_directories(out_dir);
  SynthFiles f{(fs::path(out_dir) / "lexemes.tsv").string(), (fs::path(out_dir) / "forms.tsv").string()};
  write_file(f.lexemes, corpus.lexemes_tsv);
  write_file(f.forms, corpus.forms_tsv);
  log::info("synth: " + std::to_string(corpus.lexemes.size()) + " lexemes in " + std::to_string(opt.classes) +
            " classes -> " + out_dir);
  return f;
}

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
  std::string lexemes;
  std::string filters;  // optional JSON file
  std::optional<std::size_t> min_support;
};

inline corpus::Dataset cmd_prepare(const std::string& workdir, const PrepareOptions& opt) {
  auto m = detail::open(workdir);
  corpus::FilterConfig cfg;
  if (!opt.filters.empty()) {
    cfg = corpus::FilterConfig::from_json(detail::parse_json(detail::read_config_file(opt.filters), opt.filters));
  }
  if (opt.min_support) cfg.min_support = *opt.min_support;
  if (!fs::exists(opt.lexemes)) throw IoError("lexeme file " + opt.lexemes + " does not exist");
  auto ds = corpus::prepare(corpus::load_lexemes(opt.lexemes), cfg, opt.lexemes);
  write_file(m.path_of(kDataset), corpus::format_dataset(ds.records));
  nlohmann::ordered_json log;
  log["filters"] = cfg.to_json();
  log["stages"] = corpus::filter_log_json(ds.log);
  write_file(m.path_of(kFilterLog), log.dump(2) + "\n");
  const auto h = detail::json_hash(cfg.to_json());
  m.record_input("input.lexemes", opt.lexemes);
  m.record("dataset", kDataset, "prepare", h, {"input.lexemes"});
  m.record("filter_log", kFilterLog, "prepare", h, {"input.lexemes"});
  m.save();
  for (const auto& s : ds.log)
    log::info("prepare: " + s.stage + " " + std::to_string(s.in_count) + " -> " + std::to_string(s.out_count));
  return ds;
}

// ---------------------------------------------------------------- augment

struct AugmentOptions {
  std::string forms;
  std::string spec = "default";  // "default" or a JSON file
};

inline augment::MiniparadigmSpec load_spec(const std::string& spec) {
  if (spec == "default") return augment::default_miniparadigms();
  return augment::MiniparadigmSpec::from_json(detail::parse_json(detail::read_config_file(spec), spec));
}

inline std::vector<augment::AugmentedEntry> cmd_augment(const std::string& workdir, const AugmentOptions& opt) {
  auto m = detail::open(workdir);
  const auto records = corpus::load_dataset(m.require("dataset", "prepare"));
  const auto spec = load_spec(opt.spec);
  if (!fs::exists(opt.forms)) throw IoError("forms file " + opt.forms + " does not exist");
  const auto gen = augment::file_backed_generator(opt.forms);
  const auto entries = augment::generate_all(gen, records, spec);
  write_file(m.path_of(kAugmented), augment::format_augmented(entries));
  m.record_input("input.forms", opt.forms);
  m.record("augmented", kAugmented, "augment", detail::json_hash(spec.to_json()), {"dataset", "input.forms"});
  m.save();
  std::size_t bare = 0;
  for (const auto& e : entries) bare += e.forms.empty();
  log::info("augment: " + std::to_string(entries.size()) + " entries, " + std::to_string(bare) + " without forms");
  return entries;
}

// ---------------------------------------------------------------- train-bpe

inline bpe::BpeModel cmd_train_bpe(const std::string& workdir, const bpe::TrainOptions& opt) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("augmented", "augment"));
  std::vector<std::string> lines;
  lines.reserve(entries.size());
  for (const auto& e : entries) lines.push_back(augment::assemble_input(e, kAllForms));
  const auto model = bpe::train_bpe(lines, opt);
  bpe::save_model(model, m.path_of(kBpe));
  nlohmann::ordered_json cfg = {{"vocab_size", opt.vocab_size}, {"min_frequency", opt.min_frequency}};
  m.record("bpe", kBpe, "train-bpe", detail::json_hash(cfg), {"augmented"});
  m.save();
  log::info("train-bpe: vocabulary " + std::to_string(model.vocab_size()) + ", " +
            std::to_string(model.merges().size()) + " merges");
  return model;
}

// ---------------------------------------------------------------- encode

inline std::size_t cmd_encode(const std::string& workdir, std::size_t max_forms = kAllForms) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("augmented", "augment"));
  const auto tok = bpe::load_model(m.require("bpe", "train-bpe"));
  std::string out = "lemma\tpos\tcontlex\tids\n";
  for (const auto& e : entries) {
    const auto ids = bpe::encode(tok, augment::assemble_input(e, max_forms));
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
    out += e.record.lemma + "\t" + e.record.pos + "\t" + e.record.contlex + "\t" + s + "\n";
  }
  write_file(m.path_of(kEncoded), out);
  nlohmann::ordered_json cfg = {{"max_forms", max_forms == kAllForms ? 0 : max_forms}};
  m.record("encoded", kEncoded, "encode", detail::json_hash(cfg), {"augmented", "bpe"});
  m.save();
  log::info("encode: " + std::to_string(entries.size()) + " sequences");
  return entries.size();
}

// ---------------------------------------------------------------- split

inline std::pair<std::vector<augment::AugmentedEntry>, std::vector<augment::AugmentedEntry>> split_entries(
    const std::vector<augment::AugmentedEntry>& entries, const corpus::SplitSpec& spec) {
  const auto mask = corpus::stratified_test_mask(augment::records_of(entries), spec);
  std::vector<augment::AugmentedEntry> a, b;
  for (std::size_t i = 0; i < entries.size(); ++i) (mask[i] ? b : a).push_back(entries[i]);
  return {std::move(a), std::move(b)};
}

/// Stratified train/test split of the augmented corpus, plus the label
/// space fitted on the training half.
inline labels::LabelSpace cmd_split(const std::string& workdir, const corpus::SplitSpec& spec) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("augmented", "augment"));
  const auto [tr, te] = split_entries(entries, spec);
  write_file(m.path_of(kTrainSplit), augment::format_augmented(tr));
  write_file(m.path_of(kTestSplit), augment::format_augmented(te));
  const auto space = labels::LabelSpace::fit(augment::records_of(tr));
  space.save(m.path_of(kLabels));
  nlohmann::ordered_json cfg = {{"test_fraction", spec.test_fraction}, {"seed", spec.seed}};
  const auto h = detail::json_hash(cfg);
  m.record("train_split", kTrainSplit, "split", h, {"augmented"});
  m.record("test_split", kTestSplit, "split", h, {"augmented"});
  m.record("labels", kLabels, "split", h, {"train_split"});
  m.save();
  log::info("split: " + std::to_string(tr.size()) + " train, " + std::to_string(te.size()) + " test, " +
            std::to_string(space.n_pos()) + " POS, " + std::to_string(space.n_contlex()) + " contlex labels");
  return space;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  model::ModelConfig model;  // vocab_size, n_pos and n_contlex are filled in from the artifacts
  train::TrainConfig train;
  double val_fraction = 0.1;
  std::string run = "run";
  bool resume = false;
};

struct RunFiles {
  std::string history;
  std::string summary;
  std::string swa;
  std::string best;
  std::string config_hash;
};

inline nlohmann::ordered_json run_config_json(const TrainOptions& opt, const model::ModelConfig& mc) {
  nlohmann::ordered_json j;
  j["model"] = mc.to_json();
  j["train"] = opt.train.to_json();
  j["val_fraction"] = opt.val_fraction;
  return j;
}

inline std::string relative_to(const fs::path& p, const fs::path& base) {
  return p.empty() ? std::string() : fs::relative(p, base).generic_string();
}

inline RunFiles cmd_train(const std::string& workdir, const TrainOptions& opt) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("train_split", "split"));
  const auto space = labels::LabelSpace::load(m.require("labels", "split"));
  const auto tok = bpe::load_model(m.require("bpe", "train-bpe"));

  auto mc = opt.model;
  mc.vocab_size = tok.vocab_size();
  mc.n_pos = space.n_pos();
  mc.n_contlex = space.n_contlex();
  mc.validate();
  opt.train.validate();

  const auto [fit, val] = split_entries(entries, {opt.val_fraction, opt.train.seed});
  const auto train_ex = eval::make_examples(fit, tok, space, kAllForms, mc.max_len);
  const auto val_ex = eval::make_examples(val, tok, space, kAllForms, mc.max_len);
  log::info("train: " + std::to_string(train_ex.size()) + " training, " + std::to_string(val_ex.size()) +
            " validation examples");

  const fs::path run_dir = m.dir() / opt.run;
  const fs::path ckpt_dir = run_dir / "checkpoints";
  std::optional<checkpoint::Checkpoint> resume;
  if (opt.resume) {
    const auto last = ckpt_dir / "last.ckpt";
    if (!fs::exists(last)) throw IoError("cannot resume: " + last.string() + " does not exist");
    resume = checkpoint::load_checkpoint(last.string());
  } else if (fs::exists(ckpt_dir)) {
    fs::remove_all(ckpt_dir);
  }

  model::TransformerClassifier<float> net(mc);
  auto result = train::train<float>(std::move(net), train_ex, val_ex, space, opt.train,
                                    {ckpt_dir.string(), true}, resume);

  auto& h = result.history;
  for (auto& e : h.epochs) e.checkpoint = e.checkpoint.empty() ? "" : relative_to(e.checkpoint, m.dir());
  h.best_checkpoint = relative_to(h.best_checkpoint, m.dir());
  h.swa_model = relative_to(h.swa_model, m.dir());

  RunFiles f;
  f.config_hash = detail::json_hash(run_config_json(opt, mc));
  f.history = (fs::path(opt.run) / "history.jsonl").generic_string();
  f.summary = (fs::path(opt.run) / "summary.json").generic_string();
  f.swa = h.swa_model;
  f.best = (fs::path(opt.run) / "checkpoints" / "best.ckpt").generic_string();
  checkpoint::save_checkpoint<float>(result.best, nullptr, h.best_epoch, m.path_of(f.best),
                                     {{"val_metric", h.best_metric}});
  write_file(m.path_of(f.history), h.to_jsonl());
  nlohmann::ordered_json summary;
  summary["config_hash"] = f.config_hash;
  summary["config"] = run_config_json(opt, mc);
  summary["result"] = h.summary_json();
  summary["result"]["best_model"] = f.best;
  write_file(m.path_of(f.summary), summary.dump(2) + "\n");

  const std::vector<std::string> up = {"train_split", "labels", "bpe"};
  m.record(opt.run + ".history", f.history, "train", f.config_hash, up);
  m.record(opt.run + ".swa", f.swa, "train", f.config_hash, up);
  m.record(opt.run + ".best", f.best, "train", f.config_hash, up);
  m.save();
  log::info("train: best epoch " + std::to_string(h.best_epoch) + " (val " + eval::format_number(h.best_metric) +
            "), " + std::to_string(h.swa_snapshots) + " SWA snapshots");
  return f;
}

/// Applies a run config file: {"model": {...}, "train": {...},
/// "val_fraction": x}. Model keys may be partial; vocab and label counts
/// always come from the artifacts.
inline TrainOptions apply_run_config(TrainOptions opt, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "train") {
      opt.train = train::TrainConfig::from_json(v, opt.train);
    } else if (key == "val_fraction") {
      opt.val_fraction = v.get<double>();
    } else if (key == "model") {
      auto& mc = opt.model;
      for (const auto& [mk, mv] : v.items()) {
        if (mk == "d_model") mc.d_model = mv.get<std::size_t>();
        else if (mk == "ffn_dim") mc.ffn_dim = mv.get<std::size_t>();
        else if (mk == "n_layers") mc.n_layers = mv.get<std::size_t>();
        else if (mk == "n_heads") mc.n_heads = mv.get<std::size_t>();
        else if (mk == "dropout") mc.dropout = mv.get<double>();
        else if (mk == "max_len") mc.max_len = mv.get<std::size_t>();
        else if (mk == "seed") mc.seed = mv.get<std::uint64_t>();
        else throw ConfigError("unknown model config key '" + mk + "'");
      }
    } else {
      throw ConfigError("unknown run config key '" + key + "'");
    }
  }
  return opt;
}

inline TrainOptions load_run_config(const TrainOptions& base, const std::string& path) {
  try {
    return apply_run_config(base, detail::parse_json(detail::read_config_file(path), path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string run = "run";
  std::string which = "swa";  // swa | best
  eval::MaskingMode masking = eval::MaskingMode::predicted_pos;
};

struct LoadedRun {
  model::TransformerClassifier<float> net;
  std::string config_hash;
  std::string artifact;
};

inline LoadedRun load_run(const manifest::Manifest& m, const std::string& run, const std::string& which) {
  if (which != "swa" && which != "best") throw UsageError("--model must be swa or best, got '" + which + "'");
  const auto name = run + "." + which;
  const auto path = m.require(name, "train");
  const auto& art = m.get(name);
  for (const auto& u : {"labels", "bpe"}) {
    if (art.upstream.at(u) != m.get(u).hash) {
      throw FormatError("run '" + run + "' was trained with a different " + std::string(u) + " artifact");
    }
  }
  return {checkpoint::restore_model<float>(checkpoint::load_checkpoint(path)), art.config_hash, name};
}

inline std::string report_name(const EvaluateOptions& opt) {
  return (fs::path(opt.run) / (opt.which == "swa" ? "report.json" : "report_best.json")).generic_string();
}

inline eval::EvalReport cmd_evaluate(const std::string& workdir, const EvaluateOptions& opt) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("test_split", "split"));
  const auto space = labels::LabelSpace::load(m.require("labels", "split"));
  const auto tok = bpe::load_model(m.require("bpe", "train-bpe"));
  const auto run = load_run(m, opt.run, opt.which);
  eval::check_compatible(run.net.config(), space, tok.vocab_size());
  const auto data = eval::make_examples(entries, tok, space, kAllForms, run.net.config().max_len);

  eval::EvalReport rep;
  rep.config_hash = run.config_hash;
  rep.model = run.artifact;
  rep.masking = opt.masking;
  for (auto mode : eval::kAllMaskingModes) {
    auto r = eval::evaluate_model(run.net, data, space, mode);
    if (mode == opt.masking) rep.primary = r;
    rep.all_modes.emplace_back(mode, std::move(r));
  }
  const auto out = report_name(opt);
  eval::write_report(rep, m.path_of(out));
  m.record(opt.run + ".report." + opt.which, out, "evaluate", run.config_hash,
           {opt.run + "." + opt.which, "test_split", "labels", "bpe"});
  m.save();
  log::info("evaluate: POS weighted F1 " + eval::format_number(rep.primary.pos.weighted.f1) +
            ", contlex weighted F1 " + eval::format_number(rep.primary.contlex.weighted.f1) + " (" +
            eval::to_string(opt.masking) + ")");
  return rep;
}

// ---------------------------------------------------------------- sweep

struct SweepOptions {
  std::string run = "run";
  std::string which = "swa";
  std::string k;  // empty: 1 .. lemma plus the most forms of any entry
  eval::MaskingMode masking = eval::MaskingMode::predicted_pos;
};

inline std::vector<eval::SweepRow> cmd_sweep(const std::string& workdir, const SweepOptions& opt) {
  auto m = detail::open(workdir);
  const auto entries = augment::load_augmented(m.require("test_split", "split"));
  const auto space = labels::LabelSpace::load(m.require("labels", "split"));
  const auto tok = bpe::load_model(m.require("bpe", "train-bpe"));
  const auto run = load_run(m, opt.run, opt.which);
  eval::check_compatible(run.net.config(), space, tok.vocab_size());
  std::vector<std::size_t> ks;
  if (opt.k.empty()) {
    std::size_t most = 0;
    for (const auto& e : entries) most = std::max(most, e.forms.size());
    for (std::size_t k = 1; k <= most + 1; ++k) ks.push_back(k);
  } else {
    ks = eval::parse_k_values(opt.k);
  }
  const auto rows = eval::sweep_forms(run.net, entries, tok, space, ks, opt.masking, run.net.config().max_len);
  const auto csv = (fs::path(opt.run) / "sweep.csv").generic_string();
  const auto dat = (fs::path(opt.run) / "sweep.dat").generic_string();
  write_file(m.path_of(csv), eval::sweep_csv(rows));
  write_file(m.path_of(dat), eval::sweep_dat(rows));
  m.record(opt.run + ".sweep", csv, "sweep", run.config_hash, {opt.run + "." + opt.which, "test_split"});
  m.save();
  log::info("sweep: " + std::to_string(rows.size()) + " rows -> " + m.path_of(csv));
  return rows;
}

// ---------------------------------------------------------------- grid

struct GridRow {
  std::string id;
  schedule::SchedulerSpec scheduler;
  double dropout;
  std::size_t n_layers;
  std::size_t n_heads;
};

/// The six preset hyperparameter settings.
inline std::vector<GridRow> grid_rows() {
  using S = schedule::SchedulerSpec;
  return {{"exp1", S::cosine(25), 0.1, 2, 4},      {"exp2", S::cosine(25), 0.2, 3, 4},
          {"exp3", S::cosine(25), 0.2, 3, 8},      {"exp4", S::exponential(0.95), 0.2, 3, 8},
          {"exp5", S::plateau(10), 0.2, 3, 8},     {"exp6", S::cosine(25), 0.2, 10, 8}};
}

struct GridResult {
  std::string id;
  RunFiles files;
  eval::EvalReport report;
};

/// Trains and evaluates every grid row under `base`, overriding scheduler,
/// dropout, layers and heads. Writes grid/<id>/ per row and grid/summary.csv.
inline std::vector<GridResult> cmd_grid(const std::string& workdir, const TrainOptions& base,
                                        const std::vector<std::string>& only = {}) {
  std::vector<GridResult> out;
  std::string csv = "id,scheduler,dropout,n_layers,n_heads,pos_weighted_f1,contlex_weighted_f1\n";
  for (const auto& row : grid_rows()) {
    if (!only.empty() && std::find(only.begin(), only.end(), row.id) == only.end()) continue;
    auto opt = base;
    opt.run = (fs::path("grid") / row.id).generic_string();
    opt.train.scheduler = row.scheduler;
    opt.model.dropout = row.dropout;
    opt.model.n_layers = row.n_layers;
    opt.model.n_heads = row.n_heads;
    log::info("grid: " + row.id);
    auto files = cmd_train(workdir, opt);
    EvaluateOptions eo;
    eo.run = opt.run;
    eo.masking = opt.train.checkpoint_masking;
    auto rep = cmd_evaluate(workdir, eo);
    csv += row.id + "," + schedule::to_string(row.scheduler.kind) + "," + eval::format_number(row.dropout) + "," +
           std::to_string(row.n_layers) + "," + std::to_string(row.n_heads) + "," +
           eval::format_number(rep.primary.pos.weighted.f1) + "," +
           eval::format_number(rep.primary.contlex.weighted.f1) + "\n";
    out.push_back({row.id, std::move(files), std::move(rep)});
  }
  if (out.empty()) throw UsageError("no grid rows selected");
  write_file((fs::path(workdir) / "grid" / "summary.csv").string(), csv);
  return out;
}

}  // namespace mtc::pipeline
