// mtc: command-line front end for the lexeme classification pipeline.
//
//   mtc synth --out data
//   mtc prepare --workdir w --lexemes data/lexemes.tsv
//   mtc augment --workdir w --forms data/forms.tsv
//   mtc train-bpe --workdir w
//   mtc split --workdir w
//   mtc train --workdir w
//   mtc evaluate --workdir w
//   mtc sweep --workdir w --k 1..11

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "mtc/mtc.hpp"

namespace {

using namespace mtc;

struct TrainFlags {
  std::string config;
  std::size_t epochs = 100, batch_size = 512, swa_start = 80, swa_anneal = 5;
  double lr = 0.003, swa_lr = 0.0005, weight_decay = 0.01, w_pos = 1.0, w_contlex = 1.0;
  std::string scheduler = "cosine";
  double t_max = 25, eta_min = 0, gamma = 0.95;
  std::size_t patience = 10;
  std::size_t d_model = 128, ffn_dim = 512, n_layers = 2, n_heads = 4, max_len = 192;
  double dropout = 0.1, val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string masking = "predicted-pos";
  std::string run = "run";
  bool resume = false;

  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* c, bool with_model_shape) {
    auto o = [&](const std::string& name, auto& var, const std::string& help) {
      opts[name] = c->add_option("--" + name, var, help)->capture_default_str();
    };
    c->add_option("--config", config, "run config JSON ({\"model\":{..},\"train\":{..},\"val_fraction\":x})");
    o("epochs", epochs, "training epochs");
    o("batch-size", batch_size, "examples per batch");
    o("lr", lr, "base learning rate");
    o("scheduler", scheduler, "cosine | exponential | plateau");
    o("t-max", t_max, "cosine period in epochs");
    o("eta-min", eta_min, "cosine floor");
    o("gamma", gamma, "exponential decay per epoch");
    o("patience", patience, "plateau patience in epochs");
    o("weight-decay", weight_decay, "AdamW decoupled weight decay");
    o("w-pos", w_pos, "POS loss weight");
    o("w-contlex", w_contlex, "contlex loss weight");
    o("swa-start", swa_start, "first SWA epoch (1-based, inclusive)");
    o("swa-lr", swa_lr, "SWALR target rate");
    o("swa-anneal", swa_anneal, "SWALR anneal epochs");
    o("d-model", d_model, "embedding width");
    o("ffn-dim", ffn_dim, "feed-forward width");
    if (with_model_shape) {
      o("layers", n_layers, "encoder layers");
      o("heads", n_heads, "attention heads");
      o("dropout", dropout, "dropout rate");
    }
    o("max-len", max_len, "maximum tokens per input");
    o("seed", seed, "seed for init, shuffling, dropout and the validation split");
    o("val-fraction", val_fraction, "validation share carved from the training split");
    o("masking", masking, "masking mode of the checkpoint metric");
    if (with_model_shape) {
      c->add_option("--run", run, "run directory inside the workdir")->capture_default_str();
      c->add_flag("--resume", resume, "continue from <run>/checkpoints/last.ckpt");
    }
  }

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  pipeline::TrainOptions build() const {
    pipeline::TrainOptions t;
    if (!config.empty()) t = pipeline::load_run_config(t, config);
    auto& tc = t.train;
    auto& mc = t.model;
    if (given("epochs")) tc.epochs = epochs;
    if (given("batch-size")) tc.batch_size = batch_size;
    if (given("lr")) tc.lr = lr;
    if (given("scheduler")) tc.scheduler.kind = schedule::parse_kind(scheduler);
    if (given("t-max")) tc.scheduler.t_max = t_max;
    if (given("eta-min")) tc.scheduler.eta_min = eta_min;
    if (given("gamma")) tc.scheduler.gamma = gamma;
    if (given("patience")) tc.scheduler.patience = patience;
    if (given("weight-decay")) tc.adam.weight_decay = weight_decay;
    if (given("w-pos")) tc.loss_weights.pos = w_pos;
    if (given("w-contlex")) tc.loss_weights.contlex = w_contlex;
    if (given("swa-start")) tc.swa_start_epoch = swa_start;
    if (given("swa-lr")) tc.swa_lr = swa_lr;
    if (given("swa-anneal")) tc.swa_anneal_epochs = swa_anneal;
    if (given("seed")) {
      tc.seed = seed;
      mc.seed = seed;
    }
    if (given("masking")) tc.checkpoint_masking = eval::parse_masking(masking);
    if (given("d-model")) mc.d_model = d_model;
    if (given("ffn-dim")) mc.ffn_dim = ffn_dim;
    if (given("layers")) mc.n_layers = n_layers;
    if (given("heads")) mc.n_heads = n_heads;
    if (given("dropout")) mc.dropout = dropout;
    if (given("max-len")) mc.max_len = max_len;
    if (given("val-fraction")) t.val_fraction = val_fraction;
    t.run = run;
    t.resume = resume;
    tc.validate();
    return t;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Multi-task POS and inflection-class classifier for lexemes"};
  app.require_subcommand(1);
  std::string workdir = "work";
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  auto with_workdir = [&](CLI::App* c) {
    c->add_option("-w,--workdir", workdir, "pipeline working directory")->capture_default_str();
    return c;
  };

  synth::SynthOptions so;
  std::string synth_out = "synth";
  auto* c_synth = app.add_subcommand("synth", "generate an artificial lexicon and its forms");
  c_synth->add_option("--classes", so.classes, "number of inflection classes")->capture_default_str();
  c_synth->add_option("--per-class", so.per_class, "lexemes per class")->capture_default_str();
  c_synth->add_option("--seed", so.seed, "generator seed")->capture_default_str();
  c_synth->add_option("--noise", so.noise_rows, "rows that the cleaning stage must drop")->capture_default_str();
  c_synth->add_option("-o,--out", synth_out, "output directory")->capture_default_str();

  pipeline::PrepareOptions po;
  std::size_t min_support = 50;
  auto* c_prep = with_workdir(app.add_subcommand("prepare", "clean, filter and normalize a lexeme table"));
  c_prep->add_option("--lexemes", po.lexemes, "lexeme TSV (lemma, pos, contlex)")->required();
  c_prep->add_option("--filters", po.filters, "filter config JSON");
  auto* o_min = c_prep->add_option("--min-support", min_support, "drop labels with fewer lexemes")
                    ->capture_default_str();

  pipeline::AugmentOptions ao;
  auto* c_aug = with_workdir(app.add_subcommand("augment", "attach miniparadigm forms to every lexeme"));
  c_aug->add_option("--forms", ao.forms, "forms TSV (lemma, pos, tag, form)")->required();
  c_aug->add_option("--spec", ao.spec, "'default' or a miniparadigm JSON file")->capture_default_str();

  bpe::TrainOptions bo;
  auto* c_bpe = with_workdir(app.add_subcommand("train-bpe", "learn BPE merges on the augmented corpus"));
  c_bpe->add_option("--vocab-size", bo.vocab_size, "target vocabulary size")->capture_default_str();
  c_bpe->add_option("--min-frequency", bo.min_frequency, "stop when the best pair is rarer")
      ->capture_default_str();

  std::size_t enc_forms = 0;
  auto* c_enc = with_workdir(app.add_subcommand("encode", "write token ids for every entry"));
  c_enc->add_option("--max-forms", enc_forms, "cap on lemma plus forms (0: all)")->capture_default_str();

  corpus::SplitSpec ss;
  auto* c_split = with_workdir(app.add_subcommand("split", "stratified train/test split and label space"));
  c_split->add_option("--test-fraction", ss.test_fraction, "test share per class")->capture_default_str();
  c_split->add_option("--seed", ss.seed, "split seed")->capture_default_str();

  TrainFlags tf;
  auto* c_train = with_workdir(app.add_subcommand("train", "train the classifier"));
  tf.add(c_train, true);

  pipeline::EvaluateOptions eo;
  std::string eval_masking = "predicted-pos";
  auto* c_eval = with_workdir(app.add_subcommand("evaluate", "score a trained model on the test split"));
  c_eval->add_option("--run", eo.run, "run directory")->capture_default_str();
  c_eval->add_option("--model", eo.which, "swa | best")->capture_default_str();
  c_eval->add_option("--masking", eval_masking, "none | predicted-pos | gold-pos")->capture_default_str();

  pipeline::SweepOptions swo;
  std::string sweep_masking = "predicted-pos";
  auto* c_sweep = with_workdir(app.add_subcommand("sweep", "accuracy against the number of input forms"));
  c_sweep->add_option("--run", swo.run, "run directory")->capture_default_str();
  c_sweep->add_option("--model", swo.which, "swa | best")->capture_default_str();
  c_sweep->add_option("--k", swo.k, "k values, e.g. 1..15 or 1,3,5 (default: all)");
  c_sweep->add_option("--masking", sweep_masking, "none | predicted-pos | gold-pos")->capture_default_str();

  TrainFlags gf;
  std::vector<std::string> only;
  auto* c_grid = with_workdir(app.add_subcommand("grid", "train and evaluate the six grid rows"));
  gf.add(c_grid, false);
  c_grid->add_option("--only", only, "subset of rows, e.g. exp3")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  log::quiet() = quiet;

  if (*c_synth) pipeline::cmd_synth(so, synth_out);
  else if (*c_prep) {
    if (o_min->count()) po.min_support = min_support;
    pipeline::cmd_prepare(workdir, po);
  } else if (*c_aug) pipeline::cmd_augment(workdir, ao);
  else if (*c_bpe) pipeline::cmd_train_bpe(workdir, bo);
  else if (*c_enc) pipeline::cmd_encode(workdir, enc_forms == 0 ? pipeline::kAllForms : enc_forms);
  else if (*c_split) pipeline::cmd_split(workdir, ss);
  else if (*c_train) pipeline::cmd_train(workdir, tf.build());
  else if (*c_eval) {
    eo.masking = eval::parse_masking(eval_masking);
    pipeline::cmd_evaluate(workdir, eo);
  } else if (*c_sweep) {
    swo.masking = eval::parse_masking(sweep_masking);
    pipeline::cmd_sweep(workdir, swo);
  } else if (*c_grid) pipeline::cmd_grid(workdir, gf.build(), only);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mtc::Error& e) {
    std::cerr << "mtc: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "mtc: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "mtc: error: " << e.what() << '\n';
    return 1;
  }
}
