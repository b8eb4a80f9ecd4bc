#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include "mtc/log.hpp"
#include "mtc/pipeline.hpp"
#include "mtc/synth.hpp"

using namespace mtc;
namespace fs = std::filesystem;

namespace {

const bool kQuiet = (log::quiet() = true);

synth::SynthOptions small_synth() {
  synth::SynthOptions o;
  o.classes = 4;
  o.per_class = 20;
  o.seed = 3;
  return o;
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("mtc_pipeline_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
    work = (root / "work").string();
  }
  void TearDown() override { fs::remove_all(root); }

  // synth -> prepare -> augment -> train-bpe -> split
  void build_corpus(const synth::SynthOptions& so = small_synth()) {
    files = pipeline::cmd_synth(so, (root / "synth").string());
    pipeline::cmd_prepare(work, {files.lexemes, "", 5});
    pipeline::cmd_augment(work, {files.forms, "default"});
    pipeline::cmd_train_bpe(work, {120, 2});
    pipeline::cmd_split(work, {0.2, 1});
  }

  pipeline::TrainOptions tiny_train() {
    pipeline::TrainOptions t;
    t.model.d_model = 16;
    t.model.ffn_dim = 32;
    t.model.n_layers = 1;
    t.model.n_heads = 2;
    t.model.max_len = 96;
    t.train.epochs = 3;
    t.train.batch_size = 16;
    t.train.swa_start_epoch = 2;
    t.train.swa_anneal_epochs = 1;
    return t;
  }

  fs::path root;
  std::string work;
  pipeline::SynthFiles files;
};

std::string cli(const std::string& args) { return std::string(MTC_CLI) + " " + args + " >/dev/null 2>&1"; }

int exit_code(const std::string& args) {
  const int status = std::system(cli(args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Synth, DeterministicAndExactSizes) {
  const auto a = synth::generate(small_synth()), b = synth::generate(small_synth());
  EXPECT_EQ(a.lexemes_tsv, b.lexemes_tsv);
  EXPECT_EQ(a.forms_tsv, b.forms_tsv);
  auto other = small_synth();
  other.seed = 4;
  EXPECT_NE(synth::generate(other).lexemes_tsv, a.lexemes_tsv);

  std::map<std::string, std::size_t> per_label;
  for (const auto& r : a.lexemes) ++per_label[r.contlex_raw];
  std::size_t real = 0;
  for (const auto& rule : a.rules) {
    EXPECT_EQ(per_label[rule.raw_label], 20u) << rule.raw_label;
    real += per_label[rule.raw_label];
  }
  EXPECT_EQ(a.rules.size(), 4u);
  EXPECT_EQ(a.lexemes.size(), real + small_synth().noise_rows);
}

TEST(Synth, ConfigErrors) {
  auto o = small_synth();
  o.classes = 1;
  EXPECT_THROW(synth::generate(o), ConfigError);
  o = small_synth();
  o.per_class = 3;
  EXPECT_THROW(synth::generate(o), ConfigError);
  o = small_synth();
  o.classes = 500;
  EXPECT_THROW(synth::generate(o), ConfigError);
}

TEST_F(Workdir, OracleNeedsTheThirdForm) {
  build_corpus();
  const auto corpus = synth::generate(small_synth());
  const synth::OracleClassifier oracle(corpus.rules);
  const auto entries = augment::load_augmented((fs::path(work) / pipeline::kAugmented).string());
  ASSERT_EQ(entries.size(), 80u);
  auto accuracy = [&](std::size_t k) {
    std::size_t ok = 0;
    for (auto e : entries) {
      if (e.forms.size() > k - 1) e.forms.resize(k - 1);
      ok += oracle.classify(e) == std::make_pair(e.record.pos, e.record.contlex);
    }
    return static_cast<double>(ok) / static_cast<double>(entries.size());
  };
  EXPECT_EQ(accuracy(100), 1.0);
  EXPECT_EQ(accuracy(4), 1.0);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_NEAR(accuracy(k), 0.5, 1e-12) << "k=" << k;
}

TEST_F(Workdir, PrepareIsIdempotent) {
  files = pipeline::cmd_synth(small_synth(), (root / "synth").string());
  const auto first = pipeline::cmd_prepare(work, {files.lexemes, "", 5});
  EXPECT_EQ(first.records.size(), 80u);  // noise rows dropped
  // The raw label column is not carried over, so compare the cleaned fields.
  const auto again = pipeline::cmd_prepare((root / "again").string(), {(fs::path(work) / pipeline::kDataset).string(), "", 5});
  ASSERT_EQ(again.records.size(), first.records.size());
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    EXPECT_EQ(again.records[i].lemma, first.records[i].lemma);
    EXPECT_EQ(again.records[i].pos, first.records[i].pos);
    EXPECT_EQ(again.records[i].contlex, first.records[i].contlex);
  }
  const auto text = read_file((root / "again" / pipeline::kDataset).string());
  pipeline::cmd_prepare((root / "third").string(), {(root / "again" / pipeline::kDataset).string(), "", 5});
  EXPECT_EQ(read_file((root / "third" / pipeline::kDataset).string()), text);
  const auto log = nlohmann::json::parse(read_file((fs::path(work) / pipeline::kFilterLog).string()));
  EXPECT_FALSE(log["stages"].empty());
}

TEST_F(Workdir, AugmentKeepsEveryRecord) {
  files = pipeline::cmd_synth(small_synth(), (root / "synth").string());
  pipeline::cmd_prepare(work, {files.lexemes, "", 5});
  const auto entries = pipeline::cmd_augment(work, {files.forms, "default"});
  EXPECT_EQ(entries.size(), 80u);
  const auto spec = augment::default_miniparadigms();
  for (const auto& e : entries) EXPECT_EQ(e.forms.size(), spec.tags_for(e.record.pos).size());
  EXPECT_EQ(augment::load_augmented((fs::path(work) / pipeline::kAugmented).string()), entries);
}

TEST_F(Workdir, MissingArtifactIsIoError) {
  EXPECT_THROW(pipeline::cmd_augment(work, {"nowhere.tsv", "default"}), IoError);
  EXPECT_THROW(pipeline::cmd_train_bpe(work, {}), IoError);
  EXPECT_THROW(pipeline::cmd_prepare(work, {"nowhere.tsv", "", 5}), IoError);
}

TEST_F(Workdir, ModifiedArtifactIsFormatError) {
  build_corpus();
  {
    auto text = read_file((fs::path(work) / pipeline::kAugmented).string());
    write_file((fs::path(work) / pipeline::kAugmented).string(), text + "\n");
  }
  EXPECT_THROW(pipeline::cmd_train_bpe(work, {120, 2}), FormatError);
  EXPECT_THROW(pipeline::cmd_split(work, {0.2, 1}), FormatError);
}

TEST_F(Workdir, StaleArtifactIsFormatError) {
  build_corpus();
  // A new augment run makes the existing bpe model and splits stale.
  auto so = small_synth();
  so.seed = 9;
  const auto other = pipeline::cmd_synth(so, (root / "synth2").string());
  write_file(files.forms, read_file(other.forms));
  pipeline::cmd_augment(work, {files.forms, "default"});
  EXPECT_THROW(pipeline::cmd_encode(work), FormatError);
  EXPECT_THROW(pipeline::cmd_train(work, tiny_train()), FormatError);
}

TEST_F(Workdir, TrainEvaluateSweep) {
  build_corpus();
  const auto run = pipeline::cmd_train(work, tiny_train());
  for (const auto& f : {run.history, run.summary, run.swa, run.best}) EXPECT_TRUE(fs::exists(fs::path(work) / f)) << f;
  const auto hist = read_file((fs::path(work) / run.history).string());
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 3);

  const auto rep = pipeline::cmd_evaluate(work, {});
  EXPECT_EQ(rep.config_hash, run.config_hash);
  EXPECT_EQ(rep.all_modes.size(), 3u);
  EXPECT_TRUE(fs::exists(fs::path(work) / "run" / "report.json"));
  pipeline::EvaluateOptions best;
  best.which = "best";
  pipeline::cmd_evaluate(work, best);
  EXPECT_TRUE(fs::exists(fs::path(work) / "run" / "report_best.json"));
  best.which = "median";
  EXPECT_THROW(pipeline::cmd_evaluate(work, best), UsageError);

  pipeline::SweepOptions so;
  const auto rows = pipeline::cmd_sweep(work, so);
  ASSERT_EQ(rows.size(), 1 + augment::default_miniparadigms().max_forms());
  EXPECT_DOUBLE_EQ(rows.back().pos_accuracy, rep.primary.pos.accuracy);
  EXPECT_DOUBLE_EQ(rows.back().contlex_accuracy, rep.primary.contlex.accuracy);
  so.k = "1,3";
  EXPECT_EQ(pipeline::cmd_sweep(work, so).size(), 2u);

  // Resuming under a different config is refused.
  auto changed = tiny_train();
  changed.resume = true;
  changed.train.lr = 0.01;
  EXPECT_THROW(pipeline::cmd_train(work, changed), FormatError);

  // Retraining with a new label space invalidates the run for evaluation.
  pipeline::cmd_split(work, {0.3, 2});
  EXPECT_THROW(pipeline::cmd_evaluate(work, {}), FormatError);
}

TEST(RunConfig, AppliesPartialKeys) {
  pipeline::TrainOptions base;
  const auto j = nlohmann::json::parse(R"({"model": {"d_model": 32, "n_heads": 2}, "val_fraction": 0.2,
                                           "train": {"epochs": 10, "swa_start_epoch": 8}})");
  const auto opt = pipeline::apply_run_config(base, j);
  EXPECT_EQ(opt.model.d_model, 32u);
  EXPECT_EQ(opt.model.n_heads, 2u);
  EXPECT_EQ(opt.model.ffn_dim, base.model.ffn_dim);
  EXPECT_EQ(opt.train.epochs, 10u);
  EXPECT_DOUBLE_EQ(opt.val_fraction, 0.2);
  EXPECT_THROW(pipeline::apply_run_config(base, nlohmann::json::parse(R"({"optimizer": 1})")), ConfigError);
  EXPECT_THROW(pipeline::apply_run_config(base, nlohmann::json::parse(R"({"model": {"width": 1}})")), ConfigError);
  EXPECT_THROW(pipeline::apply_run_config(base, nlohmann::json::parse("[1]")), ConfigError);
}

TEST(Grid, SixRows) {
  const auto rows = pipeline::grid_rows();
  ASSERT_EQ(rows.size(), 6u);
  using K = schedule::Kind;
  const std::vector<std::tuple<K, double, std::size_t, std::size_t>> want = {
      {K::cosine, 0.1, 2, 4},      {K::cosine, 0.2, 3, 4},  {K::cosine, 0.2, 3, 8},
      {K::exponential, 0.2, 3, 8}, {K::plateau, 0.2, 3, 8}, {K::cosine, 0.2, 10, 8}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].id, "exp" + std::to_string(i + 1));
    EXPECT_EQ(rows[i].scheduler.kind, std::get<0>(want[i]));
    EXPECT_DOUBLE_EQ(rows[i].dropout, std::get<1>(want[i]));
    EXPECT_EQ(rows[i].n_layers, std::get<2>(want[i]));
    EXPECT_EQ(rows[i].n_heads, std::get<3>(want[i]));
  }
  EXPECT_DOUBLE_EQ(rows[0].scheduler.t_max, 25);
  EXPECT_DOUBLE_EQ(rows[3].scheduler.gamma, 0.95);
  EXPECT_EQ(rows[4].scheduler.patience, 10u);
}

TEST_F(Workdir, CliExitCodes) {
  EXPECT_EQ(exit_code("--help"), 0);
  EXPECT_EQ(exit_code(""), 2);
  EXPECT_EQ(exit_code("prepare"), 2);
  EXPECT_EQ(exit_code("frobnicate"), 2);
  EXPECT_EQ(exit_code("prepare -w " + work + " --lexemes " + (root / "none.tsv").string()), 3);
  EXPECT_EQ(exit_code("augment -w " + work + " --forms x.tsv"), 3);
  const auto syn = (root / "cli_synth").string();
  EXPECT_EQ(exit_code("synth --classes 1 -o " + syn), 2);
  EXPECT_EQ(exit_code("synth --classes 4 --per-class 20 -o " + syn), 0);
  EXPECT_EQ(exit_code("-q prepare -w " + work + " --min-support 5 --lexemes " + syn + "/lexemes.tsv"), 0);
  EXPECT_EQ(exit_code("-q augment -w " + work + " --forms " + syn + "/forms.tsv"), 0);
  EXPECT_EQ(exit_code("-q evaluate -w " + work + " --masking oracle"), 2);
  EXPECT_TRUE(fs::exists(fs::path(work) / "manifest.json"));
}
