#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mtc/checkpoint.hpp"
#include "mtc/model.hpp"
#include "mtc/optim.hpp"
#include "mtc/train.hpp"
#include "support/oracles.hpp"

using namespace mtc;
using model::Batch;
using model::ModelConfig;
using model::TransformerClassifier;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.vocab_size = 11;
  c.d_model = 8;
  c.ffn_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.dropout = 0.0;
  c.max_len = 16;
  c.n_pos = 2;
  c.n_contlex = 3;
  c.seed = 3;
  return c;
}

std::vector<std::vector<std::int32_t>> random_seqs(Rng& rng, std::size_t n, std::size_t vocab, std::size_t max_len) {
  std::vector<std::vector<std::int32_t>> out(n);
  for (auto& s : out) {
    s.resize(1 + rng.below(max_len));
    for (auto& t : s) t = static_cast<std::int32_t>(3 + rng.below(vocab - 3));
  }
  return out;
}

}  // namespace

TEST(ModelConfig, Validation) {
  auto c = toy_config();
  c.n_heads = 3;
  EXPECT_THROW(TransformerClassifier<float>{c}, ConfigError);
  auto j = toy_config().to_json();
  EXPECT_EQ(ModelConfig::from_json(nlohmann::json::parse(j.dump())).to_json(), j);
}

TEST(Init, XavierBounds) {
  EXPECT_NEAR(model::xavier_bound(2000, 128), 0.05310, 1e-5);
  EXPECT_NEAR(model::xavier_bound(128, 73), 0.17278, 1e-5);
  ModelConfig c;
  c.vocab_size = 2000;
  c.n_contlex = 73;
  c.n_layers = 1;
  TransformerClassifier<float> m(c);
  for (const auto& p : m.parameters()) {
    const auto& s = p.tensor.shape();
    if (s.size() != 2) {
      // biases start at zero, layer-norm gains at one
      for (float v : p.tensor.values()) EXPECT_TRUE(v == 0.0f || v == 1.0f) << p.name;
      continue;
    }
    const double a = model::xavier_bound(s[0], s[1]);
    double lo = 0, hi = 0;
    for (float v : p.tensor.values()) {
      EXPECT_LT(std::abs(v), a) << p.name;
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
    }
    EXPECT_GT(hi - lo, a) << p.name << " looks degenerate";
  }
}

TEST(Init, SameSeedSameWeights) {
  TransformerClassifier<float> a(toy_config()), b(toy_config());
  auto c = toy_config();
  c.seed = 4;
  TransformerClassifier<float> d(c);
  auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].tensor.values(), pb[i].tensor.values());
    any_diff |= pa[i].tensor.values() != pd[i].tensor.values();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Forward, ShapesAndSingleToken) {
  TransformerClassifier<float> m(toy_config());
  Rng rng(1);
  auto seqs = random_seqs(rng, 5, 11, 9);
  seqs[0] = {5};
  auto out = m.forward(model::make_batch(seqs, 16), false, rng);
  EXPECT_EQ(out.pos.shape(), (nn::Shape{5, 2}));
  EXPECT_EQ(out.contlex.shape(), (nn::Shape{5, 3}));
  for (float v : out.pos.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, PaddingInvariance) {
  TransformerClassifier<float> m(toy_config());
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto seqs = random_seqs(rng, 1, 11, 8);
    auto alone = m.infer(model::make_batch(seqs, 16));
    // Batch with a longer neighbour, so the first row gets PAD appended.
    seqs.push_back(std::vector<std::int32_t>(seqs[0].size() + 1 + rng.below(6), 4));
    auto padded = m.infer(model::make_batch(seqs, 16));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(alone.pos[i], padded.pos[i], 1e-5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(alone.contlex[i], padded.contlex[i], 1e-5);
  }
}

TEST(Forward, AttentionRowsSumToOne) {
  auto c = toy_config();
  c.n_layers = 2;
  TransformerClassifier<double> m(c);
  Rng rng(3);
  auto batch = model::make_batch(random_seqs(rng, 4, 11, 7), 16);
  model::AttentionTrace<double> trace;
  m.forward(batch, false, rng, &trace);
  ASSERT_EQ(trace.layers.size(), 2u);
  const std::size_t B = batch.mask.batch, L = batch.mask.len, H = c.n_heads;
  for (const auto& probs : trace.layers)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t i = 0; i < L; ++i) {
          double s = 0;
          for (std::size_t j = 0; j < L; ++j) s += probs[((b * H + h) * L + i) * L + j];
          EXPECT_NEAR(s, 1.0, 1e-6);
        }
}

TEST(Forward, EvalModeDeterministicAndErrors) {
  auto c = toy_config();
  c.dropout = 0.3;
  TransformerClassifier<float> m(c);
  Rng rng(4);
  auto batch = model::make_batch(random_seqs(rng, 6, 11, 10), 16);
  EXPECT_EQ(m.infer(batch).contlex, m.infer(batch).contlex);
  Rng r1(9), r2(9);
  EXPECT_EQ(m.forward(batch, true, r1).pos.values(), m.forward(batch, true, r2).pos.values());

  Batch all_pad = model::make_batch(std::vector<std::vector<std::int32_t>>{{}}, 16);
  EXPECT_THROW(m.infer(all_pad), DataError);
  Batch too_long = model::make_batch(std::vector<std::vector<std::int32_t>>{std::vector<std::int32_t>(17, 3)}, 99);
  EXPECT_THROW(m.infer(too_long), DataError);
  Batch bad_id = model::make_batch(std::vector<std::vector<std::int32_t>>{{11}}, 16);
  EXPECT_THROW(m.infer(bad_id), IndexError);
}

TEST(Gradcheck, FullToyModel) {
  TransformerClassifier<double> m(toy_config());
  Rng rng(5);
  auto batch = model::make_batch(random_seqs(rng, 3, 11, 5), 16);
  std::vector<std::size_t> pos_t{0, 1, 1}, con_t{2, 0, 1};
  std::vector<nn::Tensor<double>> params;
  std::vector<std::string> names;
  for (auto& p : m.parameters()) {
    params.push_back(p.tensor);
    names.push_back(p.name);
  }
  auto r = oracle::gradcheck(
      [&] {
        Rng unused(0);
        auto out = m.forward(batch, true, unused);
        return train::combined_loss(out.pos, out.contlex, pos_t, con_t, {1.0, 1.0}).total;
      },
      params, names);
  EXPECT_GT(r.checked, 500u);
  EXPECT_LT(r.max_rel_err, 1e-3) << r.worst;
  // A key bias shifts every score of a softmax row equally.
  for (double g : m.layers()[0].bk.grad()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Training, LossDecreasesWhenOverfitting) {
  auto c = toy_config();
  c.d_model = 16;
  c.ffn_dim = 32;
  TransformerClassifier<float> m(c);
  Rng rng(6);
  auto batch = model::make_batch(random_seqs(rng, 16, 11, 8), 16);
  std::vector<std::size_t> pos_t(16), con_t(16);
  for (std::size_t i = 0; i < 16; ++i) {
    pos_t[i] = i % 2;
    con_t[i] = i % 3;
  }
  optim::AdamW<float> opt(m.parameters(), {0.9, 0.999, 1e-8, 0.0});
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    opt.zero_grad();
    auto out = m.forward(batch, true, rng);
    auto loss = train::combined_loss(out.pos, out.contlex, pos_t, con_t, {1.0, 1.0}).total;
    if (step == 0) first = loss.item();
    last = loss.item();
    nn::backward(loss);
    opt.step(0.01);
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Clone, IsIndependentAndConverts) {
  TransformerClassifier<float> m(toy_config());
  auto copy = m.clone();
  auto as_double = m.clone<double>();
  copy.parameters()[0].tensor.values()[0] += 1.0f;
  EXPECT_NE(copy.parameters()[0].tensor.values()[0], m.parameters()[0].tensor.values()[0]);
  EXPECT_EQ(as_double.parameters()[3].tensor.values()[2], double(m.parameters()[3].tensor.values()[2]));
}

TEST(Checkpoint, RoundTripBitwise) {
  ModelConfig c = toy_config();
  TransformerClassifier<float> m(c);
  optim::AdamW<float> opt(m.parameters(), {});
  Rng rng(7);
  auto batch = model::make_batch(random_seqs(rng, 4, 11, 6), 16);
  std::vector<std::size_t> pos_t{0, 1, 0, 1}, con_t{0, 1, 2, 0};
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    auto out = m.forward(batch, true, rng);
    nn::backward(train::combined_loss(out.pos, out.contlex, pos_t, con_t, {1, 1}).total);
    opt.step(0.001);
  }
  const auto bytes = checkpoint::serialize(m, &opt, 12, {{"note", "x"}});
  auto ck = checkpoint::deserialize(bytes);
  EXPECT_EQ(ck.epoch, 12u);
  EXPECT_EQ(ck.optimizer_step, std::optional<std::size_t>(3));
  auto back = checkpoint::restore_model<float>(ck);
  EXPECT_EQ(back.infer(batch).contlex, m.infer(batch).contlex);
  EXPECT_EQ(back.infer(batch).pos, m.infer(batch).pos);

  optim::AdamW<float> opt2(back.parameters(), {});
  checkpoint::restore_optimizer(ck, c, opt2);
  EXPECT_EQ(opt2.step_count(), 3u);
  for (std::size_t i = 0; i < opt.moments().size(); ++i) {
    EXPECT_EQ(opt2.moments()[i].m, opt.moments()[i].m);
    EXPECT_EQ(opt2.moments()[i].v, opt.moments()[i].v);
  }
  auto other = c;
  other.d_model = 16;
  EXPECT_THROW(checkpoint::restore_optimizer(ck, other, opt2), FormatError);
}

TEST(Checkpoint, HeaderAndCorruption) {
  ModelConfig c;
  c.vocab_size = 50;
  c.n_layers = 1;
  c.n_contlex = 5;
  TransformerClassifier<float> m(c);
  const auto bytes = checkpoint::serialize<float>(m, nullptr, 1, {});
  const auto header = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
  EXPECT_EQ(header.at("magic"), "mtc/v1");
  EXPECT_EQ(header.at("config").at("d_model"), 128);
  EXPECT_EQ(header.at("config").at("ffn_dim"), 512);

  EXPECT_THROW(checkpoint::deserialize(bytes.substr(0, bytes.size() - 4)), FormatError);
  EXPECT_THROW(checkpoint::deserialize(bytes + "xxxx"), FormatError);
  auto bad_magic = bytes;
  bad_magic.replace(bad_magic.find("mtc/v1"), 6, "mtc/v9");
  EXPECT_THROW(checkpoint::deserialize(bad_magic), FormatError);
  EXPECT_THROW(checkpoint::deserialize("not a checkpoint"), FormatError);
  auto ck = checkpoint::deserialize(bytes);
  TransformerClassifier<float> fresh(c);
  optim::AdamW<float> opt(fresh.parameters(), {});
  EXPECT_THROW(checkpoint::restore_optimizer(ck, c, opt), FormatError);  // no optimizer state stored

  const auto dir = std::filesystem::temp_directory_path() / "mtc_ckpt_test";
  std::filesystem::create_directories(dir);
  checkpoint::save_checkpoint<float>(m, nullptr, 1, (dir / "m.ckpt").string());
  EXPECT_EQ(checkpoint::load_checkpoint((dir / "m.ckpt").string()).tensors.size(), m.parameters().size());
  std::filesystem::remove_all(dir);
}
