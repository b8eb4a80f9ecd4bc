#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mtc/ops.hpp"
#include "mtc/rng.hpp"
#include "support/oracles.hpp"

using mtc::Rng;
using mtc::nn::Tensor;
namespace nn = mtc::nn;

namespace {

Tensor<double> random_tensor(mtc::nn::Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

// Fixed random weights give every output element a different gradient.
Tensor<double> weigh(const Tensor<double>& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1, 1);
  return nn::sum(nn::mul(y, Tensor<double>::from(y.shape(), w)));
}

constexpr double kOpTol = 1e-4;

}  // namespace

TEST(Matmul, IdentityAndHandExample) {
  auto I = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
  auto B = Tensor<float>::from({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(nn::matmul(I, B).values(), (std::vector<float>{3, 4, 5, 6}));
  auto A = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto C = Tensor<float>::from({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(nn::matmul(A, C).values(), (std::vector<float>{19, 22, 43, 50}));
}

TEST(Matmul, ShapeMismatchIsDimensionError) {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({2, 3});
  EXPECT_THROW(nn::matmul(a, b), mtc::DimensionError);
}

TEST(Matmul, GradientOfSum) {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  auto r = oracle::gradcheck([&] { return nn::sum(nn::matmul(a, b)); }, {a, b});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(Softmax, Examples) {
  auto u = nn::softmax(Tensor<double>::from({3}, {0, 0, 0}), 0);
  for (double x : u.values()) EXPECT_NEAR(x, 1.0 / 3, 1e-12);
  auto s = nn::softmax(Tensor<double>::from({3}, {1, 2, 3}), 0);
  EXPECT_NEAR(s.values()[0], 0.09003, 1e-5);
  EXPECT_NEAR(s.values()[1], 0.24473, 1e-5);
  EXPECT_NEAR(s.values()[2], 0.66524, 1e-5);
}

TEST(Softmax, ShiftInvarianceAndSlicesSumToOne) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> v(12);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-5, 5));
    auto shifted = v;
    for (auto& x : shifted) x += 3.7f;
    for (std::size_t axis = 0; axis < 2; ++axis) {
      auto a = nn::softmax(Tensor<float>::from({3, 4}, v), axis);
      auto b = nn::softmax(Tensor<float>::from({3, 4}, shifted), axis);
      for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_NEAR(a.values()[i], b.values()[i], 1e-6);
        EXPECT_GT(a.values()[i], 0.0f);
        EXPECT_LT(a.values()[i], 1.0f);
      }
    }
    auto rows = nn::softmax(Tensor<float>::from({3, 4}, v), 1);
    for (std::size_t r = 0; r < 3; ++r) {
      float s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += rows.values()[r * 4 + c];
      EXPECT_NEAR(s, 1.0f, 1e-6);
    }
  }
}

TEST(Softmax, GradientBothAxes) {
  Rng rng(3);
  auto x = random_tensor({3, 5}, rng, -2, 2);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    auto r = oracle::gradcheck([&] { return weigh(nn::softmax(x, axis)); }, {x});
    EXPECT_LT(r.max_rel_err, kOpTol) << "axis " << axis << " " << r.worst;
  }
}

TEST(LayerNorm, Examples) {
  auto g = Tensor<double>::from({3}, {1, 1, 1}), b = Tensor<double>::zeros({3});
  auto flat = nn::layer_norm(Tensor<double>::from({1, 3}, {1, 1, 1}), g, b);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);
  auto g2 = Tensor<double>::from({2}, {1, 1}), b2 = Tensor<double>::zeros({2});
  auto y = nn::layer_norm(Tensor<double>::from({1, 2}, {1, 3}), g2, b2);
  EXPECT_NEAR(y.values()[0], -1.0, 1e-4);
  EXPECT_NEAR(y.values()[1], 1.0, 1e-4);
}

TEST(LayerNorm, WidthMismatch) {
  auto g = Tensor<float>::zeros({3}), b = Tensor<float>::zeros({3});
  EXPECT_THROW(nn::layer_norm(Tensor<float>::zeros({2, 4}), g, b), mtc::DimensionError);
}

TEST(LayerNorm, Gradient) {
  Rng rng(4);
  auto x = random_tensor({4, 6}, rng, -2, 2);
  auto g = random_tensor({6}, rng, 0.5, 1.5), b = random_tensor({6}, rng);
  auto r = oracle::gradcheck([&] { return weigh(nn::layer_norm(x, g, b)); }, {x, g, b});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(CrossEntropy, Examples) {
  std::vector<std::size_t> t0{0};
  EXPECT_NEAR(nn::cross_entropy(Tensor<double>::from({1, 4}, {0, 0, 0, 0}), t0).item(), std::log(4.0), 1e-9);
  EXPECT_NEAR(nn::cross_entropy(Tensor<double>::from({1, 2}, {1000, 0}), t0).item(), 0.0, 1e-12);
  std::vector<std::size_t> t2{2};
  EXPECT_NEAR(nn::cross_entropy(Tensor<double>::from({1, 3}, {1, 2, 3}), t2).item(), 0.40761, 1e-5);
}

TEST(CrossEntropy, TargetOutOfRange) {
  std::vector<std::size_t> t{3};
  EXPECT_THROW(nn::cross_entropy(Tensor<float>::zeros({1, 3}), t), mtc::IndexError);
}

TEST(CrossEntropy, Gradient) {
  Rng rng(5);
  auto x = random_tensor({4, 5}, rng, -3, 3);
  std::vector<std::size_t> t{0, 4, 2, 2};
  auto r = oracle::gradcheck([&] { return nn::cross_entropy(x, t); }, {x});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(ElementwiseOps, Gradients) {
  Rng rng(6);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
  auto check = [&](const char* name, const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> ps) {
    auto r = oracle::gradcheck(f, ps);
    EXPECT_LT(r.max_rel_err, kOpTol) << name << " " << r.worst;
  };
  check("add", [&] { return weigh(nn::add(a, b)); }, {a, b});
  check("mul", [&] { return weigh(nn::mul(a, b)); }, {a, b});
  check("scale", [&] { return weigh(nn::scale(a, 2.5)); }, {a});
  check("add_bias", [&] { return weigh(nn::add_bias(a, bias)); }, {a, bias});
  check("relu", [&] { return weigh(nn::relu(a)); }, {a});
  check("mean", [&] { return nn::mean(nn::mul(a, a)); }, {a});
}

TEST(Embedding, GatherAndGradient) {
  Rng rng(7);
  auto table = random_tensor({5, 3}, rng);
  std::vector<std::int32_t> ids{4, 0, 4, 2};
  auto e = nn::embedding(table, std::span<const std::int32_t>(ids));
  EXPECT_EQ(e.values()[0], table.values()[12]);
  auto r = oracle::gradcheck([&] { return weigh(nn::embedding(table, std::span<const std::int32_t>(ids))); }, {table});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
  std::vector<std::int32_t> bad{5};
  EXPECT_THROW(nn::embedding(table, std::span<const std::int32_t>(bad)), mtc::IndexError);
}

TEST(Attention, GradientWithPadding) {
  Rng rng(8);
  const std::size_t B = 2, L = 4, d = 6;
  auto q = random_tensor({B * L, d}, rng), k = random_tensor({B * L, d}, rng), v = random_tensor({B * L, d}, rng);
  nn::SequenceMask mask{B, L, {1, 1, 1, 0, 1, 1, 0, 0}};
  Rng unused(0);
  auto r = oracle::gradcheck(
      [&] { return weigh(nn::attention(q, k, v, mask, 2, 0.0, false, unused)); }, {q, k, v});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(Attention, GradientWithDropout) {
  Rng rng(9);
  const std::size_t B = 1, L = 3, d = 4;
  auto q = random_tensor({B * L, d}, rng), k = random_tensor({B * L, d}, rng), v = random_tensor({B * L, d}, rng);
  nn::SequenceMask mask{B, L, {1, 1, 1}};
  auto r = oracle::gradcheck(
      [&] {
        Rng drop(42);  // same mask every evaluation
        return weigh(nn::attention(q, k, v, mask, 2, 0.3, true, drop));
      },
      {q, k, v});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(Attention, RowsSumToOneAndPadKeysGetZero) {
  Rng rng(10);
  const std::size_t B = 2, L = 5, d = 8, H = 2;
  auto q = random_tensor({B * L, d}, rng), k = random_tensor({B * L, d}, rng), v = random_tensor({B * L, d}, rng);
  nn::SequenceMask mask{B, L, {1, 1, 1, 1, 1, 1, 1, 0, 0, 0}};
  std::vector<double> probs;
  Rng unused(0);
  nn::attention(q, k, v, mask, H, 0.0, false, unused, &probs);
  ASSERT_EQ(probs.size(), B * H * L * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < L; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < L; ++j) {
          const double p = probs[((b * H + h) * L + i) * L + j];
          if (!mask.valid[b * L + j]) {
            EXPECT_EQ(p, 0.0);
          }
          s += p;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
}

TEST(Attention, AllPadRowIsDataError) {
  auto x = Tensor<float>::zeros({2, 4});
  nn::SequenceMask mask{1, 2, {0, 0}};
  Rng rng(0);
  EXPECT_THROW(nn::attention(x, x, x, mask, 2, 0.0, false, rng), mtc::DataError);
}

TEST(MaskedMeanPool, AveragesValidPositionsAndGradient) {
  Rng rng(11);
  auto x = random_tensor({6, 3}, rng);
  nn::SequenceMask mask{2, 3, {1, 1, 0, 1, 0, 0}};
  auto y = nn::masked_mean_pool(x, mask);
  EXPECT_NEAR(y.values()[0], 0.5 * (x.values()[0] + x.values()[3]), 1e-12);
  EXPECT_NEAR(y.values()[3], x.values()[9], 1e-12);
  auto r = oracle::gradcheck([&] { return weigh(nn::masked_mean_pool(x, mask)); }, {x});
  EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
}

TEST(Dropout, Semantics) {
  Rng rng(12);
  auto x = Tensor<float>::from({4}, {1, 2, 3, 4});
  EXPECT_EQ(nn::dropout(x, 0.0, true, rng).values(), x.values());
  EXPECT_EQ(nn::dropout(x, 0.7, false, rng).values(), x.values());
  EXPECT_THROW(nn::dropout(x, 1.0, true, rng), mtc::ConfigError);
  EXPECT_THROW(nn::dropout(x, -0.1, true, rng), mtc::ConfigError);

  auto ones = Tensor<float>::from({100000}, std::vector<float>(100000, 1.0f));
  auto y = nn::dropout(ones, 0.5, true, rng);
  const double m = std::accumulate(y.values().begin(), y.values().end(), 0.0) / 1e5;
  EXPECT_NEAR(m, 1.0, 0.02);
  for (float v : y.values()) EXPECT_TRUE(v == 0.0f || v == 2.0f);
}

TEST(Dropout, SameSeedSameMask) {
  auto x = Tensor<float>::from({1000}, std::vector<float>(1000, 1.0f));
  Rng a(5), b(5);
  EXPECT_EQ(nn::dropout(x, 0.3, true, a).values(), nn::dropout(x, 0.3, true, b).values());
}

TEST(Backward, AnalyticExamplesAndAccumulation) {
  auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  nn::backward(nn::sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  auto y = Tensor<double>::from({3}, {1, 2, 3}, true);
  nn::backward(nn::sum(nn::mul(y, y)));
  EXPECT_EQ(std::vector<double>(y.grad().begin(), y.grad().end()), (std::vector<double>{2, 4, 6}));
  nn::backward(nn::sum(nn::mul(y, y)));  // accumulates
  EXPECT_EQ(std::vector<double>(y.grad().begin(), y.grad().end()), (std::vector<double>{4, 8, 12}));
}

TEST(Backward, UsageErrors) {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  EXPECT_THROW(nn::backward(nn::scale(x, 2.0)), mtc::UsageError);  // not scalar
  auto loss = nn::sum(nn::mul(x, x));
  nn::backward(loss);
  EXPECT_THROW(nn::backward(loss), mtc::UsageError);  // graph consumed
  auto c = Tensor<double>::from({1}, {1});
  EXPECT_THROW(nn::backward(c), mtc::UsageError);  // no grad
}

TEST(Backward, SharedSubgraphVisitedOnce) {
  // z = a*b used twice: grad must be counted through both uses exactly once each.
  auto a = Tensor<double>::from({1}, {3}, true), b = Tensor<double>::from({1}, {5}, true);
  auto z = nn::mul(a, b);
  nn::backward(nn::sum(nn::add(z, z)));
  EXPECT_EQ(a.grad()[0], 10.0);
  EXPECT_EQ(b.grad()[0], 6.0);
}

TEST(Backward, RandomThreeOpChains) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({3, 4}, rng), w = random_tensor({4, 4}, rng);
    auto g = random_tensor({4}, rng, 0.5, 1.5), b = random_tensor({4}, rng);
    auto r = oracle::gradcheck(
        [&] { return weigh(nn::softmax(nn::layer_norm(nn::matmul(x, w), g, b), 1), trial); }, {x, w, g, b});
    EXPECT_LT(r.max_rel_err, kOpTol) << r.worst;
  }
}

TEST(Tensor, InvariantsAndNonFinite) {
  EXPECT_THROW(Tensor<float>::from({2, 2}, {1, 2, 3}), mtc::DimensionError);
  EXPECT_THROW(Tensor<float>::zeros({0, 2}), mtc::DimensionError);
  auto big = Tensor<float>::from({1}, {3e38f});
  EXPECT_THROW(nn::scale(big, 10.0f), mtc::NumericError);
}

TEST(Rng, ReproducibleAndSplittable) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng base(7);
  const auto before = base.state();
  auto s1 = base.split("x"), s2 = base.split("y"), s3 = base.split("x");
  EXPECT_EQ(base.state(), before);
  EXPECT_EQ(s1.next_u64(), s3.next_u64());
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  EXPECT_NE(base.split("x", 0).next_u64(), base.split("x", 1).next_u64());
  // Known first output of SplitMix64 for seed 0.
  EXPECT_EQ(Rng(0).next_u64(), 0xE220A8397B1DCDAFULL);
  for (int i = 0; i < 1000; ++i) {
    const double u = base.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(base.below(7), 7u);
  }
}
