#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cdistill/error.hpp"
#include "cdistill/model.hpp"
#include "cdistill/ops.hpp"
#include "test_support.hpp"

namespace cdistill {
namespace {

using testing::code_of;
using testing::random_batch;

ModelConfig toy_config(std::size_t layers = 2) {
  ModelConfig c;
  c.vocab_size = 20;
  c.hidden_dim = 8;
  c.num_layers = layers;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.max_seq_len = 6;
  c.dropout_rate = 0.0;
  return c;
}

void expect_bit_equal(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]) << "element " << i;
}

TEST(ModelConfigTest, Validation) {
  EXPECT_NO_THROW(toy_config().validate());
  auto c = toy_config();
  c.num_heads = 3;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = toy_config();
  c.dropout_rate = 1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = toy_config();
  c.vocab_size = 0;
  EXPECT_EQ(code_of([&] { EncoderModel::init_random(c, 1); }), ErrorCode::InvalidConfig);

  const auto base = ModelConfig::bert_base();
  EXPECT_EQ(base.hidden_dim, 768u);
  EXPECT_EQ(base.num_layers, 12u);
  EXPECT_EQ(base.num_heads, 12u);
  EXPECT_EQ(base.max_seq_len, 128u);
}

TEST(InitTest, DeterministicPerSeed) {
  auto a = EncoderModel::init_random(toy_config(), 7);
  auto b = EncoderModel::init_random(toy_config(), 7);
  auto c = EncoderModel::init_random(toy_config(), 8);
  auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    expect_bit_equal(pa[i].second, pb[i].second);
    for (std::size_t k = 0; k < pa[i].second.numel(); ++k) {
      any_differs |= pa[i].second.data()[k] != pc[i].second.data()[k];
    }
  }
  EXPECT_TRUE(any_differs);
}

TEST(InitTest, EmbeddingsFrozenByDefault) {
  auto m = EncoderModel::init_random(toy_config(), 1);
  EXPECT_TRUE(m.embeddings_frozen());
  EXPECT_FALSE(m.token_embeddings().requires_grad());
  EXPECT_FALSE(m.position_embeddings().requires_grad());
  for (const auto& t : m.trainable_parameters()) {
    EXPECT_FALSE(t.same_storage(m.token_embeddings()));
    EXPECT_TRUE(t.requires_grad());
  }
  m.set_embeddings_frozen(false);
  EXPECT_TRUE(m.token_embeddings().requires_grad());
}

TEST(ForwardTest, CountsFollowDepth) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n <= 12; ++n) {
    auto m = EncoderModel::init_random(toy_config(n), n);
    auto trace = m.forward(random_batch(2, 5, 20, rng, true));
    EXPECT_EQ(trace.hidden.size(), n + 1);
    EXPECT_EQ(trace.attentions.size(), n);
    EXPECT_EQ(trace.num_layers(), n);
    for (const auto& h : trace.hidden) EXPECT_EQ(h.shape(), (Shape{2, 5, 8}));
    for (const auto& a : trace.attentions) EXPECT_EQ(a.shape(), (Shape{2, 2, 5, 5}));
  }
}

TEST(ForwardTest, Errors) {
  auto m = EncoderModel::init_random(toy_config(), 1);
  std::mt19937_64 rng(2);
  EXPECT_EQ(code_of([&] { m.forward(random_batch(1, 7, 20, rng, false)); }), ErrorCode::SequenceTooLong);
  Batch b = random_batch(1, 4, 20, rng, false);
  b.token_ids[2] = 20;
  EXPECT_EQ(code_of([&] { m.forward(b); }), ErrorCode::TokenOutOfRange);
}

TEST(ForwardTest, PostSoftmaxRowsSumToOneAndMaskedKeysAreZero) {
  auto c = toy_config(3);
  c.attention_capture = AttentionCapture::PostSoftmax;
  auto m = EncoderModel::init_random(c, 3);
  std::mt19937_64 rng(4);
  Batch b = random_batch(3, 6, 20, rng, false);
  b.token_ids[5] = 0;  // last position of the first row is padding
  b.attention_mask[5] = 0;
  auto trace = m.forward(b);
  const std::size_t T = 6, H = 2;
  for (const auto& a : trace.attentions) {
    for (std::size_t row = 0; row < 3 * H * T; ++row) {
      double sum = 0.0;
      for (std::size_t k = 0; k < T; ++k) sum += a.data()[row * T + k];
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t q = 0; q < T; ++q) EXPECT_EQ(a.data()[(h * T + q) * T + 5], 0.0);
    }
  }
}

// Pre-softmax capture equals Q K^T / sqrt(d_h) recomputed by explicit loops
// from the layer input.
TEST(ForwardTest, PreSoftmaxScoresMatchLoopOracle) {
  auto m = EncoderModel::init_random(toy_config(1), 5);
  std::mt19937_64 rng(6);
  auto trace = m.forward(random_batch(2, 5, 20, rng, true));
  const auto& L = m.layers()[0];
  const std::size_t B = 2, T = 5, d = 8, H = 2, dh = 4;
  const auto x = trace.hidden[0].data();
  auto proj = [&](const Tensor& w, const Tensor& bias, std::size_t b, std::size_t t, std::size_t col) {
    double s = bias.data()[col];
    for (std::size_t i = 0; i < d; ++i) s += x[(b * T + t) * d + i] * w.data()[i * d + col];
    return s;
  };
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t q = 0; q < T; ++q) {
        for (std::size_t k = 0; k < T; ++k) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) {
            s += proj(L.query_weight, L.query_bias, b, q, h * dh + e) * proj(L.key_weight, L.key_bias, b, k, h * dh + e);
          }
          EXPECT_NEAR(trace.attentions[0].data()[((b * H + h) * T + q) * T + k], s / std::sqrt(4.0), 1e-13);
        }
      }
    }
  }
}

TEST(ForwardTest, BatchPermutationPermutesOutputs) {
  auto m = EncoderModel::init_random(toy_config(2), 9);
  std::mt19937_64 rng(10);
  Batch b = random_batch(4, 6, 20, rng, true);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  auto base = m.forward(b);
  auto permuted = m.forward(b.gather(perm));
  auto check = [&](const Tensor& x, const Tensor& y) {
    const std::size_t row = x.numel() / 4;
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t i = 0; i < row; ++i) ASSERT_EQ(y.data()[r * row + i], x.data()[perm[r] * row + i]);
    }
  };
  for (std::size_t k = 0; k < base.hidden.size(); ++k) check(base.hidden[k], permuted.hidden[k]);
  for (std::size_t j = 0; j < base.attentions.size(); ++j) check(base.attentions[j], permuted.attentions[j]);
}

TEST(ForwardTest, PaddedTokensDoNotReachRealPositions) {
  auto m = EncoderModel::init_random(toy_config(2), 12);
  std::mt19937_64 rng(13);
  Batch b = random_batch(1, 6, 20, rng, false);
  for (std::size_t t = 4; t < 6; ++t) b.attention_mask[t] = 0;
  Batch other = b;
  other.token_ids[4] = 7;
  other.token_ids[5] = 11;
  auto x = m.forward(b), y = m.forward(other);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(x.hidden.back().data()[t * 8 + i], y.hidden.back().data()[t * 8 + i], 1e-14);
  }
}

TEST(ForwardTest, DropoutDependsOnSeedOnlyInTrainingMode) {
  auto c = toy_config(2);
  c.dropout_rate = 0.3;
  auto m = EncoderModel::init_random(c, 14);
  std::mt19937_64 rng(15);
  Batch b = random_batch(2, 5, 20, rng, false);
  auto eval1 = m.forward(b, {false, 1}), eval2 = m.forward(b, {false, 2});
  expect_bit_equal(eval1.hidden.back(), eval2.hidden.back());
  auto t1 = m.forward(b, {true, 1}), t1b = m.forward(b, {true, 1}), t2 = m.forward(b, {true, 2});
  expect_bit_equal(t1.hidden.back(), t1b.hidden.back());
  bool differs = false;
  for (std::size_t i = 0; i < t1.hidden.back().numel(); ++i) differs |= t1.hidden.back().data()[i] != t2.hidden.back().data()[i];
  EXPECT_TRUE(differs);
}

TEST(ForwardTest, GradientsOfTraceFunctionMatchFiniteDifferences) {
  auto m = EncoderModel::init_random(toy_config(2), 16);
  // larger weights than the 0.02 init so every path carries signal
  std::mt19937_64 rng(17);
  for (auto& [_, t] : m.named_parameters()) {
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  }
  Batch b = random_batch(2, 4, 20, rng, true);
  auto f = [&] {
    auto trace = m.forward(b);
    Tensor total = testing::random_projection(trace.hidden.back(), 1);
    for (std::size_t j = 0; j < trace.attentions.size(); ++j) {
      total = ops::add(total, testing::random_projection(trace.attentions[j], 10 + j));
    }
    return total;
  };
  std::vector<std::pair<std::string, Tensor>> trainable;
  for (auto& [name, t] : m.named_parameters()) {
    if (t.requires_grad()) trainable.emplace_back(name, t);
  }
  auto r = testing::check_gradients(f, trainable);
  EXPECT_LE(r.max_relative_error, 1e-6) << r.worst;
  EXPECT_FALSE(m.token_embeddings().has_grad());
}

TEST(ModelTest, CloneIsDeep) {
  auto m = EncoderModel::init_random(toy_config(), 18);
  auto c = m.clone();
  c.layers()[0].query_weight.mutable_data()[0] += 1.0;
  EXPECT_NE(c.layers()[0].query_weight.data()[0], m.layers()[0].query_weight.data()[0]);
  EXPECT_EQ(c.embeddings_frozen(), m.embeddings_frozen());
}

TEST(ModelTest, FromNamedParametersRoundTrip) {
  auto m = EncoderModel::init_random(toy_config(), 19);
  auto r = EncoderModel::from_named_parameters(m.config(), m.named_parameters(), true);
  auto pm = m.named_parameters(), pr = r.named_parameters();
  ASSERT_EQ(pm.size(), pr.size());
  for (std::size_t i = 0; i < pm.size(); ++i) {
    EXPECT_EQ(pm[i].first, pr[i].first);
    expect_bit_equal(pm[i].second, pr[i].second);
    EXPECT_EQ(pm[i].second.requires_grad(), pr[i].second.requires_grad());
  }
  auto missing = m.named_parameters();
  missing.pop_back();
  EXPECT_EQ(code_of([&] { EncoderModel::from_named_parameters(m.config(), missing, true); }), ErrorCode::InvalidConfig);
}

TEST(ClassifyTest, ShapeZeroWeightsAndDeterminism) {
  auto m = EncoderModel::init_random(toy_config(), 20);
  auto head = ClassifierHead::init_random(8, kNumClasses, 21);
  std::mt19937_64 rng(22);
  Batch b = random_batch(2, 5, 20, rng, true);
  auto logits = classify(m, head, b);
  EXPECT_EQ(logits.shape(), (Shape{2, 3}));
  auto again = classify(m, head, b);
  expect_bit_equal(logits, again);

  ClassifierHead zero{Tensor::zeros({8, 8}), Tensor::zeros({8}), Tensor::zeros({8, 3}), Tensor::zeros({3})};
  auto z = classify(m, zero, b);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  auto p = ops::softmax_rows(z);
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  auto wrong = ClassifierHead::init_random(6, kNumClasses, 1);
  EXPECT_EQ(code_of([&] { classify(m, wrong, b); }), ErrorCode::DimensionMismatch);
}

}  // namespace
}  // namespace cdistill
