#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lrc/encoder.hpp"
#include "lrc/error.hpp"

namespace lrc {
namespace {

const EncoderConfig kSmall{8, 6, 2, 8, 2, 12, 2};
const std::vector<int> kTokens{2, 3, 4, 4, 3, 0};

bool same_parameters(const EncoderModel& a, const EncoderModel& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value() != pb[i]->value()) return false;
  return true;
}

TEST(Encoder, ParamCountClosedFormMatchesEnumeration) {
  const EncoderConfig c{64, 16, 4, 32, 4, 64, 3};
  // Hand count: embeddings 64*32 + 16*32 + 2*32 = 2624; per layer
  // 4*(32*32+32) + 2*32 + (32*64+64) + (64*32+32) + 2*32 = 8544; head 32*3+3.
  const std::size_t hand = 2624 + 4 * 8544 + 99;
  EXPECT_EQ(hand, 36899u);
  EXPECT_EQ(param_count(c), hand);
  std::size_t enumerated = 0;
  const EncoderModel m = EncoderModel::init(c, 1);
  for (const Parameter* p : m.parameters()) enumerated += p->value().size();
  EXPECT_EQ(enumerated, hand);
}

TEST(Encoder, ParameterNamesAreUnique) {
  const EncoderModel m = EncoderModel::init(kSmall, 1);
  std::set<std::string> names;
  for (const Parameter* p : m.parameters()) EXPECT_TRUE(names.insert(p->name()).second) << p->name();
}

TEST(Encoder, InitDeterministicInSeed) {
  EXPECT_TRUE(same_parameters(EncoderModel::init(kSmall, 5), EncoderModel::init(kSmall, 5)));
  EXPECT_FALSE(same_parameters(EncoderModel::init(kSmall, 5), EncoderModel::init(kSmall, 6)));
}

TEST(Encoder, InitRanges) {
  const EncoderModel m = EncoderModel::init(kSmall, 3);
  for (double v : m.embedding_ln_gain().value().data()) EXPECT_EQ(v, 1.0);
  for (double v : m.layers()[0].ln2_bias.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : m.token_embedding().value().data()) EXPECT_LE(std::abs(v), 0.08);
}

TEST(Encoder, OneLayerTraceShape) {
  EncoderConfig c = kSmall;
  c.num_layers = 1;
  EncoderModel m = EncoderModel::init(c, 1);
  Tape tape;
  ForwardTrace t = forward(tape, m, kTokens);
  ASSERT_EQ(t.ffn_outs.size(), 1u);
  EXPECT_EQ(t.ffn_outs[0].shape(), (Shape{6, 8}));
  EXPECT_EQ(t.emb_out.shape(), (Shape{6, 8}));
  EXPECT_EQ(t.logits.shape(), (Shape{2}));
}

TEST(Encoder, ShorterSequencesAreAccepted) {
  const EncoderModel m = EncoderModel::init(kSmall, 1);
  const std::vector<int> tokens{2, 4, 3};
  EXPECT_EQ(evaluate_trace(m, tokens).emb_out.shape(), (Shape{3, 8}));
}

TEST(Encoder, ForwardDeterministic) {
  const EncoderModel m = EncoderModel::init(kSmall, 2);
  TraceValues a = evaluate_trace(m, kTokens), b = evaluate_trace(m, kTokens);
  EXPECT_EQ(a.emb_out, b.emb_out);
  EXPECT_EQ(a.ffn_outs, b.ffn_outs);
  EXPECT_EQ(a.logits, b.logits);
}

TEST(Encoder, TrainableAndConstantForwardAgree) {
  EncoderModel m = EncoderModel::init(kSmall, 2);
  Tape tape;
  TraceValues trainable = values_of(forward(tape, m, kTokens));
  EXPECT_EQ(trainable.logits, evaluate_trace(m, kTokens).logits);
}

TEST(Encoder, InjectingPriorEmbeddingReproducesLogits) {
  const EncoderModel m = EncoderModel::init(kSmall, 4);
  TraceValues prior = evaluate_trace(m, kTokens);
  Tape tape(GradMode::Disabled);
  ForwardOptions opt;
  opt.inject_emb = &prior.emb_out;
  ForwardTrace t = forward(tape, m, kTokens, opt);
  EXPECT_EQ(t.logits.value(), prior.logits);
  EXPECT_EQ(t.ffn_outs.back().value(), prior.ffn_outs.back());
}

TEST(Encoder, ZeroOffsetMatchesPlainForward) {
  const EncoderModel m = EncoderModel::init(kSmall, 4);
  Tensor zero(Shape{6, 8}, 0.0);
  Tape tape(GradMode::Disabled);
  ForwardOptions opt;
  opt.emb_offset = &zero;
  EXPECT_EQ(forward(tape, m, kTokens, opt).logits.value(), predict_logits(m, kTokens));
}

TEST(Encoder, OffsetEqualsInjectingShiftedEmbedding) {
  const EncoderModel m = EncoderModel::init(kSmall, 4);
  TraceValues prior = evaluate_trace(m, kTokens);
  Tensor delta(Shape{6, 8}, 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = 0.01 * static_cast<double>(i % 7) - 0.03;
  Tensor shifted = prior.emb_out;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += delta[i];
  Tape a(GradMode::Disabled), b(GradMode::Disabled);
  ForwardOptions off, inj;
  off.emb_offset = &delta;
  inj.inject_emb = &shifted;
  EXPECT_LT(max_abs_diff(forward(a, m, kTokens, off).logits.value(), forward(b, m, kTokens, inj).logits.value()),
            1e-14);
}

TEST(Encoder, InjectionBlocksEmbeddingGradient) {
  EncoderModel m = EncoderModel::init(kSmall, 4);
  TraceValues prior = evaluate_trace(m, kTokens);
  Tape tape;
  ForwardOptions opt;
  opt.inject_emb = &prior.emb_out;
  tape.backward(sum(forward(tape, m, kTokens, opt).logits));
  EXPECT_EQ(frobenius_norm(m.token_embedding().grad()), 0.0);
  EXPECT_GT(frobenius_norm(m.classifier_weight().grad()), 0.0);
}

TEST(Encoder, ZeroClassifierGivesZeroLogits) {
  EncoderModel m = EncoderModel::init(kSmall, 4);
  m.classifier_weight().value().fill(0.0);
  m.classifier_bias().value().fill(0.0);
  Tensor logits = predict_logits(m, kTokens);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  Tensor p = softmax_values(logits);
  EXPECT_EQ(p[0], 0.5);
}

TEST(Encoder, EveryParameterReceivesGradient) {
  EncoderModel m = EncoderModel::init(kSmall, 9);
  Tape tape;
  ForwardTrace t = forward(tape, m, kTokens);
  // A loss touching every layer output, so the last layer's non-CLS rows
  // matter too.
  Var loss = sum(t.logits);
  for (Var h : t.ffn_outs) loss = add(loss, scale(sum(square(h)), 0.01));
  tape.backward(loss);
  for (const Parameter* p : m.parameters()) EXPECT_GT(frobenius_norm(p->grad()), 0.0) << p->name();
}

TEST(Encoder, RegressionHead) {
  EncoderConfig c = kSmall;
  c.num_classes = 1;
  EXPECT_TRUE(c.regression());
  EXPECT_EQ(predict_logits(EncoderModel::init(c, 1), kTokens).shape(), (Shape{1}));
}

TEST(Encoder, InputErrors) {
  EncoderModel m = EncoderModel::init(kSmall, 1);
  const std::vector<int> bad_token{2, 8};
  const std::vector<int> negative{2, -1};
  const std::vector<int> too_long(7, 3);
  EXPECT_THROW(evaluate_trace(m, bad_token), InputError);
  EXPECT_THROW(evaluate_trace(m, negative), InputError);
  EXPECT_THROW(evaluate_trace(m, too_long), InputError);
  EXPECT_THROW(evaluate_trace(m, std::vector<int>{}), InputError);

  Tensor wrong(Shape{6, 7}, 0.0);
  Tape tape;
  ForwardOptions opt;
  opt.inject_emb = &wrong;
  EXPECT_THROW(forward(tape, m, kTokens, opt), DimensionError);
  ForwardOptions off;
  off.emb_offset = &wrong;
  EXPECT_THROW(forward(tape, m, kTokens, off), DimensionError);
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c = kSmall;
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = kSmall;
  c.hidden_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(EncoderModel::init(c, 1), ConfigError);
}

}  // namespace
}  // namespace lrc
