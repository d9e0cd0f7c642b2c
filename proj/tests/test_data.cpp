#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "lrc/data.hpp"
#include "lrc/error.hpp"
#include "lrc/vocab.hpp"

namespace lrc {
namespace {

std::vector<int> bits(std::initializer_list<int> b) {
  std::vector<int> t{kClsToken};
  for (int x : b) t.push_back(x ? kBitOne : kBitZero);
  return t;
}

TEST(ParityLabel, Examples) {
  EXPECT_EQ(parity_label(bits({0, 0, 0, 0})), 0);
  EXPECT_EQ(parity_label(bits({0, 0, 1, 0})), 1);
  EXPECT_EQ(parity_label(bits({1, 1, 1, 0})), 1);
  EXPECT_EQ(parity_label(bits({1, 1, 0, 0})), 0);
}

TEST(GenParity, LayoutAndLabels) {
  for (const Sample& s : gen_parity(300, 9, 4)) {
    ASSERT_EQ(s.tokens.size(), 9u);
    EXPECT_EQ(s.tokens[0], kClsToken);
    for (std::size_t i = 1; i < s.tokens.size(); ++i)
      EXPECT_TRUE(s.tokens[i] == kBitZero || s.tokens[i] == kBitOne);
    EXPECT_EQ(s.label, parity_label(s.tokens));
  }
}

TEST(GenParity, ExactlyBalanced) {
  int ones = 0;
  for (const Sample& s : gen_parity(1000, 16, 11)) ones += s.label;
  EXPECT_EQ(ones, 500);
}

TEST(GenParity, OneProbabilityControlsDensity) {
  auto density = [](double p) {
    int ones = 0, total = 0;
    for (const Sample& s : gen_parity(2000, 16, 3, p)) {
      for (std::size_t i = 1; i < s.tokens.size(); ++i) ones += s.tokens[i] == kBitOne;
      total += 15;
    }
    return static_cast<double>(ones) / total;
  };
  // One bit may be flipped per sample to hit the alternating label, so the
  // observed density sits slightly above p.
  EXPECT_NEAR(density(0.15), 0.15, 0.03);
  EXPECT_NEAR(density(0.5), 0.5, 0.03);
  EXPECT_THROW(gen_parity(4, 8, 1, 0.0), ConfigError);
  EXPECT_THROW(gen_parity(4, 8, 1, 1.0), ConfigError);
}

TEST(GenParity, SeedDeterminism) {
  EXPECT_EQ(gen_parity(50, 12, 8), gen_parity(50, 12, 8));
  EXPECT_NE(gen_parity(50, 12, 8), gen_parity(50, 12, 9));
}

TEST(PairMatch, RuleExamples) {
  const std::vector<int> same{kClsToken, 5, 6, 7, kSepToken, 5, 6, 7};
  const std::vector<int> permuted{kClsToken, 5, 6, 7, kSepToken, 7, 5, 6};
  const std::vector<int> disjoint{kClsToken, 3, 4, 5, kSepToken, 6, 7, 6};
  EXPECT_TRUE(is_pair_match(same));
  EXPECT_TRUE(is_pair_match(permuted));
  EXPECT_FALSE(is_pair_match(disjoint));
}

TEST(PairMatch, GeneratedLabelsAgreeWithRule) {
  int ones = 0;
  for (const Sample& s : gen_pair_match(400, 10, 9, 2)) {
    ASSERT_EQ(s.tokens.size(), 10u);
    EXPECT_EQ(s.tokens[0], kClsToken);
    EXPECT_EQ(s.tokens[5], kSepToken);
    EXPECT_EQ(s.label, is_pair_match(s.tokens) ? 1 : 0);
    ones += s.label;
  }
  EXPECT_EQ(ones, 200);
}

TEST(Regression, TargetExamples) {
  EXPECT_EQ(ones_fraction(bits({1, 1, 1, 1})), 1.0);
  EXPECT_EQ(ones_fraction(bits({0, 0, 0, 0})), 0.0);
  EXPECT_EQ(ones_fraction(bits({1, 0, 1, 0})), 0.5);
  for (const Sample& s : gen_regression(200, 11, 5, 0.5)) EXPECT_EQ(s.target, ones_fraction(s.tokens));
}

TEST(Splits, DisjointSizedAndStratified) {
  TaskSpec t;
  t.seq_len = 12;
  Splits s = make_splits(t, 400, 100);
  ASSERT_EQ(s.train.size(), 400u);
  ASSERT_EQ(s.eval.size(), 100u);
  std::set<std::vector<int>> train;
  for (const Sample& x : s.train) train.insert(x.tokens);
  EXPECT_EQ(train.size(), 400u);
  for (const Sample& x : s.eval) EXPECT_EQ(train.count(x.tokens), 0u);
  int eval_ones = 0, train_ones = 0;
  for (const Sample& x : s.eval) eval_ones += x.label;
  for (const Sample& x : s.train) train_ones += x.label;
  EXPECT_EQ(eval_ones, 50);
  EXPECT_EQ(train_ones, 200);
  EXPECT_EQ(make_splits(t, 400, 100).eval, s.eval);
}

TEST(Splits, ImpossibleSizeIsConfigError) {
  TaskSpec t;
  t.seq_len = 4;  // only 8 distinct sequences
  EXPECT_THROW(make_splits(t, 10, 10), ConfigError);
}

TEST(Batches, Counts) {
  EXPECT_EQ(batches(32, 16, 1, true).size(), 2u);
  EXPECT_EQ(batches(17, 16, 1, true).size(), 1u);
  EXPECT_EQ(batches(17, 16, 1, false).size(), 2u);
  EXPECT_THROW(batches(10, 1, 1, true), ConfigError);
}

TEST(Batches, SeededPermutation) {
  auto a = batches(40, 8, 3, false), b = batches(40, 8, 3, false);
  EXPECT_EQ(a, b);
  std::set<std::size_t> seen;
  for (const auto& batch : a) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_NE(batches(40, 8, 4, false), a);
}

TEST(BatchStream, ReshufflesEachEpoch) {
  BatchStream s(8, 4, 1);
  auto e1 = s.next(), e1b = s.next();
  auto e2 = s.next(), e2b = s.next();
  std::set<std::size_t> first(e1.begin(), e1.end());
  first.insert(e1b.begin(), e1b.end());
  EXPECT_EQ(first.size(), 8u);
  EXPECT_FALSE(e1 == e2 && e1b == e2b);
  EXPECT_THROW(BatchStream(3, 4, 1), ConfigError);
}

TEST(Jsonl, RoundTrip) {
  std::vector<Sample> samples = gen_parity(20, 8, 2);
  for (Sample& s : samples) s.target = s.label;
  std::stringstream ss;
  write_jsonl(ss, samples, false);
  EXPECT_EQ(read_jsonl(ss, false), samples);

  std::vector<Sample> reg = gen_regression(10, 8, 2);
  std::stringstream rs;
  write_jsonl(rs, reg, true);
  EXPECT_EQ(read_jsonl(rs, true), reg);
}

TEST(Jsonl, MalformedLineNamesLine) {
  std::stringstream ss("{\"tokens\":[2,3],\"label\":0}\n{\"tokens\":[2\n");
  try {
    read_jsonl(ss, false);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(TaskSpec, Validation) {
  TaskSpec t;
  t.num_classes = 3;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TaskSpec{};
  t.kind = TaskKind::Regression;
  EXPECT_THROW(t.validate(), ConfigError);  // regression needs one output
  t.num_classes = 1;
  EXPECT_NO_THROW(t.validate());
  EXPECT_THROW(task_kind_from_string("multi"), ConfigError);
  EXPECT_EQ(task_kind_from_string(to_string(TaskKind::PairClassify)), TaskKind::PairClassify);
}

}  // namespace
}  // namespace lrc
