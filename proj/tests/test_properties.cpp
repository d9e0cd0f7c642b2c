#include <gtest/gtest.h>

#include <cmath>

#include "lrc/losses.hpp"
#include "oracle.hpp"

namespace lrc {
namespace {

constexpr int kCases = 1000;

Tensor vec(const oracle::Vec& v) { return Tensor::vector(v); }

std::vector<Tensor> tensors(const std::vector<oracle::Vec>& vs) {
  std::vector<Tensor> out;
  for (const auto& v : vs) out.push_back(vec(v));
  return out;
}

TEST(Property, AngularDistanceRangeSymmetryAndOracle) {
  oracle::Gen gen(101);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(1, 16));
    auto x = gen.nonzero(d), y = gen.nonzero(d);
    const double g = angular_distance(vec(x), vec(y));
    ASSERT_GE(g, 0.0);
    ASSERT_LE(g, 2.0);
    ASSERT_EQ(g, angular_distance(vec(y), vec(x)));
    ASSERT_NEAR(g, oracle::angular(x, y), 1e-10);
  }
}

TEST(Property, AngularDistanceScaleInvariance) {
  oracle::Gen gen(102);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(1, 16));
    auto x = gen.nonzero(d), y = gen.nonzero(d);
    const double a = std::exp(gen.uniform(-5, 5)), b = std::exp(gen.uniform(-5, 5));
    auto xs = x, ys = y;
    for (double& v : xs) v *= a;
    for (double& v : ys) v *= b;
    ASSERT_NEAR(angular_distance(vec(xs), vec(ys)), angular_distance(vec(x), vec(y)), 1e-12);
  }
}

TEST(Property, CosNceRangeAndOracle) {
  oracle::Gen gen(103);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(2, 12));
    const int k = gen.integer(1, 15);
    auto zs = gen.nonzero(d), zt = gen.nonzero(d);
    std::vector<oracle::Vec> negs;
    for (int i = 0; i < k; ++i) negs.push_back(gen.nonzero(d));
    const double v = cos_nce(vec(zs), vec(zt), tensors(negs));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 4.0);
    ASSERT_NEAR(v, oracle::cos_nce(zs, zt, negs), 1e-10);
  }
}

TEST(Property, CosNceDecreasesAsNegativeMovesAway) {
  oracle::Gen gen(104);
  int checked = 0;
  while (checked < kCases) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(2, 10));
    const int k = gen.integer(1, 8);
    auto zs = gen.nonzero(d), zt = gen.nonzero(d);
    std::vector<oracle::Vec> negs;
    for (int i = 0; i < k; ++i) negs.push_back(gen.nonzero(d));
    const auto j = static_cast<std::size_t>(gen.integer(0, k - 1));
    oracle::Vec moved = gen.nonzero(d);
    if (oracle::angular(moved, zs) <= oracle::angular(negs[j], zs) + 1e-9) continue;
    const double before = cos_nce(vec(zs), vec(zt), tensors(negs));
    negs[j] = moved;
    const double after = cos_nce(vec(zs), vec(zt), tensors(negs));
    ASSERT_LT(after, before);
    ++checked;
  }
}

TEST(Property, SoftLossGibbsAndOracle) {
  oracle::Gen gen(105);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(2, 8));
    auto ys = gen.vec(n, -4, 4), yt = gen.vec(n, -4, 4);
    const double tau = gen.uniform(0.2, 4.0);
    const double v = soft_loss(vec(ys), vec(yt), tau);
    ASSERT_GE(v, -1e-15);
    ASSERT_NEAR(v, oracle::kl(yt, ys, tau), 1e-10);
  }
}

TEST(Property, HardLossBoundAndOracle) {
  oracle::Gen gen(106);
  for (int c = 0; c < kCases; ++c) {
    const int n = gen.integer(2, 8);
    auto ys = gen.vec(static_cast<std::size_t>(n), -4, 4);
    const double tau = gen.uniform(0.2, 4.0);
    const Tensor target = one_hot(gen.integer(0, n - 1), n);
    const double v = hard_loss(vec(ys), target, tau);
    ASSERT_NEAR(v, oracle::hard(ys, target.values(), tau), 1e-10);
    // Cross-entropy is at least the target's entropy.
    const auto t = oracle::softmax(target.values(), tau);
    double h = 0;
    for (double p : t) h -= p * std::log(p);
    ASSERT_GE(v, h - 1e-12);
  }
}

TEST(Property, HardLossMeetsEntropyAtTarget) {
  oracle::Gen gen(107);
  for (int c = 0; c < 100; ++c) {
    const int n = gen.integer(2, 6);
    const double tau = gen.uniform(0.5, 3.0);
    const Tensor target = one_hot(gen.integer(0, n - 1), n);
    const auto t = oracle::softmax(target.values(), tau);
    oracle::Vec logits;
    double h = 0;
    for (double p : t) {
      logits.push_back(std::log(p));
      h -= p * std::log(p);
    }
    ASSERT_NEAR(hard_loss(vec(logits), target, tau), h, 1e-12);
  }
}

TEST(Property, CombineIsLinear) {
  oracle::Gen gen(108);
  for (int c = 0; c < kCases; ++c) {
    LossWeights w{gen.uniform(0, 3), gen.uniform(0, 3), gen.uniform(0, 3), 1.1};
    const double a = gen.uniform(0, 5), b = gen.uniform(0, 5), h = gen.uniform(0, 5);
    ASSERT_NEAR(combine(a, b, h, w).l_total, w.alpha * a + w.beta * b + w.gamma * h, 1e-12);
  }
}

}  // namespace
}  // namespace lrc
