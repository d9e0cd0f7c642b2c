#include <gtest/gtest.h>

#include <set>

#include "lrc/error.hpp"
#include "lrc/gradcheck.hpp"

namespace lrc {
namespace {

// x -> x^2 with a selectable backward, to exercise the harness itself.
Var custom_square(Var x, bool correct) {
  Tensor y = x.value();
  for (double& v : y.data()) v *= v;
  return x.tape->record(std::move(y), {x}, [x, correct](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(x)) {
      const Tensor& xv = x.value();
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g[i] * (correct ? 2.0 : 1.0) * xv[i];
    }
  });
}

TEST(GradCheck, AcceptsCorrectBackward) {
  auto r = check_gradient(
      "square", [](Tape&, std::span<const Var> in) { return sum(custom_square(in[0], true)); },
      {Tensor::vector({0.3, -1.2, 2.0})});
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.elements, 3u);
}

TEST(GradCheck, RejectsWrongBackward) {
  auto r = check_gradient(
      "square", [](Tape&, std::span<const Var> in) { return sum(custom_square(in[0], false)); },
      {Tensor::vector({0.3, -1.2, 2.0})});
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_input, 0u);
  EXPECT_NEAR(r.numeric, 2.0 * r.analytic, 1e-6);
}

TEST(GradCheck, NonDifferentiableInputsAreSkipped) {
  auto r = check_gradient(
      "mul", [](Tape&, std::span<const Var> in) { return sum(mul(in[0], in[1])); },
      {Tensor::vector({1, 2}), Tensor::vector({3, 4})}, {}, {true, false});
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.elements, 2u);
}

class Suites : public ::testing::TestWithParam<GradCheckScope> {};

TEST_P(Suites, PassOverSeeds) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const GradCheckResult& r : run_grad_suite(GetParam(), seed)) {
      EXPECT_TRUE(r.passed) << r.op << " seed " << seed << " rel " << r.max_rel_error << " index " << r.worst_index;
      EXPECT_GT(r.elements, 0u) << r.op;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(All, Suites,
                         ::testing::Values(GradCheckScope::Losses, GradCheckScope::Encoder, GradCheckScope::End2End),
                         [](const auto& info) { return to_string(info.param); });

TEST(GradCheck, SuitesCoverTheOperations) {
  std::set<std::string> names;
  for (auto scope : {GradCheckScope::Losses, GradCheckScope::Encoder, GradCheckScope::End2End})
    for (const auto& r : run_grad_suite(scope, 1)) names.insert(r.op);
  for (const char* op : {"matmul", "softmax", "layer_norm", "gelu", "embedding", "angular_distance", "cos_nce",
                         "soft_loss", "hard_loss", "mse_layer_loss", "encoder", "transformer_loss_projection",
                         "distill_total", "embedding_output"})
    EXPECT_EQ(names.count(op), 1u) << op;
}

TEST(GradCheck, CorruptionIsCaughtAndNamed) {
  GradCheckOptions opt;
  opt.corrupt = "cos_nce";
  int failures = 0;
  for (const auto& r : run_grad_suite(GradCheckScope::Losses, 1, opt)) {
    if (!r.passed) {
      ++failures;
      EXPECT_EQ(r.op, "cos_nce");
    }
  }
  EXPECT_EQ(failures, 1);
}

TEST(GradCheck, SameSeedSameResults) {
  auto a = run_grad_suite(GradCheckScope::End2End, 5), b = run_grad_suite(GradCheckScope::End2End, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].op, b[i].op);
    EXPECT_EQ(a[i].max_rel_error, b[i].max_rel_error);
    EXPECT_EQ(a[i].worst_index, b[i].worst_index);
  }
}

TEST(GradCheck, ScopeNames) {
  EXPECT_EQ(grad_check_scope_from_string("encoder"), GradCheckScope::Encoder);
  EXPECT_THROW(grad_check_scope_from_string("everything"), ConfigError);
}

}  // namespace
}  // namespace lrc
