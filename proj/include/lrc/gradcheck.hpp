#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrc/autograd.hpp"

namespace lrc {

struct GradCheckOptions {
  double step = 1e-6;           // central-difference step h
  double rel_tolerance = 1e-4;  // per-element relative error bound
  double abs_tolerance = 1e-7;  // elements this close count as matching
  // Test hook: adds a fixed offset to the analytic gradient of the check with
  // this name, to prove the harness catches a broken backward pass.
  std::string corrupt;
};

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;  // over elements not within abs_tolerance
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at the worst element
  double numeric = 0.0;
  std::size_t elements = 0;
  bool passed = true;
};

// Builds a scalar loss from Vars bound to `inputs` on a fresh tape.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares backward() against central finite differences for every element
// of every input flagged in `differentiable` (all inputs when empty).
GradCheckResult check_gradient(const std::string& op, const LossBuilder& build, std::vector<Tensor> inputs,
                               const GradCheckOptions& options = {}, std::vector<bool> differentiable = {});

// Same, with Parameters as the differentiated leaves. The builder reads them
// through tape.param(); values are perturbed in place and restored.
using ParamLossBuilder = std::function<Var(Tape&)>;
GradCheckResult check_parameter_gradient(const std::string& op, const ParamLossBuilder& build,
                                         std::span<Parameter* const> params, const GradCheckOptions& options = {});

enum class GradCheckScope { Losses, Encoder, End2End };
std::string to_string(GradCheckScope s);
GradCheckScope grad_check_scope_from_string(const std::string& s);

// The standard verification suites: every primitive op and loss (Losses),
// every encoder parameter (Encoder), and the distillation objective including
// the projection matrices (End2End). Inputs are drawn from `seed`.
std::vector<GradCheckResult> run_grad_suite(GradCheckScope scope, std::uint64_t seed,
                                            const GradCheckOptions& options = {});

}  // namespace lrc
