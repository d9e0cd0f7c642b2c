#pragma once

#include <span>
#include <string>
#include <vector>

#include "lrc/autograd.hpp"

namespace lrc {

enum class OptimizerKind { Sgd, Momentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

// First-order update over a fixed parameter list. State is keyed by list
// position, so the list order must not change between steps.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Parameter*> params);

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();
  // L2 norm over all accumulated gradients.
  double grad_norm() const;

  const std::vector<Parameter*>& params() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  long steps_ = 0;
};

}  // namespace lrc
