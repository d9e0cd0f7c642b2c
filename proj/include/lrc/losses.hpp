#pragma once

#include <span>
#include <string>
#include <utility>

#include "lrc/autograd.hpp"

namespace lrc {

enum class Stage { Stage1 = 1, Stage2 = 2 };

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double tau = 1.1;

  // tau > 0, weights non-negative and not all zero.
  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double l_transformer = 0.0;  // sum over distilled layers
  double l_soft = 0.0;
  double l_hard = 0.0;
  double l_total = 0.0;
  Stage stage = Stage::Stage1;
};

// Angular distance 1 - cos(x, y) in [0, 2]. Operands may have any shape with
// equal element counts; they are compared as flattened vectors. Throws
// NumericError on a zero-norm operand.
Var angular_distance(Var x, Var y);

// Contrastive angular loss of a student vector against the teacher's vector
// for the same input (z_t) and the teacher's vectors for K other inputs:
//
//   sum_i (2 - (g(n_i, z_s) - g(z_t, z_s))) / (2K) + g(z_t, z_s)
//
// Teacher operands are constants; only z_s receives a gradient.
Var cos_nce(Var z_s, const Tensor& z_t, std::span<const Tensor> negatives);
// Same, with teacher operands passed by reference to avoid copying traces.
Var cos_nce(Var z_s, const Tensor& z_t, std::span<const Tensor* const> negatives);

// KL(softmax(y_t / tau) || softmax(y_s / tau)) summed over classes.
Var soft_loss(Var y_s, const Tensor& y_t, double tau);

// Cross-entropy of softmax(y_s) against softmax(one_hot / tau). With
// literal_target = false the raw one-hot is the target instead.
Var hard_loss(Var y_s, const Tensor& one_hot, double tau, bool literal_target = true);
Tensor one_hot(int label, int num_classes);

struct RegressionLosses {
  Var l_soft;  // (y_s - y_t)^2
  Var l_hard;  // (y_s - y)^2
};
RegressionLosses regression_losses(Var y_s, double y_t, double y);

// Mean of squared element differences; the Euclidean intermediate baseline.
Var mse_layer_loss(Var h_s_proj, const Tensor& h_t);

// l_total = alpha * l_transformer + beta * l_soft + gamma * l_hard.
LossReport combine(double l_transformer, double l_soft, double l_hard, const LossWeights& w,
                   Stage stage = Stage::Stage1);

// Value-only conveniences evaluated on a scratch tape.
double angular_distance(const Tensor& x, const Tensor& y);
double cos_nce(const Tensor& z_s, const Tensor& z_t, std::span<const Tensor> negatives);
double soft_loss(const Tensor& y_s, const Tensor& y_t, double tau);
double hard_loss(const Tensor& y_s, const Tensor& one_hot, double tau, bool literal_target = true);

}  // namespace lrc
