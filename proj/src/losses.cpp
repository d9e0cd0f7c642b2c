#include "lrc/losses.hpp"

#include <cmath>
#include <vector>

#include "lrc/error.hpp"

namespace lrc {

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ParameterError("loss weights must be non-negative");
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) throw ParameterError("loss weights are all zero");
}

namespace {

// g(x, y) with the norm of y supplied, so cos_nce computes ||z_s|| once.
Var angular_distance_with_norm(Var x, Var y, Var y_norm) {
  const Tensor& xv = x.value();
  if (xv.size() != y.value().size()) {
    throw DimensionError("angular_distance: length mismatch " + shape_string(xv.shape()) + " vs " +
                         shape_string(y.value().shape()));
  }
  Var x_norm = l2_norm(x);
  if (x_norm.item() == 0.0 || y_norm.item() == 0.0) {
    throw NumericError("angular_distance: zero-norm input");
  }
  Var cosine = div(dot(x, y), mul(x_norm, y_norm));
  return add_scalar(scale(cosine, -1.0), 1.0);
}

void check_lengths(const char* op, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Var angular_distance(Var x, Var y) {
  if (x.value().size() == 0) throw DimensionError("angular_distance: empty input");
  return angular_distance_with_norm(x, y, l2_norm(y));
}

Var cos_nce(Var z_s, const Tensor& z_t, std::span<const Tensor* const> negatives) {
  if (negatives.empty()) throw ParameterError("cos_nce: at least one negative is required");
  check_lengths("cos_nce", z_s.value(), z_t);
  for (const Tensor* n : negatives) check_lengths("cos_nce", z_s.value(), *n);
  Tape& tape = *z_s.tape;
  const double k = static_cast<double>(negatives.size());

  Var zs_norm = l2_norm(z_s);
  Var positive = angular_distance_with_norm(tape.constant(z_t), z_s, zs_norm);
  Var negative_sum;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    Var gi = angular_distance_with_norm(tape.constant(*negatives[i]), z_s, zs_norm);
    negative_sum = i == 0 ? gi : add(negative_sum, gi);
  }
  // sum_i (2 - g_i + g_pos) = 2K - sum_i g_i + K g_pos
  Var bracket = add(add_scalar(scale(negative_sum, -1.0), 2.0 * k), scale(positive, k));
  return add(scale(bracket, 1.0 / (2.0 * k)), positive);
}

Var cos_nce(Var z_s, const Tensor& z_t, std::span<const Tensor> negatives) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(negatives.size());
  for (const Tensor& n : negatives) ptrs.push_back(&n);
  return cos_nce(z_s, z_t, std::span<const Tensor* const>(ptrs));
}

Var soft_loss(Var y_s, const Tensor& y_t, double tau) {
  if (!(tau > 0.0)) throw ParameterError("soft_loss: tau must be positive");
  check_lengths("soft_loss", y_s.value(), y_t);
  if (y_t.size() < 2) throw DimensionError("soft_loss: at least two classes are required");
  const Tensor p_t = softmax_values(y_t, tau);
  double neg_entropy = 0.0;
  for (double p : p_t.data())
    if (p > 0.0) neg_entropy += p * std::log(p);
  Tape& tape = *y_s.tape;
  Var cross = dot(tape.constant(p_t.reshaped(y_s.shape())), log_softmax(y_s, tau));
  return add_scalar(scale(cross, -1.0), neg_entropy);
}

Tensor one_hot(int label, int num_classes) {
  if (num_classes < 1 || label < 0 || label >= num_classes) {
    throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
  }
  Tensor t(Shape{static_cast<std::size_t>(num_classes)}, 0.0);
  t[static_cast<std::size_t>(label)] = 1.0;
  return t;
}

Var hard_loss(Var y_s, const Tensor& target, double tau, bool literal_target) {
  if (!(tau > 0.0)) throw ParameterError("hard_loss: tau must be positive");
  check_lengths("hard_loss", y_s.value(), target);
  std::size_t ones = 0;
  for (double v : target.data()) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw InputError("hard_loss: label vector is not one-hot");
    }
  }
  if (ones != 1) throw InputError("hard_loss: label vector is not one-hot");
  const Tensor smoothed = literal_target ? softmax_values(target, tau) : target;
  Tape& tape = *y_s.tape;
  return scale(dot(tape.constant(smoothed.reshaped(y_s.shape())), log_softmax(y_s)), -1.0);
}

RegressionLosses regression_losses(Var y_s, double y_t, double y) {
  if (y_s.value().size() != 1) throw DimensionError("regression_losses: prediction must be a single value");
  Var pred = reshape(y_s, Shape{});
  return {square(add_scalar(pred, -y_t)), square(add_scalar(pred, -y))};
}

Var mse_layer_loss(Var h_s_proj, const Tensor& h_t) {
  if (h_s_proj.shape() != h_t.shape()) {
    throw DimensionError("mse_layer_loss: shape mismatch " + shape_string(h_s_proj.shape()) + " vs " +
                         shape_string(h_t.shape()));
  }
  return mean(square(sub(h_s_proj, h_s_proj.tape->constant(h_t))));
}

LossReport combine(double l_transformer, double l_soft, double l_hard, const LossWeights& w, Stage stage) {
  auto finite = [](const char* name, double v) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term ") + name);
  };
  finite("l_transformer", l_transformer);
  finite("l_soft", l_soft);
  finite("l_hard", l_hard);
  LossReport r;
  r.l_transformer = l_transformer;
  r.l_soft = l_soft;
  r.l_hard = l_hard;
  r.l_total = w.alpha * l_transformer + w.beta * l_soft + w.gamma * l_hard;
  r.stage = stage;
  return r;
}

double angular_distance(const Tensor& x, const Tensor& y) {
  Tape tape(GradMode::Disabled);
  return angular_distance(tape.constant(x), tape.constant(y)).item();
}

double cos_nce(const Tensor& z_s, const Tensor& z_t, std::span<const Tensor> negatives) {
  Tape tape(GradMode::Disabled);
  return cos_nce(tape.constant(z_s), z_t, negatives).item();
}

double soft_loss(const Tensor& y_s, const Tensor& y_t, double tau) {
  Tape tape(GradMode::Disabled);
  return soft_loss(tape.constant(y_s), y_t, tau).item();
}

double hard_loss(const Tensor& y_s, const Tensor& target, double tau, bool literal_target) {
  Tape tape(GradMode::Disabled);
  return hard_loss(tape.constant(y_s), target, tau, literal_target).item();
}

}  // namespace lrc
