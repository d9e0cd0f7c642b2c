#include "lrc/optimizer.hpp"

#include <cmath>

#include "lrc/error.hpp"

namespace lrc {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer.beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer.beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::Momentum:
      return "momentum";
    case OptimizerKind::Adam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("optimizer.kind must be one of sgd|momentum|adam, got '" + s + "'");
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<Parameter*> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (config_.kind != OptimizerKind::Sgd) {
    for (Parameter* p : params_) first_.emplace_back(p->value().shape(), 0.0);
  }
  if (config_.kind == OptimizerKind::Adam) {
    for (Parameter* p : params_) second_.emplace_back(p->value().shape(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

double Optimizer::grad_norm() const {
  double s = 0.0;
  for (const Parameter* p : params_)
    for (double g : p->grad().data()) s += g * g;
  return std::sqrt(s);
}

void Optimizer::step() {
  ++steps_;
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i]->value().data();
    auto g = params_[i]->grad().data();
    switch (config_.kind) {
      case OptimizerKind::Sgd:
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
        break;
      case OptimizerKind::Momentum: {
        auto v = first_[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) {
          v[k] = config_.momentum * v[k] + g[k];
          w[k] -= lr * v[k];
        }
        break;
      }
      case OptimizerKind::Adam: {
        auto m = first_[i].data();
        auto v = second_[i].data();
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
        for (std::size_t k = 0; k < w.size(); ++k) {
          m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
          v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
          w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
        }
        break;
      }
    }
  }
  zero_grad();
}

}  // namespace lrc
