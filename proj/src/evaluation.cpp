#include "lrc/evaluation.hpp"

#include <cmath>

#include "lrc/error.hpp"

namespace lrc {

int argmax(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw InputError("accuracy: empty or mismatched inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double f1_score(std::span<const int> predicted, std::span<const int> truth, int positive) {
  if (predicted.size() != truth.size() || truth.empty()) throw InputError("f1: empty or mismatched inputs");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == positive, t = truth[i] == positive;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

double macro_f1(std::span<const int> predicted, std::span<const int> truth, int num_classes) {
  double s = 0.0;
  for (int c = 0; c < num_classes; ++c) s += f1_score(predicted, truth, c);
  return s / num_classes;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("pearson: need at least two paired values");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

Metrics evaluate(const EncoderModel& model, std::span<const Sample> dataset, const EncoderModel* reference) {
  if (dataset.empty()) throw InputError("evaluate: empty dataset");
  Metrics m;
  m["count"] = static_cast<double>(dataset.size());
  if (model.config().regression()) {
    std::vector<double> pred, truth, ref;
    double se = 0.0;
    for (const Sample& s : dataset) {
      pred.push_back(predict_logits(model, s.tokens)[0]);
      truth.push_back(s.target);
      se += (pred.back() - s.target) * (pred.back() - s.target);
      if (reference) ref.push_back(predict_logits(*reference, s.tokens)[0]);
    }
    m["mse"] = se / static_cast<double>(dataset.size());
    m["pearson"] = pearson(pred, truth);
    if (reference) m["agreement"] = pearson(pred, ref);
    return m;
  }
  std::vector<int> pred, truth, ref;
  for (const Sample& s : dataset) {
    pred.push_back(argmax(predict_logits(model, s.tokens)));
    truth.push_back(s.label);
    if (reference) ref.push_back(argmax(predict_logits(*reference, s.tokens)));
  }
  m["accuracy"] = accuracy(pred, truth);
  m["f1"] = f1_score(pred, truth, 1);
  m["macro_f1"] = macro_f1(pred, truth, model.config().num_classes);
  if (reference) m["agreement"] = accuracy(pred, ref);
  return m;
}

}  // namespace lrc
