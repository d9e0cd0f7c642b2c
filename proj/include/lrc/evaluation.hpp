#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lrc/data.hpp"
#include "lrc/encoder.hpp"

namespace lrc {

using Metrics = std::map<std::string, double>;

// Classification: accuracy, f1 (class 1 as positive), macro_f1.
// Regression: mse, pearson. With a reference model, also agreement: the
// fraction of inputs where both predict the same class (regression: the
// Pearson correlation between the two models' outputs).
Metrics evaluate(const EncoderModel& model, std::span<const Sample> dataset, const EncoderModel* reference = nullptr);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double f1_score(std::span<const int> predicted, std::span<const int> truth, int positive = 1);
double macro_f1(std::span<const int> predicted, std::span<const int> truth, int num_classes);
double pearson(std::span<const double> x, std::span<const double> y);

int argmax(const Tensor& logits);

}  // namespace lrc
