#pragma once

// Classification metrics: accuracy, macro one-vs-rest precision / F1 /
// sensitivity / specificity, macro AUC from average ranks of softmax scores,
// and the confusion matrix.

#include <vector>

#include "core/tensor.hpp"

namespace corld {

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double auc = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
  int n = 0;
};

MetricsReport compute_metrics(const Tensor& logits, const std::vector<int>& labels);

}  // namespace corld
