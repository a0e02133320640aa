#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace corld {

namespace {

// Mann-Whitney AUC with average ranks for ties; equals the trapezoidal ROC
// area over the score thresholds.
double rank_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
  int64_t n_pos = 0, n_neg = 0;
  for (char p : positive) (p ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return -1.0;
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (positive[order[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

MetricsReport compute_metrics(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) fail_invalid("eval", "compute_metrics: logits must be [N,C]");
  const int N = logits.dim(0), C = logits.dim(1);
  if (N < 1) fail_invalid("eval", "compute_metrics: empty batch");
  if (static_cast<int>(labels.size()) != N)
    fail_invalid("eval", "compute_metrics: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C) fail_invalid("eval", "compute_metrics: label out of range");

  MetricsReport r;
  r.n = N;
  r.confusion.assign(static_cast<size_t>(C), std::vector<int64_t>(static_cast<size_t>(C), 0));

  // row-stabilized softmax scores for AUC
  std::vector<double> scores(static_cast<size_t>(N) * C);
  for (int i = 0; i < N; ++i) {
    double m = logits.data()[static_cast<size_t>(i) * C];
    for (int c = 1; c < C; ++c)
      m = std::max(m, logits.data()[static_cast<size_t>(i) * C + c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      double e = std::exp(logits.data()[static_cast<size_t>(i) * C + c] - m);
      scores[static_cast<size_t>(i) * C + c] = e;
      z += e;
    }
    for (int c = 0; c < C; ++c) scores[static_cast<size_t>(i) * C + c] /= z;
  }

  int64_t hits = 0;
  for (int i = 0; i < N; ++i) {
    int pred = 0;
    double best = logits.data()[static_cast<size_t>(i) * C];
    for (int c = 1; c < C; ++c) {
      double v = logits.data()[static_cast<size_t>(i) * C + c];
      if (v > best) {
        best = v;
        pred = c;
      }
    }
    r.confusion[static_cast<size_t>(labels[static_cast<size_t>(i)])][static_cast<size_t>(pred)]++;
    if (pred == labels[static_cast<size_t>(i)]) ++hits;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(N);

  double sum_prec = 0.0, sum_f1 = 0.0, sum_sens = 0.0, sum_spec = 0.0, sum_auc = 0.0;
  int present = 0, auc_classes = 0;
  bool warned = false;
  for (int c = 0; c < C; ++c) {
    int64_t tp = r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    int64_t fn = 0, fp = 0;
    for (int k = 0; k < C; ++k) {
      if (k == c) continue;
      fn += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(k)];
      fp += r.confusion[static_cast<size_t>(k)][static_cast<size_t>(c)];
    }
    int64_t tn = N - tp - fn - fp;
    if (tp + fn == 0) {
      if (!warned) {
        std::cerr << "eval: warning: class " << c
                  << " has no samples; excluded from macro averages\n";
        warned = true;
      }
      continue;
    }
    ++present;
    double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
    double spec = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
    double f1 = prec + sens > 0.0 ? 2.0 * prec * sens / (prec + sens) : 0.0;
    sum_prec += prec;
    sum_sens += sens;
    sum_spec += spec;
    sum_f1 += f1;

    std::vector<double> class_scores(static_cast<size_t>(N));
    std::vector<char> positive(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
      class_scores[static_cast<size_t>(i)] = scores[static_cast<size_t>(i) * C + c];
      positive[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] == c;
    }
    double auc = rank_auc(class_scores, positive);
    if (auc >= 0.0) {
      sum_auc += auc;
      ++auc_classes;
    }
  }
  if (present == 0) fail("eval", "compute_metrics: no class has samples");
  r.precision = sum_prec / present;
  r.sensitivity = sum_sens / present;
  r.specificity = sum_spec / present;
  r.f1 = sum_f1 / present;
  r.auc = auc_classes > 0 ? sum_auc / auc_classes : 0.0;
  return r;
}

}  // namespace corld
