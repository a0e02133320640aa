#pragma once

// Experiment harnesses: the 2x2 ablation grid over template input and the
// contrastive objective, the temperature and template-mode sweeps, and the
// robustness curves under universal input perturbations. Results land as
// versioned CSV files plus a static SVG chart per sweep.

#include <string>
#include <vector>

#include "core/metrics.hpp"
#include "core/training.hpp"

namespace corld {

// Harness parallelism cap from CORLD_THREADS (default 1). Grid arms are
// independent; rows are merged in grid order regardless of completion.
int harness_threads();

struct ArmResult {
  std::string name;
  MetricsReport test;
  double rep_time_per_epoch_s = 0.0;  // representation phase only
  double best_val = 0.0;
};

// Phase-1 training followed by a 3-layer fully connected probe on the
// flattened latent features; reports test metrics of the probe.
ArmResult train_and_probe(const Dataset& data, const TrainConfig& cfg,
                          const std::string& work_dir, const std::string& name);

// Latent features [N, latent_dim] for every sample, batched forward.
Tensor extract_latent_features(const CorldNet& net, const Dataset& data, const TrainConfig& cfg);

struct ProbeResult {
  Mlp3 probe;
  double best_val_acc = 0.0;
};
ProbeResult train_probe(const Tensor& features, const Dataset& data, const TrainConfig& cfg);
Tensor probe_logits(const Mlp3& probe, const Tensor& features, const std::vector<int>& rows);

// Table-style 2x2 grid: rows ordered (template yes/csr no), (yes/yes),
// (no/no), (no/yes). Writes ablation.csv.
std::vector<ArmResult> run_ablation(const Dataset& data, const TrainConfig& base,
                                    const std::string& out_dir);

inline const std::vector<double>& tau_sweep_grid() {
  static const std::vector<double> g = {0.1, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0};
  return g;
}
inline const std::vector<double>& robustness_scale_grid() {
  static const std::vector<double> g = {0.0, 0.01, 0.02, 0.03, 0.05};
  return g;
}

std::vector<ArmResult> run_sweep_tau(const Dataset& data, const TrainConfig& base,
                                     const std::string& out_dir);
std::vector<ArmResult> run_sweep_template(const Dataset& data, const TrainConfig& base,
                                          const std::string& out_dir);

struct RobustnessRow {
  std::string arm;
  double scale = 0.0;
  MetricsReport metrics;
};

struct RobustnessModels {
  BoostedClassifier corld_clf, image_clf;
  CorldNet net;
};

// Trains the fused model and the image-only baseline, then sweeps the
// universal-noise scale over the test split for both arms.
std::vector<RobustnessRow> run_sweep_robustness(const Dataset& data, const TrainConfig& base,
                                                const std::string& out_dir,
                                                RobustnessModels* models_out = nullptr);

// Noise-scale curve for an already-trained arm.
std::vector<RobustnessRow> robustness_curve(const BoostedClassifier& clf, const CorldNet* net,
                                            const Dataset& data, bool image_only,
                                            const std::string& arm_name);

// Test metrics of a loaded classifier checkpoint; writes metrics.csv and
// confusion.csv.
MetricsReport eval_classifier_to_dir(const LoadedClassifier& model, const Dataset& data,
                                     const std::string& out_dir);

}  // namespace corld
