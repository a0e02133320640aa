#pragma once

// Two-step optimization: phase 1 trains the representation network on the
// total loss; phase 2 trains the fused classifier with the shape branch
// frozen (unless finetuning is requested). Adam with cosine-annealed
// learning rate throughout; early stopping on a 5-epoch moving-average loss
// delta; the best-validation checkpoint is kept and restored.

#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/networks.hpp"
#include "core/optim.hpp"

namespace corld {

struct TrainConfig {
  double eta0 = 1e-3;
  int epochs_corld = 30;
  int epochs_clf = 40;
  double eps_corld = 1e-4;
  double eps_clf = 1e-4;
  int batch_size = 16;
  uint64_t seed = 7;
  LossWeights weights;
  CandidateSet candidate_set = CandidateSet::AllOthers;
  FuseSource fuse_source = FuseSource::Projected;
  bool finetune_shape = false;
  TemplateMode template_mode = TemplateMode::Multi;
  bool contrastive_on = true;
  bool template_in_input = false;
  Dtype float_mode = Dtype::F32;
  int exp_steps = 6;
};

void validate_config(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double shape = 0.0, csr = 0.0, total = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double best_val = 0.0;
  int best_epoch = 0;
  bool stopped_early = false;
  std::string checkpoint_path;
  double mean_epoch_seconds = 0.0;
};

// Report CSV: epoch, lr, shape_loss, csr_loss, total, val_metric, seconds.
// Wall-clock seconds are the only non-reproducible column.
void write_report_csv(const std::string& path, const TrainReport& report);

// Moving-average early-stop rule shared by both phases: stop after epoch e
// (1-based) once |mean(L[e-4..e]) - mean(L[e-5..e-1])| < eps; needs six
// epochs of history, so it can never fire before epoch 5 has completed.
bool early_stop_window(const std::vector<double>& losses, double eps);

// Encoder input for one batch: the images, or images with the global mean
// template stacked as a second channel when the net consumes a template.
Tensor assemble_net_input(const Dataset& data, const std::vector<int>& rows, bool with_template,
                          Dtype dt);
Tensor gather_images(const Dataset& data, const std::vector<int>& rows, Dtype dt);
Tensor gather_templates(const Dataset& data, const std::vector<int>& rows, TemplateMode mode,
                        Dtype dt);

// Phase 1. Saves the best-validation checkpoint to <out_dir>/corld.ckpt and
// restores those weights into `net` before returning.
TrainReport train_corld(CorldNet& net, const Dataset& data, const TrainConfig& cfg,
                        const std::string& out_dir);

// Phase 2. `net` may be null only for the image-only arm. Saves
// <out_dir>/clf.ckpt with the frozen shape weights embedded so the model
// evaluates standalone.
TrainReport train_classifier(BoostedClassifier& clf, CorldNet* net, const Dataset& data,
                             const TrainConfig& cfg, const std::string& out_dir, bool image_only);

// Logits for the given rows under the trained classifier, batched forward.
Tensor classifier_logits(const BoostedClassifier& clf, const CorldNet* net, const Dataset& data,
                         const std::vector<int>& rows, bool image_only, const Tensor* images_override = nullptr);

CorldNet load_corld_checkpoint(const std::string& path, TrainConfig* flags_out = nullptr);

struct LoadedClassifier {
  BoostedClassifier clf;
  CorldNet net;
  bool image_only = false;
  bool has_net = false;
};
LoadedClassifier load_classifier_checkpoint(const std::string& path);

}  // namespace corld
