#pragma once

// Synthetic deformable-shape datasets: procedural class templates warped by
// guarded smooth random velocity fields plus pixel noise, stratified splits,
// serialization with per-file checksums, and the universal perturbation used
// by the robustness study.

#include <string>
#include <vector>

#include "core/losses.hpp"
#include "core/networks.hpp"

namespace corld {

enum class Split { Train, Val, Test };

const char* split_name(Split s);

enum class TemplateMode { Multi, Single };

struct GenSpec {
  int classes = 4;
  int per_class = 50;
  int size = 32;
  uint64_t seed = 7;
  double deform_amplitude = 3.0;
  double noise_std = 0.05;
};

struct Dataset {
  Tensor images;         // [N,1,H,W] in [0,1], f32
  std::vector<int> labels;
  Tensor templates;      // [C,1,H,W]
  Tensor mean_template;  // [1,1,H,W], pixel-wise mean of the class templates
  std::vector<Split> split;
  int num_classes = 0;
  Tensor gt_velocities;  // [N,2,H,W] when generated; kept for diagnostics only
  GenSpec spec;
  bool generated = false;

  int count() const { return static_cast<int>(labels.size()); }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }
  std::vector<int> indices_of(Split s) const;
};

// The four procedural class shapes, smoothed to grayscale: disk, ring,
// cross, and a lobed blob close to the disk in scale.
Tensor class_template(int class_id, int size, Dtype dt = Dtype::F64);

Dataset gen_synthetic(const GenSpec& spec);

void save_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Template image for one sample under the given mode, as a [1,H,W] slice
// copied into `dst` at batch row `row`.
void copy_template_row(const Dataset& d, TemplateMode mode, int label, Tensor& dst, int row);

enum class NoiseKind { FgsmUniversal, FixedRandom };

// A single perturbation pattern [1,1,H,W] with max-abs exactly `scale`,
// added to every test image. The default construction averages the sign of
// the classifier-loss input gradient over the validation split; the random
// kind is a model-agnostic control.
Tensor make_universal_noise(const BoostedClassifier& clf, const CorldNet* net,
                            const Dataset& data, double scale,
                            NoiseKind kind = NoiseKind::FgsmUniversal, bool image_only = false,
                            uint64_t seed = 0);

// images + pattern, re-clamped to [0,1]; pattern broadcasts over the batch.
Tensor apply_universal_noise(const Tensor& images, const Tensor& pattern);

}  // namespace corld
