#pragma once

// Objective functions: registration energy, template-free shape loss,
// class-aware supervised contrastive loss, total network loss, classifier
// cross-entropy. All are built from tape primitives, so every loss is
// differentiable end to end.

#include <vector>

#include "core/deform.hpp"
#include "core/tape.hpp"

namespace corld {

struct LossWeights {
  double sigma = 0.01;        // noise variance root of the matching term
  double delta = 0.1;         // velocity smoothness weight
  double beta = 0.1;          // contrastive weight
  double gamma = 1.0;         // cross-entropy weight
  double tau = 0.75;          // contrastive temperature
  double weight_decay = 1e-4; // parameter regularity, applied by the optimizer
};

void validate_weights(const LossWeights& w);

// Which rows form the contrastive denominator pool A(i): every other sample
// in the batch (default), or only different-class samples.
enum class CandidateSet { AllOthers, DifferentClassOnly };

// (1/sigma^2) * mean squared difference of warp(S, exp(v)) vs T, plus the
// velocity smoothness term. SSD is normalized by pixel count so sigma and
// delta transfer across image sizes.
Tensor registration_energy(Tape& tape, const Tensor& source, const Tensor& target,
                           const VelocityField& v, const LossWeights& w, int steps = 6);

// Batch mean of per-sample matching energies against the per-row templates;
// templates row b must be the template for sample b.
Tensor shape_loss(Tape& tape, const Tensor& images, const Tensor& templates,
                  const Tensor& velocities, const LossWeights& w, int steps = 6);

// Supervised contrastive loss over projected feature rows. Rows are
// L2-normalized; anchors without a positive (or, in the different-class
// variant, without a candidate) are skipped; a batch with no usable anchor
// raises a degenerate-batch error.
Tensor csr_loss(Tape& tape, const Tensor& features, const std::vector<int>& labels, double tau,
                CandidateSet candidates = CandidateSet::AllOthers);

// shape_loss + beta * csr_loss; with beta == 0 this is exactly shape_loss.
Tensor corld_loss(Tape& tape, const Tensor& images, const Tensor& templates,
                  const Tensor& velocities, const Tensor& projected,
                  const std::vector<int>& labels, const LossWeights& w,
                  CandidateSet candidates = CandidateSet::AllOthers, int steps = 6);

// gamma * mean cross-entropy of logits against integer labels.
Tensor clf_loss(Tape& tape, const Tensor& logits, const std::vector<int>& labels, double gamma);

// True whether at least one sample in `labels` has a same-class partner.
bool batch_has_positive_pair(const std::vector<int>& labels);

}  // namespace corld
