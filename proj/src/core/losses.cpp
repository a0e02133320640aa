#include "core/losses.hpp"

#include <algorithm>
#include <cmath>

namespace corld {

namespace {

// lse[i] = log sum_{j in mask} exp(x[i,j]) as a [B,1] tensor. The rowwise
// shift is the masked maximum, held constant; its partial is identically
// zero, so treating it as a constant leaves the gradient exact. Excluded
// entries are zeroed before exp to keep every exponent <= 0.
Tensor masked_logsumexp_rows(Tape& tape, const Tensor& x, const std::vector<double>& mask) {
  const int B = x.dim(0), N = x.dim(1);
  Dtype dt = x.dtype();
  std::vector<double> rowmax(static_cast<size_t>(B), 0.0);
  for (int i = 0; i < B; ++i) {
    double m = -1e300;
    for (int j = 0; j < N; ++j)
      if (mask[static_cast<size_t>(i) * N + j] != 0.0)
        m = std::max(m, x.data()[static_cast<size_t>(i) * N + j]);
    if (m == -1e300) fail("losses", "logsumexp: empty candidate row");
    rowmax[static_cast<size_t>(i)] = m;
  }
  std::vector<double> shift(static_cast<size_t>(B) * N);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < N; ++j) shift[static_cast<size_t>(i) * N + j] = rowmax[static_cast<size_t>(i)];
  Tensor shift_c = Tensor::from({B, N}, shift, dt);
  Tensor mask_c = Tensor::from({B, N}, mask, dt);
  Tensor shifted = tape.mul(tape.sub(x, shift_c), mask_c);
  Tensor masked_exp = tape.mul(tape.apply(Op::Exp, {shifted}), mask_c);
  Tensor ones = Tensor::full({N, 1}, 1.0, dt);
  Tensor rowsum = tape.apply(Op::MatMul, {masked_exp, ones});
  Tensor maxcol = Tensor::from({B, 1}, rowmax, dt);
  return tape.add(tape.apply(Op::Log, {rowsum}), maxcol);
}

void check_labels(const std::vector<int>& labels, int batch, const char* who) {
  if (static_cast<int>(labels.size()) != batch)
    fail_invalid("losses", std::string(who) + ": " + std::to_string(labels.size()) +
                               " labels for batch of " + std::to_string(batch));
}

}  // namespace

void validate_weights(const LossWeights& w) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(w.sigma) || !finite(w.delta) || !finite(w.beta) || !finite(w.gamma) ||
      !finite(w.tau) || !finite(w.weight_decay))
    fail_invalid("losses", "non-finite loss weight");
  if (w.sigma <= 0.0) fail_invalid("losses", "sigma must be > 0");
  if (w.delta < 0.0 || w.beta < 0.0 || w.gamma < 0.0 || w.weight_decay < 0.0)
    fail_invalid("losses", "delta, beta, gamma and weight_decay must be >= 0");
  if (w.tau < 0.01) fail_invalid("losses", "tau must be >= 0.01");
}

Tensor registration_energy(Tape& tape, const Tensor& source, const Tensor& target,
                           const VelocityField& v, const LossWeights& w, int steps) {
  validate_weights(w);
  if (source.shape() != target.shape())
    fail_invalid("losses", "registration_energy: source " + shape_str(source.shape()) +
                               " vs target " + shape_str(target.shape()));
  DeformationField phi = exp_map(tape, v, steps);
  Tensor warped = warp(tape, source, phi);
  Tensor ssd = tape.mean(tape.square(tape.sub(warped, target)));
  return tape.add(tape.scalar_mul(ssd, 1.0 / (w.sigma * w.sigma)), spatial_grad_norm(tape, v));
}

Tensor shape_loss(Tape& tape, const Tensor& images, const Tensor& templates,
                  const Tensor& velocities, const LossWeights& w, int steps) {
  validate_weights(w);
  if (images.rank() != 4 || templates.rank() != 4 || velocities.rank() != 4)
    fail_invalid("losses", "shape_loss: expected batched [B,C,H,W] / [B,2,H,W] inputs");
  if (images.shape() != templates.shape())
    fail_invalid("losses", "shape_loss: images " + shape_str(images.shape()) +
                               " vs templates " + shape_str(templates.shape()));
  if (velocities.dim(0) != images.dim(0))
    fail_invalid("losses", "shape_loss: " + std::to_string(velocities.dim(0)) +
                               " velocity rows for " + std::to_string(images.dim(0)) + " images");
  Grid2D grid{images.dim(2), images.dim(3)};
  Tensor u = exp_map_batched(tape, velocities, grid, steps);
  Tensor warped = warp_batched(tape, templates, u, grid);
  Tensor ssd = tape.mean(tape.square(tape.sub(images, warped)));
  Tensor reg = spatial_grad_norm_batched(tape, velocities, grid);
  return tape.add(tape.scalar_mul(ssd, 1.0 / (w.sigma * w.sigma)),
                  tape.scalar_mul(reg, w.delta));
}

bool batch_has_positive_pair(const std::vector<int>& labels) {
  for (size_t i = 0; i < labels.size(); ++i)
    for (size_t j = i + 1; j < labels.size(); ++j)
      if (labels[i] == labels[j]) return true;
  return false;
}

Tensor csr_loss(Tape& tape, const Tensor& features, const std::vector<int>& labels, double tau,
                CandidateSet candidates) {
  if (features.rank() != 2) fail_invalid("losses", "csr_loss: features must be [B,D]");
  const int B = features.dim(0);
  check_labels(labels, B, "csr_loss");
  if (B < 2) fail_invalid("losses", "csr_loss: batch size must be >= 2");
  if (tau < 0.01) fail_invalid("losses", "csr_loss: tau must be >= 0.01");

  Attrs norm_attrs;
  norm_attrs.axis = 1;
  norm_attrs.eps = 1e-12;
  Tensor zn = tape.apply(Op::L2Normalize, {features}, norm_attrs);
  Attrs mm;
  mm.trans_b = true;
  Tensor sim = tape.apply(Op::MatMul, {zn, zn}, mm);
  Tensor simt = tape.scalar_mul(sim, 1.0 / tau);

  std::vector<double> cand_mask(static_cast<size_t>(B) * B, 0.0);
  std::vector<double> pos_weight(static_cast<size_t>(B) * B, 0.0);
  std::vector<double> anchor_col(static_cast<size_t>(B), 0.0);
  int anchors = 0;
  for (int i = 0; i < B; ++i) {
    int npos = 0, ncand = 0;
    for (int j = 0; j < B; ++j) {
      if (j == i) continue;
      bool same = labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)];
      bool cand = candidates == CandidateSet::AllOthers ? true : !same;
      if (cand) {
        cand_mask[static_cast<size_t>(i) * B + j] = 1.0;
        ++ncand;
      }
      if (same) ++npos;
    }
    if (npos == 0 || ncand == 0) continue;
    anchor_col[static_cast<size_t>(i)] = 1.0;
    ++anchors;
    for (int j = 0; j < B; ++j)
      if (j != i && labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)])
        pos_weight[static_cast<size_t>(i) * B + j] = 1.0 / npos;
  }
  if (anchors == 0) fail("losses", "csr_loss: degenerate batch, no anchor has a positive");
  for (int i = 0; i < B; ++i)
    if (anchor_col[static_cast<size_t>(i)] == 0.0)
      for (int j = 0; j < B; ++j) cand_mask[static_cast<size_t>(i) * B + j] = 0.0;

  // Skipped anchors keep a self-candidate so their logsumexp row stays
  // defined; the zero anchor weight drops them from the loss.
  for (int i = 0; i < B; ++i)
    if (anchor_col[static_cast<size_t>(i)] == 0.0)
      cand_mask[static_cast<size_t>(i) * B + i] = 1.0;

  Dtype dt = features.dtype();
  Tensor lse = masked_logsumexp_rows(tape, simt, cand_mask);
  Tensor anchor_c = Tensor::from({B, 1}, anchor_col, dt);
  Tensor pos_c = Tensor::from({B, B}, pos_weight, dt);
  Tensor lse_term = tape.sum(tape.mul(lse, anchor_c));
  Tensor pos_term = tape.sum(tape.mul(pos_c, simt));
  Tensor loss = tape.scalar_mul(tape.sub(lse_term, pos_term), 1.0 / anchors);
  if (candidates == CandidateSet::AllOthers && loss.item() < -1e-9)
    fail("losses", "csr_loss: negative loss " + std::to_string(loss.item()) +
                       " in all-others mode");
  return loss;
}

Tensor corld_loss(Tape& tape, const Tensor& images, const Tensor& templates,
                  const Tensor& velocities, const Tensor& projected,
                  const std::vector<int>& labels, const LossWeights& w,
                  CandidateSet candidates, int steps) {
  Tensor shape = shape_loss(tape, images, templates, velocities, w, steps);
  if (w.beta == 0.0) return shape;
  Tensor csr = csr_loss(tape, projected, labels, w.tau, candidates);
  return tape.add(shape, tape.scalar_mul(csr, w.beta));
}

Tensor clf_loss(Tape& tape, const Tensor& logits, const std::vector<int>& labels, double gamma) {
  if (logits.rank() != 2) fail_invalid("losses", "clf_loss: logits must be [B,C]");
  const int B = logits.dim(0), C = logits.dim(1);
  if (C < 2) fail_invalid("losses", "clf_loss: needs at least 2 classes");
  check_labels(labels, B, "clf_loss");
  std::vector<double> onehot(static_cast<size_t>(B) * C, 0.0);
  for (int i = 0; i < B; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= C)
      fail_invalid("losses", "clf_loss: label " + std::to_string(y) + " out of range [0, " +
                                 std::to_string(C) + ")");
    onehot[static_cast<size_t>(i) * C + y] = 1.0;
  }
  Dtype dt = logits.dtype();
  std::vector<double> all(static_cast<size_t>(B) * C, 1.0);
  Tensor lse = masked_logsumexp_rows(tape, logits, all);
  Tensor true_term = tape.sum(tape.mul(logits, Tensor::from({B, C}, onehot, dt)));
  Tensor ce = tape.sub(tape.sum(lse), true_term);
  return tape.scalar_mul(ce, gamma / static_cast<double>(B));
}

}  // namespace corld
