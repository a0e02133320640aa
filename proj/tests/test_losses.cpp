#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>

#include "core/gradcheck.hpp"
#include "core/losses.hpp"
#include "core/optim.hpp"
#include "doctest.h"

using namespace corld;

namespace {

// Independent double-loop evaluation of the contrastive loss, used as the
// oracle for the vectorized tape construction.
double brute_force_csr(const Tensor& features, const std::vector<int>& labels, double tau,
                       CandidateSet cs) {
  const int B = features.dim(0), D = features.dim(1);
  std::vector<std::vector<double>> z(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    double n = 0.0;
    for (int d = 0; d < D; ++d) {
      double v = features.data()[static_cast<size_t>(i) * D + d];
      n += v * v;
    }
    n = std::max(std::sqrt(n), 1e-12);
    for (int d = 0; d < D; ++d)
      z[static_cast<size_t>(i)].push_back(features.data()[static_cast<size_t>(i) * D + d] / n);
  }
  auto sim = [&](int i, int j) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += z[static_cast<size_t>(i)][static_cast<size_t>(d)] *
                                     z[static_cast<size_t>(j)][static_cast<size_t>(d)];
    return s;
  };
  double total = 0.0;
  int anchors = 0;
  for (int i = 0; i < B; ++i) {
    std::vector<int> pos, cand;
    for (int j = 0; j < B; ++j) {
      if (j == i) continue;
      bool same = labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)];
      if (same) pos.push_back(j);
      if (cs == CandidateSet::AllOthers ? true : !same) cand.push_back(j);
    }
    if (pos.empty() || cand.empty()) continue;
    ++anchors;
    double denom = 0.0;
    for (int a : cand) denom += std::exp(sim(i, a) / tau);
    double li = 0.0;
    for (int p : pos) li += -std::log(std::exp(sim(i, p) / tau) / denom);
    total += li / static_cast<double>(pos.size());
  }
  REQUIRE(anchors > 0);
  return total / static_cast<double>(anchors);
}

Tensor seeded_features(int b, int d, uint64_t seed) {
  Rng rng(seed);
  Tensor f({b, d}, Dtype::F64);
  for (double& v : f.data()) v = rng.normal();
  return f;
}

Tensor soft_disk(int size, double cy, double cx, double radius) {
  Tensor img({1, size, size}, Dtype::F64);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double r = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx));
      img.data()[static_cast<size_t>(y * size + x)] = 1.0 / (1.0 + std::exp((r - radius) / 0.8));
    }
  return img;
}

}  // namespace

TEST_CASE("registration energy closed forms") {
  Grid2D g{8, 8};
  LossWeights w;
  w.sigma = 0.01;
  Tensor img(std::vector<int>{1, 8, 8}, Dtype::F64);
  Rng rng(2);
  for (double& v : img.data()) v = rng.uniform01();
  VelocityField zero{g, Tensor({2, 8, 8}, Dtype::F64)};

  SUBCASE("perfect match at zero field") {
    Tape tape;
    CHECK(registration_energy(tape, img, img, zero, w).item() == 0.0);
  }
  SUBCASE("constant offset: (1/sigma^2) * offset^2") {
    Tensor target = img.clone();
    for (double& v : target.data()) v += 0.1;
    Tape tape;
    // mean squared difference 0.01 scaled by 1e4
    CHECK(registration_energy(tape, img, target, zero, w).item() ==
          doctest::Approx(100.0).epsilon(1e-9));
  }
}

TEST_CASE("direct velocity optimization recovers a translated disk") {
  // optimization oracle: 200 Adam steps must shed at least 80% of the
  // zero-field energy
  Grid2D g{16, 16};
  LossWeights w;
  w.sigma = 0.01;
  Tensor source = soft_disk(16, 7.5, 7.5, 4.0);
  Tensor target = soft_disk(16, 9.5, 7.5, 4.0);  // translated by 2 px

  ParamSet params;
  Tensor& v = params.add("v", {2, 16, 16}, Dtype::F64);
  double e0;
  {
    Tape tape;
    e0 = registration_energy(tape, source, target, {g, v.clone()}, w).item();
  }
  Adam opt;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    Tensor energy = registration_energy(tape, source, target, {g, v}, w);
    tape.backward(energy);
    opt.step(params, 0.05);
  }
  double e1;
  {
    Tape tape;
    e1 = registration_energy(tape, source, target, {g, v.clone()}, w).item();
  }
  CHECK(e1 <= 0.2 * e0);
}

TEST_CASE("shape loss closed forms") {
  LossWeights w;
  w.sigma = 0.01;
  w.delta = 0.1;
  SUBCASE("image equals template at zero velocity") {
    Tensor img(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
    Rng rng(5);
    for (double& v : img.data()) v = rng.uniform01();
    Tensor vel(std::vector<int>{2, 2, 8, 8}, Dtype::F64);
    Tape tape;
    CHECK(shape_loss(tape, img, img, vel, w).item() == 0.0);
  }
  SUBCASE("batch mean of one perfect and one offset pair") {
    Tensor images(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
    Tensor templates(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
    Rng rng(6);
    for (int i = 0; i < 64; ++i) {
      double v = rng.uniform01();
      images.data()[static_cast<size_t>(i)] = v;
      templates.data()[static_cast<size_t>(i)] = v;  // row 0 matches
      double u = rng.uniform01();
      images.data()[static_cast<size_t>(64 + i)] = u + 0.2;  // row 1 offset by 0.2
      templates.data()[static_cast<size_t>(64 + i)] = u;
    }
    Tensor vel(std::vector<int>{2, 2, 8, 8}, Dtype::F64);
    Tape tape;
    // per-sample energies (1/sigma^2)*0 and (1/sigma^2)*0.04, averaged
    double expect = 0.5 * (0.0 + 1e4 * 0.04);
    CHECK(shape_loss(tape, images, templates, vel, w).item() ==
          doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("row-count mismatch is rejected") {
    Tensor images(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
    Tensor vel(std::vector<int>{3, 2, 8, 8}, Dtype::F64);
    Tape tape;
    CHECK_THROWS_AS(shape_loss(tape, images, images, vel, w), std::invalid_argument);
  }
}

TEST_CASE("csr closed form: orthogonal negative at tau = 1") {
  // anchors i,p identical and unit-norm, a orthogonal:
  // loss_i = -log(e / (e + 1)) for both anchors, a contributes no anchor
  Tensor f = Tensor::from({3, 2}, {1, 0, 1, 0, 0, 1}, Dtype::F64);
  std::vector<int> labels = {0, 0, 1};
  Tape tape;
  double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(expect == doctest::Approx(0.3133).epsilon(1e-3));
  CHECK(csr_loss(tape, f, labels, 1.0).item() == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("csr closed form: identical embeddings give log(B-1)") {
  const int B = 6;
  Tensor f({B, 3}, Dtype::F64);
  for (int i = 0; i < B; ++i) {
    f.data()[static_cast<size_t>(i) * 3 + 0] = 0.6;
    f.data()[static_cast<size_t>(i) * 3 + 1] = -0.2;
    f.data()[static_cast<size_t>(i) * 3 + 2] = 1.1;
  }
  std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  for (double tau : {0.75, 0.1, 2.0}) {
    Tape tape;
    CHECK(csr_loss(tape, f, labels, tau).item() ==
          doctest::Approx(std::log(B - 1.0)).epsilon(1e-9));
  }
}

TEST_CASE("vectorized csr equals the brute-force double loop") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng srng(seed + 100);
    int b = 4 + static_cast<int>(srng.below(13));  // up to 16
    Tensor f = seeded_features(b, 8, seed);
    std::vector<int> labels(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) labels[static_cast<size_t>(i)] = static_cast<int>(srng.below(3));
    if (!batch_has_positive_pair(labels)) labels[1] = labels[0];
    for (CandidateSet cs : {CandidateSet::AllOthers, CandidateSet::DifferentClassOnly}) {
      if (cs == CandidateSet::DifferentClassOnly) {
        bool has_diff = false;
        for (int y : labels) has_diff = has_diff || y != labels[0];
        if (!has_diff) continue;
      }
      Tape tape;
      double got = csr_loss(tape, f, labels, 0.75, cs).item();
      CHECK(got == doctest::Approx(brute_force_csr(f, labels, 0.75, cs)).epsilon(1e-6));
    }
  }
}

TEST_CASE("csr invariances") {
  Tensor f = seeded_features(8, 6, 77);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  double base;
  {
    Tape tape;
    base = csr_loss(tape, f, labels, 0.75).item();
  }
  SUBCASE("positive rescaling of one row") {
    Tensor scaled = f.clone();
    for (int d = 0; d < 6; ++d) scaled.data()[static_cast<size_t>(3 * 6 + d)] *= 7.3;
    Tape tape;
    CHECK(std::abs(csr_loss(tape, scaled, labels, 0.75).item() - base) < 1e-6);
  }
  SUBCASE("batch permutation") {
    std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
    Tensor shuffled({8, 6}, Dtype::F64);
    std::vector<int> plabels(8);
    for (int i = 0; i < 8; ++i) {
      plabels[static_cast<size_t>(i)] = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
      for (int d = 0; d < 6; ++d)
        shuffled.data()[static_cast<size_t>(i * 6 + d)] =
            f.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 6 + d)];
    }
    Tape tape;
    CHECK(csr_loss(tape, shuffled, plabels, 0.75).item() == doctest::Approx(base).epsilon(1e-9));
  }
  SUBCASE("rotating a positive pair together decreases the loss") {
    auto loss_at_angle = [](double angle) {
      Tensor f3 = Tensor::from(
          {3, 2}, {1, 0, std::cos(angle), std::sin(angle), 0, 1}, Dtype::F64);
      Tape tape;
      return csr_loss(tape, f3, {0, 0, 1}, 0.75).item();
    };
    CHECK(loss_at_angle(0.2) < loss_at_angle(0.8));
    CHECK(loss_at_angle(0.8) < loss_at_angle(1.4));
  }
}

TEST_CASE("csr rejects degenerate batches and tiny batches") {
  Tensor f = seeded_features(3, 4, 5);
  Tape tape;
  CHECK_THROWS_WITH_AS(csr_loss(tape, f, {0, 1, 2}, 0.75), doctest::Contains("degenerate"),
                       std::runtime_error);
  Tensor one = seeded_features(1, 4, 5);
  CHECK_THROWS_AS(csr_loss(tape, one, {0}, 0.75), std::invalid_argument);
  CHECK_THROWS_AS(csr_loss(tape, f, {0, 0, 1}, 0.001), std::invalid_argument);
}

TEST_CASE("total loss composition") {
  Rng rng(8);
  Grid2D g{8, 8};
  Tensor images(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
  Tensor templates(std::vector<int>{2, 1, 8, 8}, Dtype::F64);
  for (double& v : images.data()) v = rng.uniform01();
  for (double& v : templates.data()) v = rng.uniform01();
  Tensor vel(std::vector<int>{2, 2, 8, 8}, Dtype::F64);
  for (double& v : vel.data()) v = 0.3 * rng.normal();
  Tensor proj = seeded_features(2, 4, 9);
  std::vector<int> labels = {0, 0};
  LossWeights w;

  SUBCASE("beta = 0 bit-matches shape loss") {
    LossWeights w0 = w;
    w0.beta = 0.0;
    Tape t1, t2;
    CHECK(corld_loss(t1, images, templates, vel, proj, labels, w0).item() ==
          shape_loss(t2, images, templates, vel, w0).item());
  }
  SUBCASE("weighted sum arithmetic") {
    // beta = 0.1 with component values 2.0 and 0.5 gives 2.05
    CHECK(2.0 + 0.1 * 0.5 == doctest::Approx(2.05));
    Tape t1, t2, t3;
    double shape = shape_loss(t1, images, templates, vel, w).item();
    double csr = csr_loss(t2, proj, labels, w.tau).item();
    double total = corld_loss(t3, images, templates, vel, proj, labels, w).item();
    CHECK(total == doctest::Approx(shape + w.beta * csr).epsilon(1e-12));
  }
}

TEST_CASE("classifier cross-entropy") {
  SUBCASE("uniform logits give log C") {
    Tape tape;
    Tensor logits(std::vector<int>{3, 4}, Dtype::F64);
    CHECK(clf_loss(tape, logits, {0, 1, 3}, 1.0).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("confident logits drive the loss to zero") {
    Tensor logits(std::vector<int>{2, 3}, Dtype::F64);
    logits.data()[0] = 30.0;
    logits.data()[5] = 30.0;
    Tape tape;
    CHECK(clf_loss(tape, logits, {0, 2}, 1.0).item() <= 1e-9);
  }
  SUBCASE("matches the per-sample brute force") {
    Rng rng(12);
    Tensor logits({32, 4}, Dtype::F64);
    for (double& v : logits.data()) v = 3.0 * rng.normal();
    std::vector<int> labels(32);
    for (auto& y : labels) y = static_cast<int>(rng.below(4));
    double expect = 0.0;
    for (int i = 0; i < 32; ++i) {
      double denom = 0.0;
      for (int c = 0; c < 4; ++c)
        denom += std::exp(logits.data()[static_cast<size_t>(i) * 4 + c]);
      expect += -std::log(
          std::exp(logits.data()[static_cast<size_t>(i) * 4 + labels[static_cast<size_t>(i)]]) /
          denom);
    }
    expect = 0.7 * expect / 32.0;
    Tape tape;
    CHECK(clf_loss(tape, logits, labels, 0.7).item() == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("label range is enforced") {
    Tape tape;
    Tensor logits(std::vector<int>{2, 3}, Dtype::F64);
    CHECK_THROWS_WITH_AS(clf_loss(tape, logits, {0, 3}, 1.0), doctest::Contains("out of range"),
                         std::invalid_argument);
  }
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  w.tau = 0.001;
  CHECK_THROWS_AS(validate_weights(w), std::invalid_argument);
  w = LossWeights{};
  w.sigma = 0.0;
  CHECK_THROWS_AS(validate_weights(w), std::invalid_argument);
  w = LossWeights{};
  w.beta = -1.0;
  CHECK_THROWS_AS(validate_weights(w), std::invalid_argument);
}

TEST_CASE("losses pass finite-difference checks in f64") {
  LossWeights w;
  w.sigma = 0.1;
  Tensor f = seeded_features(4, 6, 21);
  std::vector<int> labels = {0, 1, 0, 1};
  double err = grad_check(
      [labels](Tape& t, const std::vector<Tensor>& l) { return csr_loss(t, l[0], labels, 0.75); },
      {f});
  CHECK(err <= 1e-4);

  Rng rng(22);
  Tensor logits({4, 3}, Dtype::F64);
  for (double& v : logits.data()) v = rng.normal();
  err = grad_check(
      [](Tape& t, const std::vector<Tensor>& l) { return clf_loss(t, l[0], {0, 2, 1, 2}, 1.0); },
      {logits});
  CHECK(err <= 1e-4);
}
