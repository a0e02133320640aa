#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "core/deform.hpp"
#include "core/losses.hpp"
#include "core/networks.hpp"
#include "doctest.h"

using namespace corld;

namespace {

ArchDescriptor tiny_arch() {
  ArchDescriptor a;
  a.image_size = 16;
  a.enc_channels = {4, 8, 8};
  a.dec_channels = {8, 4, 4};
  a.gn_groups = 2;
  a.proj_channels = 4;
  a.num_classes = 3;
  a.clf_hidden1 = 16;
  a.clf_hidden2 = 8;
  return a;
}

Tensor random_images(int b, int c, int hw, uint64_t seed, Dtype dt = Dtype::F32) {
  Rng rng(seed);
  Tensor t({b, c, hw, hw}, dt);
  for (double& v : t.data()) v = round_mode(dt, rng.uniform01());
  return t;
}

}  // namespace

TEST_CASE("zero-gain velocity head starts at the identity deformation") {
  Rng rng(1);
  CorldNet net = CorldNet::init(tiny_arch(), rng, Dtype::F32);
  Tape tape;
  CorldNet::Forward f = net.forward(tape, random_images(2, 1, 16, 3));
  CHECK(max_abs(f.velocities) == 0.0);
  Tensor u = exp_map_batched(tape, f.velocities, {16, 16}, 6);
  CHECK(max_abs(u) == 0.0);
}

TEST_CASE("forward shape contract at 32x32") {
  ArchDescriptor arch;  // default: 16/32/64 encoder, projection dim 64
  arch.num_classes = 4;
  Rng rng(2);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F32);
  Tape tape;
  CorldNet::Forward f = net.forward(tape, random_images(4, 1, 32, 4));
  CHECK(f.velocities.shape() == std::vector<int>{4, 2, 32, 32});
  CHECK(f.latent.shape() == std::vector<int>{4, 64, 4, 4});
  CHECK(f.projected.shape() == std::vector<int>{4, 64});
}

TEST_CASE("projected rows are unit length") {
  Rng rng(3);
  CorldNet net = CorldNet::init(tiny_arch(), rng, Dtype::F32);
  Tape tape;
  CorldNet::Forward f = net.forward(tape, random_images(3, 1, 16, 5));
  for (int i = 0; i < 3; ++i) {
    double n = 0.0;
    for (int d = 0; d < 4; ++d) {
      double v = f.projected.data()[static_cast<size_t>(i * 4 + d)];
      n += v * v;
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("no cross-sample coupling: permuting the batch permutes outputs") {
  Rng rng(4);
  CorldNet net = CorldNet::init(tiny_arch(), rng, Dtype::F64);
  Tensor batch = random_images(3, 1, 16, 6, Dtype::F64);
  Tape t1;
  CorldNet::Forward f = net.forward(t1, batch);

  const std::vector<int> perm = {2, 0, 1};
  Tensor shuffled({3, 1, 16, 16}, Dtype::F64);
  const int hw = 16 * 16;
  for (int i = 0; i < 3; ++i)
    std::copy(batch.data().begin() + perm[static_cast<size_t>(i)] * hw,
              batch.data().begin() + (perm[static_cast<size_t>(i)] + 1) * hw,
              shuffled.data().begin() + i * hw);
  Tape t2;
  CorldNet::Forward g = net.forward(t2, shuffled);
  for (int i = 0; i < 3; ++i)
    for (int d = 0; d < 4; ++d)
      CHECK(g.projected.data()[static_cast<size_t>(i * 4 + d)] ==
            f.projected.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 4 + d)]);
}

TEST_CASE("parameter count is a pure function of the descriptor") {
  // hand count for the default descriptor, 1 input channel:
  //   enc: 16*1*9+16 + 32*16*9+32 + 64*32*9+64 = 160 + 4640 + 18496
  //   dec: 64*32*16+32 + 32*16*16+16 + 16*8*16+8 = 32800 + 8208 + 2056
  //   vel: 2*8*9+2 = 146;  proj: 64*64+64 = 4160
  ArchDescriptor arch;
  Rng rng(5);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F32);
  const int64_t expect = 160 + 4640 + 18496 + 32800 + 8208 + 2056 + 146 + 4160;
  CHECK(net.params.count() == expect);

  // classifier: image encoder mirrors the encoder stack (1 input channel),
  // fused head sees 64 + 64 features
  BoostedClassifier clf = BoostedClassifier::init(arch, FuseSource::Projected, rng, Dtype::F32);
  const int64_t enc = 160 + 4640 + 18496;
  const int64_t head = 128 * 128 + 128 + 128 * 64 + 64 + 64 * 4 + 4;
  CHECK(clf.params.count() == enc + head);
}

TEST_CASE("forward is deterministic given parameters and inputs") {
  Rng rng(6);
  CorldNet net = CorldNet::init(tiny_arch(), rng, Dtype::F32);
  Tensor batch = random_images(2, 1, 16, 7);
  Tape t1, t2;
  CorldNet::Forward a = net.forward(t1, batch);
  CorldNet::Forward b = net.forward(t2, batch);
  CHECK(a.velocities.data() == b.velocities.data());
  CHECK(a.projected.data() == b.projected.data());
}

TEST_CASE("every parameter receives a gradient on a seeded batch") {
  ArchDescriptor arch = tiny_arch();
  Rng rng(7);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F64);
  Tensor images = random_images(4, 1, 16, 8, Dtype::F64);
  Tensor templates = random_images(4, 1, 16, 9, Dtype::F64);
  std::vector<int> labels = {0, 1, 0, 1};
  LossWeights w;
  w.sigma = 0.1;
  Tape tape;
  CorldNet::Forward f = net.forward(tape, images);
  Tensor loss = corld_loss(tape, images, templates, f.velocities, f.projected, labels, w);
  tape.backward(loss);
  for (const auto& [name, t] : net.params.items) {
    REQUIRE(t.has_grad());
    double g = 0.0;
    for (double v : t.grad()) g = std::max(g, std::abs(v));
    INFO("parameter ", name);
    CHECK(g > 0.0);
  }
}

TEST_CASE("frozen shape branch gets exactly zero gradients in phase 2") {
  ArchDescriptor arch = tiny_arch();
  Rng rng(9);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F64);
  BoostedClassifier clf = BoostedClassifier::init(arch, FuseSource::Projected, rng, Dtype::F64);
  net.params.set_requires_grad(false);
  Tensor images = random_images(3, 1, 16, 10, Dtype::F64);
  Tape tape;
  Tensor logits = clf.forward(tape, &net, images, nullptr, false);
  Tensor loss = clf_loss(tape, logits, {0, 1, 2}, 1.0);
  tape.backward(loss);
  for (const auto& [name, t] : net.params.items) {
    if (t.has_grad())
      for (double v : t.grad()) CHECK(v == 0.0);
  }
  // and the classifier itself did learn something
  bool any = false;
  for (const auto& [name, t] : clf.params.items)
    if (t.has_grad())
      for (double v : t.grad()) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("zeroed shape features reproduce the image-only path bit-exactly") {
  ArchDescriptor arch = tiny_arch();
  Rng rng(11);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F64);
  BoostedClassifier clf = BoostedClassifier::init(arch, FuseSource::Projected, rng, Dtype::F64);
  Tensor images = random_images(3, 1, 16, 12, Dtype::F64);

  Tape t1;
  Tensor with_flag = clf.forward(t1, &net, images, nullptr, /*shape_features_off=*/true);

  // independent composition: same weights, explicit zero shape features
  Tape t2;
  Attrs ap;
  ap.out_h = ap.out_w = 1;
  Tensor h = images;
  for (int i = 0; i < 3; ++i) {
    Attrs conv;
    conv.pad_h = conv.pad_w = 1;
    conv.pad_mode = Pad::Periodic;
    h = t2.apply(Op::Conv2d,
                 {h, clf.params.at("ie" + std::to_string(i) + ".w"),
                  clf.params.at("ie" + std::to_string(i) + ".b")},
                 conv);
    Attrs gn;
    gn.groups = arch.gn_groups;
    h = t2.apply(Op::GroupNorm, {h}, gn);
    h = t2.leaky_relu(h, arch.slope);
    Attrs pool;
    pool.kernel_h = pool.kernel_w = pool.stride_h = pool.stride_w = 2;
    h = t2.apply(Op::AvgPool2d, {h}, pool);
  }
  Tensor img_feat = t2.reshape(t2.apply(Op::AdaptiveAvgPool2d, {h}, ap), {3, 8});
  Tensor zeros(std::vector<int>{3, 4}, Dtype::F64);
  Attrs cat;
  cat.axis = 1;
  Tensor fused = t2.apply(Op::Concat, {img_feat, zeros}, cat);
  Tensor l1 = t2.leaky_relu(
      t2.apply(Op::MatMul, {fused, clf.params.at("clf1.w"), clf.params.at("clf1.b")}), 0.1);
  Tensor l2 = t2.leaky_relu(
      t2.apply(Op::MatMul, {l1, clf.params.at("clf2.w"), clf.params.at("clf2.b")}), 0.1);
  Tensor manual = t2.apply(Op::MatMul, {l2, clf.params.at("clf3.w"), clf.params.at("clf3.b")});

  CHECK(with_flag.data() == manual.data());
}

TEST_CASE("latent fusion dimension follows the flag") {
  ArchDescriptor arch = tiny_arch();
  Rng rng(13);
  BoostedClassifier latent_clf = BoostedClassifier::init(arch, FuseSource::Latent, rng, Dtype::F32);
  CHECK(latent_clf.shape_feature_dim() == arch.latent_dim());
  BoostedClassifier proj_clf = BoostedClassifier::init(arch, FuseSource::Projected, rng, Dtype::F32);
  CHECK(proj_clf.shape_feature_dim() == arch.proj_channels);
}

TEST_CASE("indivisible input sizes are rejected") {
  Rng rng(14);
  CorldNet net = CorldNet::init(tiny_arch(), rng, Dtype::F32);
  Tape tape;
  CHECK_THROWS_WITH_AS(net.forward(tape, random_images(1, 1, 12, 15)),
                       doctest::Contains("divisible"), std::invalid_argument);
}

TEST_CASE("descriptor validation") {
  ArchDescriptor bad = tiny_arch();
  bad.gn_groups = 3;  // does not divide 4
  CHECK_THROWS_AS(validate_arch(bad), std::invalid_argument);
  bad = tiny_arch();
  bad.image_size = 20;  // not divisible by 8
  CHECK_THROWS_AS(validate_arch(bad), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip the descriptor and parameters") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "corld_networks_test";
  fs::create_directories(dir);
  std::string path = (dir / "net.ckpt").string();

  ArchDescriptor arch = tiny_arch();
  Rng rng(15);
  CorldNet net = CorldNet::init(arch, rng, Dtype::F32);
  save_params_checkpoint(path, net.params, arch, {"custom=1"});

  ArchDescriptor back_arch;
  std::vector<std::string> header;
  ParamSet back = load_params_checkpoint(path, &back_arch, &header);
  CHECK(back_arch.enc_channels == arch.enc_channels);
  CHECK(back_arch.image_size == arch.image_size);
  bool found = false;
  for (const std::string& line : header) found = found || line == "custom=1";
  CHECK(found);
  REQUIRE(back.items.size() == net.params.items.size());
  for (size_t i = 0; i < back.items.size(); ++i) {
    CHECK(back.items[i].first == net.params.items[i].first);
    CHECK(back.items[i].second.data() == net.params.items[i].second.data());
  }
}
