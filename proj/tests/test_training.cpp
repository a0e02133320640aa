#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "core/config.hpp"
#include "core/harness.hpp"
#include "doctest.h"

using namespace corld;

namespace {

std::string temp_dir(const std::string& leaf) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "corld_training_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

GenSpec tiny_spec() {
  GenSpec spec;
  spec.classes = 2;
  spec.per_class = 8;
  spec.size = 16;
  spec.seed = 11;
  spec.deform_amplitude = 2.0;
  spec.noise_std = 0.05;
  return spec;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs_corld = 2;
  cfg.epochs_clf = 3;
  cfg.batch_size = 8;
  cfg.seed = 11;
  return cfg;
}

CorldNet make_net(const Dataset& data, const TrainConfig& cfg) {
  ArchDescriptor arch;
  arch.in_channels = cfg.template_in_input ? 2 : 1;
  arch.image_size = data.height();
  arch.num_classes = data.num_classes;
  arch.enc_channels = {4, 8, 8};
  arch.dec_channels = {8, 4, 4};
  arch.gn_groups = 2;
  arch.proj_channels = 4;
  Rng rng(derive_seed(cfg.seed, "net_init"));
  return CorldNet::init(arch, rng, cfg.float_mode);
}

}  // namespace

TEST_CASE("adam first step has unit-scaled magnitude") {
  // from x = 1 with grad 2x: m-hat/v-hat cancel to sign(grad) on step one
  ParamSet p;
  Tensor& x = p.add("x", {1}, Dtype::F64);
  x.data()[0] = 1.0;
  Adam opt;
  x.grad()[0] = 2.0;
  opt.step(p, 0.1);
  CHECK(std::abs((1.0 - x.data()[0]) - 0.1) <= 1e-6);
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
  ParamSet p;
  Tensor& x = p.add("x", {2}, Dtype::F64);
  x.data() = {1.5, -2.0};
  Adam opt(0.0);
  x.zero_grad();
  opt.step(p, 0.1);
  CHECK(x.data() == std::vector<double>{1.5, -2.0});
}

TEST_CASE("adam matches an independent scalar reference over 100 steps") {
  // reference implementation in plain doubles, seeded quadratic f = a x^2
  Rng rng(21);
  double a = 0.5 + rng.uniform01();
  double x_ref = rng.normal();
  ParamSet p;
  Tensor& x = p.add("x", {1}, Dtype::F64);
  x.data()[0] = x_ref;
  Adam opt;

  double m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;
  for (int t = 1; t <= 100; ++t) {
    double g = 2.0 * a * x_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    x_ref -= lr * mh / (std::sqrt(vh) + eps);

    x.grad()[0] = 2.0 * a * x.data()[0];
    opt.step(p, lr);
  }
  CHECK(std::abs(x.data()[0] - x_ref) <= 1e-10);
}

TEST_CASE("adam skips frozen parameters entirely") {
  ParamSet p;
  Tensor& x = p.add("x", {1}, Dtype::F64);
  x.data()[0] = 3.0;
  x.set_requires_grad(false);
  Adam opt(/*weight_decay=*/0.5);
  opt.step(p, 0.1);
  CHECK(x.data()[0] == 3.0);
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(1e-3, 0, 40) == 1e-3);
  CHECK(cosine_lr(1e-3, 40, 40) <= 1e-9 * 1e-3);
  CHECK(cosine_lr(1e-3, 20, 40) == doctest::Approx(0.5e-3));
}

TEST_CASE("early stopping window") {
  SUBCASE("needs six epochs of history") {
    std::vector<double> flat(5, 1.0);
    CHECK_FALSE(early_stop_window(flat, 1e-3));
    flat.push_back(1.0);
    CHECK(early_stop_window(flat, 1e-3));
  }
  SUBCASE("does not fire while the loss still moves") {
    std::vector<double> moving = {10, 9, 8, 7, 6, 5, 4};
    CHECK_FALSE(early_stop_window(moving, 1e-3));
  }
  SUBCASE("disabled at eps = 0") {
    std::vector<double> flat(10, 1.0);
    CHECK_FALSE(early_stop_window(flat, 0.0));
  }
}

TEST_CASE("one phase-1 epoch reduces the training shape loss") {
  Dataset data = gen_synthetic(tiny_spec());
  TrainConfig cfg = tiny_config();
  cfg.epochs_corld = 5;
  CorldNet net = make_net(data, cfg);
  std::string dir = temp_dir("smoke");
  TrainReport rep = train_corld(net, data, cfg, dir);
  REQUIRE(rep.epochs.size() >= 2);
  CHECK(rep.epochs.back().shape < rep.epochs.front().shape);
  CHECK(std::filesystem::exists(dir + "/corld.ckpt"));
}

TEST_CASE("template-in-input arm consumes a two-channel encoder input") {
  Dataset data = gen_synthetic(tiny_spec());
  TrainConfig cfg = tiny_config();
  cfg.template_in_input = true;
  CorldNet net = make_net(data, cfg);
  CHECK(net.arch.in_channels == 2);
  TrainReport rep = train_corld(net, data, cfg, temp_dir("tmpl_input"));
  CHECK(rep.epochs.size() == 2);
}

TEST_CASE("seeded training is bit-reproducible") {
  Dataset data = gen_synthetic(tiny_spec());
  TrainConfig cfg = tiny_config();
  auto curve = [&]() {
    CorldNet net = make_net(data, cfg);
    TrainReport rep = train_corld(net, data, cfg, temp_dir("repro"));
    std::vector<double> vals;
    for (const EpochStats& e : rep.epochs) {
      vals.push_back(e.shape);
      vals.push_back(e.csr);
      vals.push_back(e.total);
      vals.push_back(e.val_metric);
    }
    return vals;
  };
  CHECK(curve() == curve());
}

TEST_CASE("phase 2: gamma = 0 leaves every trainable parameter unchanged") {
  Dataset data = gen_synthetic(tiny_spec());
  TrainConfig cfg = tiny_config();
  cfg.weights.gamma = 0.0;
  cfg.weights.weight_decay = 0.0;
  cfg.epochs_clf = 1;
  ArchDescriptor arch;
  arch.image_size = 16;
  arch.enc_channels = {4, 8, 8};
  arch.dec_channels = {8, 4, 4};
  arch.gn_groups = 2;
  arch.proj_channels = 4;
  arch.num_classes = 2;
  arch.clf_hidden1 = 8;
  arch.clf_hidden2 = 8;
  Rng rng(derive_seed(cfg.seed, "clf_init"));
  BoostedClassifier clf = BoostedClassifier::init(arch, cfg.fuse_source, rng, Dtype::F32);
  std::vector<std::vector<double>> before;
  for (const auto& [name, t] : clf.params.items) before.push_back(t.data());
  train_classifier(clf, nullptr, data, cfg, temp_dir("gamma0"), /*image_only=*/true);
  size_t i = 0;
  for (const auto& [name, t] : clf.params.items) CHECK(t.data() == before[i++]);
}

TEST_CASE("probe reaches 100% on linearly separable toy features") {
  // two classes on opposite sides of a margin in 2-d
  const int n = 24;
  Dataset data;
  data.num_classes = 2;
  data.images = Tensor({n, 1, 8, 8}, Dtype::F32);  // unused by the probe
  Rng rng(31);
  Tensor features({n, 2}, Dtype::F32);
  for (int i = 0; i < n; ++i) {
    int y = i % 2;
    data.labels.push_back(y);
    data.split.push_back(i < 16 ? Split::Train : Split::Val);
    features.data()[static_cast<size_t>(i) * 2] =
        round_mode(Dtype::F32, (y ? 1.0 : -1.0) + 0.2 * rng.normal());
    features.data()[static_cast<size_t>(i) * 2 + 1] = round_mode(Dtype::F32, rng.normal());
  }
  TrainConfig cfg;
  cfg.epochs_clf = 50;
  cfg.batch_size = 8;
  cfg.seed = 3;
  ProbeResult result = train_probe(features, data, cfg);
  CHECK(result.best_val_acc == 1.0);
}

TEST_CASE("train report CSV schema") {
  TrainReport rep;
  rep.epochs.push_back({1, 1e-3, 2.0, 0.5, 2.05, 1.9, 0.01});
  std::string dir = temp_dir("csv");
  write_report_csv(dir + "/r.csv", rep);
  std::ifstream is(dir + "/r.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "# CORLD-CSV v1 train_report");
  std::getline(is, line);
  CHECK(line == "epoch,lr,shape_loss,csr_loss,total,val_metric,seconds");
  std::getline(is, line);
  CHECK(line.substr(0, 2) == "1,");
}

TEST_CASE("config file round trip and validation") {
  std::string dir = temp_dir("cfg");
  TrainConfig cfg;
  cfg.weights.tau = 0.5;
  cfg.epochs_corld = 7;
  cfg.candidate_set = CandidateSet::DifferentClassOnly;
  cfg.template_mode = TemplateMode::Single;
  save_train_config(dir + "/c.cfg", cfg);
  TrainConfig back;
  load_train_config(dir + "/c.cfg", back);
  CHECK(back.weights.tau == 0.5);
  CHECK(back.epochs_corld == 7);
  CHECK(back.candidate_set == CandidateSet::DifferentClassOnly);
  CHECK(back.template_mode == TemplateMode::Single);

  CHECK_THROWS_WITH_AS(apply_config_kv(back, "no_such_key", "1"),
                       doctest::Contains("unknown config key"), std::invalid_argument);
  std::ofstream bad(dir + "/bad.cfg");
  bad << "NOT-A-CONFIG\n";
  bad.close();
  CHECK_THROWS_AS(load_train_config(dir + "/bad.cfg", back), std::runtime_error);
}

TEST_CASE("classifier checkpoints reload as standalone models") {
  Dataset data = gen_synthetic(tiny_spec());
  TrainConfig cfg = tiny_config();
  cfg.epochs_corld = 1;
  cfg.epochs_clf = 2;
  CorldNet net = make_net(data, cfg);
  std::string dir = temp_dir("reload");
  train_corld(net, data, cfg, dir);

  ArchDescriptor arch = net.arch;
  arch.clf_hidden1 = 8;
  arch.clf_hidden2 = 8;
  Rng rng(derive_seed(cfg.seed, "clf_init"));
  BoostedClassifier clf = BoostedClassifier::init(arch, cfg.fuse_source, rng, cfg.float_mode);
  train_classifier(clf, &net, data, cfg, dir, false);

  LoadedClassifier loaded = load_classifier_checkpoint(dir + "/clf.ckpt");
  CHECK(loaded.has_net);
  CHECK_FALSE(loaded.image_only);
  std::vector<int> test_idx = data.indices_of(Split::Test);
  Tensor a = classifier_logits(clf, &net, data, test_idx, false);
  Tensor b = classifier_logits(loaded.clf, &loaded.net, data, test_idx, false);
  CHECK(a.data() == b.data());
}
