#include "core/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include "core/config.hpp"
#include "core/serialize.hpp"
#include "core/svg.hpp"

namespace corld {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string metrics_fields(const MetricsReport& m) {
  return fmt_g(m.accuracy) + "," + fmt_g(m.precision) + "," + fmt_g(m.f1) + "," +
         fmt_g(m.sensitivity) + "," + fmt_g(m.specificity) + "," + fmt_g(m.auc);
}

constexpr const char* kMetricsHeader = "accuracy,precision,f1,sensitivity,specificity,auc";

void parallel_grid(int n, const std::function<void(int)>& fn) {
  int threads = std::min(harness_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& th : pool) th.join();
}

std::vector<int> labels_at(const Dataset& data, const std::vector<int>& rows) {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) out[i] = data.labels[static_cast<size_t>(rows[i])];
  return out;
}

ArchDescriptor arch_for(const Dataset& data, const TrainConfig& cfg) {
  ArchDescriptor arch;
  arch.in_channels = cfg.template_in_input ? 2 : 1;
  arch.image_size = data.height();
  arch.num_classes = data.num_classes;
  return arch;
}

}  // namespace

int harness_threads() {
  const char* env = std::getenv("CORLD_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return std::clamp(n, 1, 64);
}

Tensor extract_latent_features(const CorldNet& net, const Dataset& data,
                               const TrainConfig& cfg) {
  const int n = data.count();
  const int dim = net.arch.latent_dim();
  Tensor features({n, dim}, cfg.float_mode);
  constexpr int kBatch = 32;
  std::vector<int> rows;
  for (int start = 0; start < n; start += kBatch) {
    int stop = std::min(n, start + kBatch);
    rows.clear();
    for (int i = start; i < stop; ++i) rows.push_back(i);
    Tensor input = assemble_net_input(data, rows, net.arch.in_channels == 2, cfg.float_mode);
    Tape tape;
    CorldNet::Forward fwd = net.forward(tape, input);
    Tensor flat = tape.flatten(fwd.latent, 1);
    std::copy(flat.data().begin(), flat.data().end(),
              features.data().begin() + static_cast<int64_t>(start) * dim);
  }
  return features;
}

Tensor probe_logits(const Mlp3& probe, const Tensor& features, const std::vector<int>& rows) {
  Tensor x({static_cast<int>(rows.size()), probe.in}, features.dtype());
  for (size_t r = 0; r < rows.size(); ++r)
    std::copy(features.data().begin() + static_cast<int64_t>(rows[r]) * probe.in,
              features.data().begin() + static_cast<int64_t>(rows[r] + 1) * probe.in,
              x.data().begin() + static_cast<int64_t>(r) * probe.in);
  Tape tape;
  return probe.forward(tape, x);
}

ProbeResult train_probe(const Tensor& features, const Dataset& data, const TrainConfig& cfg) {
  const int dim = features.dim(1);
  Rng rng(derive_seed(cfg.seed, "probe"));
  ProbeResult out;
  out.probe = Mlp3::init(dim, 128, 64, data.num_classes, rng, cfg.float_mode);
  Adam opt(cfg.weights.weight_decay);
  std::vector<int> train_idx = data.indices_of(Split::Train);
  std::vector<int> val_idx = data.indices_of(Split::Val);
  std::vector<int> val_labels = labels_at(data, val_idx);
  NamedTensors best;
  std::vector<double> losses;
  for (int epoch = 1; epoch <= cfg.epochs_clf; ++epoch) {
    double lr = cosine_lr(cfg.eta0, epoch - 1, cfg.epochs_clf);
    rng.shuffle(train_idx);
    double sum_loss = 0.0;
    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(train_idx.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int> rows(train_idx.begin() + static_cast<int64_t>(start),
                            train_idx.begin() + static_cast<int64_t>(stop));
      Tensor x({static_cast<int>(rows.size()), dim}, cfg.float_mode);
      for (size_t r = 0; r < rows.size(); ++r)
        std::copy(features.data().begin() + static_cast<int64_t>(rows[r]) * dim,
                  features.data().begin() + static_cast<int64_t>(rows[r] + 1) * dim,
                  x.data().begin() + static_cast<int64_t>(r) * dim);
      Tape tape;
      Tensor logits = out.probe.forward(tape, x);
      Tensor loss = clf_loss(tape, logits, labels_at(data, rows), cfg.weights.gamma);
      tape.backward(loss);
      opt.step(out.probe.params, lr);
      sum_loss += loss.item() * static_cast<double>(rows.size());
    }
    losses.push_back(sum_loss / static_cast<double>(train_idx.size()));

    Tensor logits = probe_logits(out.probe, features, val_idx);
    int hit = 0;
    for (size_t i = 0; i < val_idx.size(); ++i) {
      int pred = 0;
      double bv = logits.data()[i * static_cast<size_t>(data.num_classes)];
      for (int c = 1; c < data.num_classes; ++c) {
        double v = logits.data()[i * static_cast<size_t>(data.num_classes) + static_cast<size_t>(c)];
        if (v > bv) {
          bv = v;
          pred = c;
        }
      }
      if (pred == val_labels[i]) ++hit;
    }
    double acc = static_cast<double>(hit) / static_cast<double>(val_idx.size());
    if (acc > out.best_val_acc || best.empty()) {
      out.best_val_acc = acc;
      best.clear();
      for (const auto& [name, t] : out.probe.params.items) best.emplace_back(name, t.clone());
    }
    if (early_stop_window(losses, cfg.eps_clf)) break;
  }
  for (auto& [name, t] : out.probe.params.items)
    for (const auto& [bn, bt] : best)
      if (bn == name) t.data() = bt.data();
  return out;
}

ArmResult train_and_probe(const Dataset& data, const TrainConfig& cfg,
                          const std::string& work_dir, const std::string& name) {
  std::filesystem::create_directories(work_dir);
  Rng init_rng(derive_seed(cfg.seed, "net_init"));
  CorldNet net = CorldNet::init(arch_for(data, cfg), init_rng, cfg.float_mode);
  TrainReport rep = train_corld(net, data, cfg, work_dir);
  write_report_csv(work_dir + "/train_report.csv", rep);

  Tensor features = extract_latent_features(net, data, cfg);
  ProbeResult probe = train_probe(features, data, cfg);
  std::vector<int> test_idx = data.indices_of(Split::Test);
  Tensor logits = probe_logits(probe.probe, features, test_idx);

  ArmResult out;
  out.name = name;
  out.test = compute_metrics(logits, labels_at(data, test_idx));
  out.rep_time_per_epoch_s = rep.mean_epoch_seconds;
  out.best_val = probe.best_val_acc;
  return out;
}

std::vector<ArmResult> run_ablation(const Dataset& data, const TrainConfig& base,
                                    const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  struct Arm {
    bool template_input, contrastive;
  };
  const std::vector<Arm> arms = {{true, false}, {true, true}, {false, false}, {false, true}};
  std::vector<ArmResult> results(arms.size());
  parallel_grid(static_cast<int>(arms.size()), [&](int i) {
    TrainConfig cfg = base;
    cfg.template_in_input = arms[static_cast<size_t>(i)].template_input;
    cfg.contrastive_on = arms[static_cast<size_t>(i)].contrastive;
    std::string name = std::string(cfg.template_in_input ? "template" : "no_template") +
                       (cfg.contrastive_on ? "+csr" : "");
    results[static_cast<size_t>(i)] =
        train_and_probe(data, cfg, out_dir + "/arm_" + std::to_string(i), name);
  });

  std::ofstream os(out_dir + "/ablation.csv");
  if (!os) fail("eval", "cannot open " + out_dir + "/ablation.csv for writing");
  os << "# CORLD-CSV v1 ablation\n";
  os << "template_input,contrastive," << kMetricsHeader << ",time_per_epoch_s\n";
  for (size_t i = 0; i < arms.size(); ++i)
    os << (arms[i].template_input ? "yes" : "no") << "," << (arms[i].contrastive ? "yes" : "no")
       << "," << metrics_fields(results[i].test) << ","
       << fmt_g(results[i].rep_time_per_epoch_s) << "\n";
  os.close();
  write_run_manifest(out_dir, "ablate", config_to_kv(base), {"ablation.csv"});
  return results;
}

std::vector<ArmResult> run_sweep_tau(const Dataset& data, const TrainConfig& base,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::vector<double>& grid = tau_sweep_grid();
  std::vector<ArmResult> results(grid.size());
  parallel_grid(static_cast<int>(grid.size()), [&](int i) {
    TrainConfig cfg = base;
    cfg.contrastive_on = true;
    cfg.weights.tau = grid[static_cast<size_t>(i)];
    results[static_cast<size_t>(i)] = train_and_probe(
        data, cfg, out_dir + "/tau_" + std::to_string(i), "tau=" + fmt_g(cfg.weights.tau));
  });

  std::ofstream os(out_dir + "/tau_sweep.csv");
  if (!os) fail("eval", "cannot open " + out_dir + "/tau_sweep.csv for writing");
  os << "# CORLD-CSV v1 tau_sweep\n";
  os << "tau," << kMetricsHeader << "\n";
  for (size_t i = 0; i < grid.size(); ++i)
    os << fmt_g(grid[i]) << "," << metrics_fields(results[i].test) << "\n";
  os.close();

  SvgSeries acc{"accuracy", grid, {}};
  for (const ArmResult& r : results) acc.y.push_back(r.test.accuracy);
  write_line_chart_svg(out_dir + "/tau_sweep.svg", "Temperature sweep", "tau", "test accuracy",
                       {acc}, /*log_x=*/true);
  write_run_manifest(out_dir, "sweep-tau", config_to_kv(base), {"tau_sweep.csv", "tau_sweep.svg"});
  return results;
}

std::vector<ArmResult> run_sweep_template(const Dataset& data, const TrainConfig& base,
                                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::vector<TemplateMode> grid = {TemplateMode::Single, TemplateMode::Multi};
  std::vector<ArmResult> results(grid.size());
  parallel_grid(static_cast<int>(grid.size()), [&](int i) {
    TrainConfig cfg = base;
    cfg.template_mode = grid[static_cast<size_t>(i)];
    std::string name = cfg.template_mode == TemplateMode::Single ? "single" : "multi";
    results[static_cast<size_t>(i)] =
        train_and_probe(data, cfg, out_dir + "/template_" + name, name);
  });

  std::ofstream os(out_dir + "/template_sweep.csv");
  if (!os) fail("eval", "cannot open " + out_dir + "/template_sweep.csv for writing");
  os << "# CORLD-CSV v1 template_sweep\n";
  os << "template_mode," << kMetricsHeader << "\n";
  for (size_t i = 0; i < grid.size(); ++i)
    os << results[i].name << "," << metrics_fields(results[i].test) << "\n";
  os.close();

  if (results[1].test.accuracy < results[0].test.accuracy)
    std::cerr << "eval: warning: multi-template accuracy " << results[1].test.accuracy
              << " fell below single-template " << results[0].test.accuracy << "\n";

  SvgSeries acc{"accuracy", {0.0, 1.0}, {results[0].test.accuracy, results[1].test.accuracy}};
  write_line_chart_svg(out_dir + "/template_sweep.svg", "Template mode (0=single, 1=multi)",
                       "mode", "test accuracy", {acc});
  write_run_manifest(out_dir, "sweep-template", config_to_kv(base),
                     {"template_sweep.csv", "template_sweep.svg"});
  return results;
}

std::vector<RobustnessRow> robustness_curve(const BoostedClassifier& clf, const CorldNet* net,
                                            const Dataset& data, bool image_only,
                                            const std::string& arm_name) {
  std::vector<int> test_idx = data.indices_of(Split::Test);
  std::vector<int> test_labels = labels_at(data, test_idx);
  Tensor clean = gather_images(data, test_idx, Dtype::F32);
  std::vector<RobustnessRow> rows;
  for (double scale : robustness_scale_grid()) {
    Tensor noise = make_universal_noise(clf, net, data, scale, NoiseKind::FgsmUniversal,
                                        image_only, data.spec.seed);
    Tensor perturbed = scale == 0.0 ? clean : apply_universal_noise(clean, noise);
    Tensor logits = classifier_logits(clf, net, data, test_idx, image_only, &perturbed);
    rows.push_back({arm_name, scale, compute_metrics(logits, test_labels)});
  }
  return rows;
}

std::vector<RobustnessRow> run_sweep_robustness(const Dataset& data, const TrainConfig& base,
                                                const std::string& out_dir,
                                                RobustnessModels* models_out) {
  std::filesystem::create_directories(out_dir);
  TrainConfig cfg = base;
  cfg.template_in_input = false;

  Rng init_rng(derive_seed(cfg.seed, "net_init"));
  CorldNet net = CorldNet::init(arch_for(data, cfg), init_rng, cfg.float_mode);
  TrainReport rep = train_corld(net, data, cfg, out_dir + "/corld");
  write_report_csv(out_dir + "/corld/train_report.csv", rep);

  Rng clf_rng(derive_seed(cfg.seed, "clf_init"));
  BoostedClassifier fused =
      BoostedClassifier::init(arch_for(data, cfg), cfg.fuse_source, clf_rng, cfg.float_mode);
  TrainReport fused_rep = train_classifier(fused, &net, data, cfg, out_dir + "/corld", false);
  write_report_csv(out_dir + "/corld/clf_report.csv", fused_rep);

  Rng img_rng(derive_seed(cfg.seed, "image_only_init"));
  BoostedClassifier image_only =
      BoostedClassifier::init(arch_for(data, cfg), cfg.fuse_source, img_rng, cfg.float_mode);
  TrainReport img_rep =
      train_classifier(image_only, nullptr, data, cfg, out_dir + "/image_only", true);
  write_report_csv(out_dir + "/image_only/clf_report.csv", img_rep);

  std::vector<RobustnessRow> rows = robustness_curve(image_only, nullptr, data, true, "image_only");
  std::vector<RobustnessRow> corld_rows = robustness_curve(fused, &net, data, false, "corld");
  rows.insert(rows.end(), corld_rows.begin(), corld_rows.end());

  std::ofstream os(out_dir + "/robustness.csv");
  if (!os) fail("eval", "cannot open " + out_dir + "/robustness.csv for writing");
  os << "# CORLD-CSV v1 robustness\n";
  os << "arm,scale," << kMetricsHeader << "\n";
  for (const RobustnessRow& r : rows)
    os << r.arm << "," << fmt_g(r.scale) << "," << metrics_fields(r.metrics) << "\n";
  os.close();

  std::vector<SvgSeries> series(2);
  series[0].label = "image_only";
  series[1].label = "corld";
  for (const RobustnessRow& r : rows) {
    SvgSeries& s = r.arm == "image_only" ? series[0] : series[1];
    s.x.push_back(r.scale);
    s.y.push_back(r.metrics.accuracy);
  }
  write_line_chart_svg(out_dir + "/robustness.svg", "Universal-noise robustness", "noise scale",
                       "test accuracy", series);
  write_run_manifest(out_dir, "robustness", config_to_kv(base),
                     {"robustness.csv", "robustness.svg"});
  if (models_out) {
    models_out->corld_clf = std::move(fused);
    models_out->image_clf = std::move(image_only);
    models_out->net = std::move(net);
  }
  return rows;
}

MetricsReport eval_classifier_to_dir(const LoadedClassifier& model, const Dataset& data,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<int> test_idx = data.indices_of(Split::Test);
  if (test_idx.empty()) fail("eval", "dataset has no test split");
  std::vector<int> test_labels = labels_at(data, test_idx);
  const CorldNet* net = model.has_net && !model.image_only ? &model.net : nullptr;
  Tensor logits = classifier_logits(model.clf, net, data, test_idx, model.image_only);
  MetricsReport m = compute_metrics(logits, test_labels);

  std::ofstream os(out_dir + "/metrics.csv");
  if (!os) fail("eval", "cannot open " + out_dir + "/metrics.csv for writing");
  os << "# CORLD-CSV v1 metrics\n";
  os << "n," << kMetricsHeader << "\n";
  os << m.n << "," << metrics_fields(m) << "\n";
  os.close();

  std::ofstream cs(out_dir + "/confusion.csv");
  cs << "# CORLD-CSV v1 confusion\n";
  cs << "true_class";
  for (int c = 0; c < data.num_classes; ++c) cs << ",pred_" << c;
  cs << "\n";
  for (int t = 0; t < data.num_classes; ++t) {
    cs << t;
    for (int c = 0; c < data.num_classes; ++c)
      cs << "," << m.confusion[static_cast<size_t>(t)][static_cast<size_t>(c)];
    cs << "\n";
  }
  cs.close();
  write_run_manifest(out_dir, "eval", {}, {"metrics.csv", "confusion.csv"});
  return m;
}

}  // namespace corld
