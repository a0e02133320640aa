#include "core/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

namespace corld {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> slice(const std::vector<int>& v, size_t lo, size_t hi) {
  return {v.begin() + static_cast<int64_t>(lo), v.begin() + static_cast<int64_t>(hi)};
}

std::vector<int> labels_of(const Dataset& data, const std::vector<int>& rows) {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i)
    out[i] = data.labels[static_cast<size_t>(rows[i])];
  return out;
}

const char* template_mode_name(TemplateMode m) {
  return m == TemplateMode::Multi ? "multi" : "single";
}

TemplateMode template_mode_from(const std::string& s) {
  if (s == "multi") return TemplateMode::Multi;
  if (s == "single") return TemplateMode::Single;
  fail("training", "unknown template_mode '" + s + "'");
}

struct BatchLoss {
  double shape = 0.0, csr = 0.0, total = 0.0;
  bool csr_active = false;
};

BatchLoss corld_batch_loss(Tape& tape, CorldNet& net, const Dataset& data,
                           const std::vector<int>& rows, const TrainConfig& cfg,
                           Tensor* loss_out, bool* warned_degenerate) {
  Tensor images = gather_images(data, rows, cfg.float_mode);
  Tensor templates = gather_templates(data, rows, cfg.template_mode, cfg.float_mode);
  Tensor input = assemble_net_input(data, rows, cfg.template_in_input, cfg.float_mode);
  std::vector<int> labels = labels_of(data, rows);

  CorldNet::Forward fwd = net.forward(tape, input);
  Tensor shape = shape_loss(tape, images, templates, fwd.velocities, cfg.weights, cfg.exp_steps);
  BatchLoss out;
  out.shape = shape.item();
  Tensor total = shape;
  double beta = cfg.contrastive_on ? cfg.weights.beta : 0.0;
  if (beta > 0.0) {
    if (rows.size() >= 2 && batch_has_positive_pair(labels)) {
      Tensor csr = csr_loss(tape, fwd.projected, labels, cfg.weights.tau, cfg.candidate_set);
      out.csr = csr.item();
      out.csr_active = true;
      total = tape.add(shape, tape.scalar_mul(csr, beta));
    } else if (warned_degenerate && !*warned_degenerate) {
      std::cerr << "training: warning: degenerate contrastive batch (no positive pair), "
                   "skipping the contrastive term for such batches\n";
      *warned_degenerate = true;
    }
  }
  out.total = total.item();
  if (loss_out) *loss_out = total;
  return out;
}

// mean batch losses over fixed-order rows, no parameter updates
BatchLoss eval_corld_loss(CorldNet& net, const Dataset& data, const std::vector<int>& rows,
                          const TrainConfig& cfg) {
  BatchLoss acc;
  size_t n = rows.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
    size_t stop = std::min(n, start + static_cast<size_t>(cfg.batch_size));
    std::vector<int> batch = slice(rows, start, stop);
    Tape tape;
    BatchLoss b = corld_batch_loss(tape, net, data, batch, cfg, nullptr, nullptr);
    double w = static_cast<double>(batch.size());
    acc.shape += b.shape * w;
    acc.csr += b.csr * w;
    acc.total += b.total * w;
  }
  if (n) {
    acc.shape /= static_cast<double>(n);
    acc.csr /= static_cast<double>(n);
    acc.total /= static_cast<double>(n);
  }
  return acc;
}

int argmax_row(const Tensor& logits, int row) {
  const int C = logits.dim(1);
  int best = 0;
  double bv = logits.data()[static_cast<size_t>(row) * C];
  for (int c = 1; c < C; ++c) {
    double v = logits.data()[static_cast<size_t>(row) * C + c];
    if (v > bv) {
      bv = v;
      best = c;
    }
  }
  return best;
}

double accuracy_of(const Tensor& logits, const std::vector<int>& labels) {
  int hit = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (argmax_row(logits, static_cast<int>(i)) == labels[i]) ++hit;
  return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

void assign_params(ParamSet& dst, const ParamSet& src) {
  for (auto& [name, t] : dst.items) {
    const Tensor* s = src.find(name);
    if (!s) fail("training", "checkpoint is missing parameter " + name);
    if (s->shape() != t.shape()) fail("training", "checkpoint shape mismatch for " + name);
    t.data() = s->data();
  }
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  validate_weights(cfg.weights);
  if (cfg.epochs_corld < 1 || cfg.epochs_clf < 1)
    fail_invalid("training", "epoch counts must be >= 1");
  if (cfg.batch_size < 1) fail_invalid("training", "batch_size must be >= 1");
  if (cfg.contrastive_on && cfg.batch_size < 2)
    fail_invalid("training", "contrastive training needs batch_size >= 2");
  if (cfg.eps_corld < 0.0 || cfg.eps_clf < 0.0)
    fail_invalid("training", "stopping thresholds must be >= 0");
  if (cfg.eta0 <= 0.0) fail_invalid("training", "eta0 must be > 0");
  if (cfg.exp_steps < 4 || cfg.exp_steps > 10)
    fail_invalid("training", "exp_steps must lie in [4, 10]");
}

bool early_stop_window(const std::vector<double>& losses, double eps) {
  constexpr size_t kWindow = 5;
  if (eps <= 0.0 || losses.size() < kWindow + 1) return false;
  double cur = 0.0, prev = 0.0;
  for (size_t i = losses.size() - kWindow; i < losses.size(); ++i) cur += losses[i];
  for (size_t i = losses.size() - kWindow - 1; i < losses.size() - 1; ++i) prev += losses[i];
  return std::abs(cur - prev) / static_cast<double>(kWindow) < eps;
}

void write_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream os(path);
  if (!os) fail("training", "cannot open " + path + " for writing");
  os << "# CORLD-CSV v1 train_report\n";
  os << "epoch,lr,shape_loss,csr_loss,total,val_metric,seconds\n";
  for (const EpochStats& e : report.epochs)
    os << e.epoch << "," << fmt_g(e.lr) << "," << fmt_g(e.shape) << "," << fmt_g(e.csr) << ","
       << fmt_g(e.total) << "," << fmt_g(e.val_metric) << "," << fmt_g(e.seconds) << "\n";
}

Tensor gather_images(const Dataset& data, const std::vector<int>& rows, Dtype dt) {
  const int hw = data.height() * data.width();
  Tensor out({static_cast<int>(rows.size()), 1, data.height(), data.width()}, dt);
  for (size_t r = 0; r < rows.size(); ++r)
    std::copy(data.images.data().begin() + static_cast<int64_t>(rows[r]) * hw,
              data.images.data().begin() + static_cast<int64_t>(rows[r] + 1) * hw,
              out.data().begin() + static_cast<int64_t>(r) * hw);
  return out;
}

Tensor gather_templates(const Dataset& data, const std::vector<int>& rows, TemplateMode mode,
                        Dtype dt) {
  Tensor out({static_cast<int>(rows.size()), 1, data.height(), data.width()}, dt);
  for (size_t r = 0; r < rows.size(); ++r)
    copy_template_row(data, mode, data.labels[static_cast<size_t>(rows[r])], out,
                      static_cast<int>(r));
  return out;
}

Tensor assemble_net_input(const Dataset& data, const std::vector<int>& rows, bool with_template,
                          Dtype dt) {
  Tensor images = gather_images(data, rows, dt);
  if (!with_template) return images;
  // the template channel is the global mean template: label-free, so the
  // same protocol works at test time
  const int hw = data.height() * data.width();
  Tensor out({static_cast<int>(rows.size()), 2, data.height(), data.width()}, dt);
  for (size_t r = 0; r < rows.size(); ++r) {
    std::copy(images.data().begin() + static_cast<int64_t>(r) * hw,
              images.data().begin() + static_cast<int64_t>(r + 1) * hw,
              out.data().begin() + static_cast<int64_t>(r) * 2 * hw);
    for (int i = 0; i < hw; ++i)
      out.data()[static_cast<size_t>(r) * 2 * hw + hw + i] =
          round_mode(dt, data.mean_template.data()[static_cast<size_t>(i)]);
  }
  return out;
}

TrainReport train_corld(CorldNet& net, const Dataset& data, const TrainConfig& cfg,
                        const std::string& out_dir) {
  validate_config(cfg);
  if (net.arch.in_channels != (cfg.template_in_input ? 2 : 1))
    fail_invalid("training", "net input channels do not match template_in_input flag");
  if (net.arch.image_size != data.height() || data.height() != data.width())
    fail_invalid("training", "net image size does not match dataset");
  for (int y : data.labels)
    if (y >= data.templates.dim(0))
      fail("training", "dataset lacks a template for class " + std::to_string(y));

  std::filesystem::create_directories(out_dir);
  const std::string ckpt = out_dir + "/corld.ckpt";
  Rng rng(derive_seed(cfg.seed, "train_corld"));
  Adam opt(cfg.weights.weight_decay);
  std::vector<int> train_idx = data.indices_of(Split::Train);
  std::vector<int> val_idx = data.indices_of(Split::Val);
  if (train_idx.empty() || val_idx.empty())
    fail("training", "dataset needs non-empty train and val splits");

  TrainReport rep;
  rep.checkpoint_path = ckpt;
  rep.best_val = std::numeric_limits<double>::infinity();
  std::vector<double> train_totals;
  bool warned_degenerate = false;
  std::vector<std::string> flags = {
      std::string("template_in_input=") + (cfg.template_in_input ? "1" : "0"),
      std::string("template_mode=") + template_mode_name(cfg.template_mode),
      "exp_steps=" + std::to_string(cfg.exp_steps),
  };

  for (int epoch = 1; epoch <= cfg.epochs_corld; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = cosine_lr(cfg.eta0, epoch - 1, cfg.epochs_corld);
    rng.shuffle(train_idx);
    double sum_shape = 0.0, sum_csr = 0.0, sum_total = 0.0;
    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(train_idx.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int> rows = slice(train_idx, start, stop);
      Tape tape;
      Tensor loss;
      BatchLoss b = corld_batch_loss(tape, net, data, rows, cfg, &loss, &warned_degenerate);
      tape.backward(loss);
      opt.step(net.params, lr);
      double w = static_cast<double>(rows.size());
      sum_shape += b.shape * w;
      sum_csr += b.csr * w;
      sum_total += b.total * w;
    }
    double n = static_cast<double>(train_idx.size());
    BatchLoss val = eval_corld_loss(net, data, val_idx, cfg);

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.shape = sum_shape / n;
    st.csr = sum_csr / n;
    st.total = sum_total / n;
    st.val_metric = val.total;
    st.seconds = seconds_since(t0);
    rep.epochs.push_back(st);
    train_totals.push_back(st.total);

    if (val.total < rep.best_val) {
      rep.best_val = val.total;
      rep.best_epoch = epoch;
      save_params_checkpoint(ckpt, net.params, net.arch, flags);
    }
    if (early_stop_window(train_totals, cfg.eps_corld)) {
      rep.stopped_early = true;
      break;
    }
  }

  ParamSet best = load_params_checkpoint(ckpt, nullptr, nullptr);
  assign_params(net.params, best);
  double total_s = 0.0;
  for (const EpochStats& e : rep.epochs) total_s += e.seconds;
  rep.mean_epoch_seconds = rep.epochs.empty() ? 0.0 : total_s / rep.epochs.size();
  return rep;
}

Tensor classifier_logits(const BoostedClassifier& clf, const CorldNet* net, const Dataset& data,
                         const std::vector<int>& rows, bool image_only,
                         const Tensor* images_override) {
  const int C = clf.arch.num_classes;
  Dtype dt = clf.params.items.front().second.dtype();
  Tensor all({static_cast<int>(rows.size()), C}, dt);
  const int hw = data.height() * data.width();
  constexpr size_t kBatch = 32;
  for (size_t start = 0; start < rows.size(); start += kBatch) {
    size_t stop = std::min(rows.size(), start + kBatch);
    std::vector<int> batch = slice(rows, start, stop);
    Tensor images;
    if (images_override) {
      images = Tensor({static_cast<int>(batch.size()), 1, data.height(), data.width()}, dt);
      for (size_t r = 0; r < batch.size(); ++r)
        std::copy(
            images_override->data().begin() + static_cast<int64_t>(start + r) * hw,
            images_override->data().begin() + static_cast<int64_t>(start + r + 1) * hw,
            images.data().begin() + static_cast<int64_t>(r) * hw);
    } else {
      images = gather_images(data, batch, dt);
    }
    Tensor net_input;
    const Tensor* net_input_ptr = nullptr;
    if (!image_only && net && net->arch.in_channels == 2) {
      net_input = assemble_net_input(data, batch, true, dt);
      net_input_ptr = &net_input;
    }
    Tape tape;
    Tensor logits = clf.forward(tape, net, images, net_input_ptr, image_only);
    std::copy(logits.data().begin(), logits.data().end(),
              all.data().begin() + static_cast<int64_t>(start) * C);
  }
  return all;
}

TrainReport train_classifier(BoostedClassifier& clf, CorldNet* net, const Dataset& data,
                             const TrainConfig& cfg, const std::string& out_dir,
                             bool image_only) {
  validate_config(cfg);
  if (!image_only && !net) fail_invalid("training", "fusion training needs a shape network");
  if (clf.arch.image_size != data.height())
    fail_invalid("training", "classifier image size does not match dataset");
  for (Split s : {Split::Train, Split::Val}) {
    std::vector<int> idx = data.indices_of(s);
    std::vector<char> seen(static_cast<size_t>(data.num_classes), 0);
    for (int i : idx) seen[static_cast<size_t>(data.labels[static_cast<size_t>(i)])] = 1;
    for (int c = 0; c < data.num_classes; ++c)
      if (!seen[static_cast<size_t>(c)])
        fail("training", std::string("class ") + std::to_string(c) + " absent from " +
                             split_name(s) + " split");
  }

  std::filesystem::create_directories(out_dir);
  const std::string ckpt = out_dir + "/clf.ckpt";
  Rng rng(derive_seed(cfg.seed, "train_clf"));
  Adam opt(cfg.weights.weight_decay);

  const bool uses_net = !image_only;
  if (uses_net) net->params.set_requires_grad(cfg.finetune_shape);
  ParamSet trainable;
  trainable.items = clf.params.items;
  if (uses_net && cfg.finetune_shape)
    trainable.items.insert(trainable.items.end(), net->params.items.begin(),
                           net->params.items.end());

  auto save_best = [&]() {
    ParamSet everything;
    everything.items = clf.params.items;
    if (uses_net)
      for (const auto& [name, t] : net->params.items)
        everything.items.emplace_back("net." + name, t);
    std::vector<std::string> flags = {
        std::string("image_only=") + (image_only ? "1" : "0"),
        std::string("fuse_source=") +
            (clf.fuse == FuseSource::Projected ? "projected" : "latent"),
        std::string("has_net=") + (uses_net ? "1" : "0"),
        std::string("net_template_input=") +
            ((uses_net && net->arch.in_channels == 2) ? "1" : "0"),
    };
    save_params_checkpoint(ckpt, everything, clf.arch, flags);
  };

  std::vector<int> train_idx = data.indices_of(Split::Train);
  std::vector<int> val_idx = data.indices_of(Split::Val);
  std::vector<int> val_labels = labels_of(data, val_idx);

  TrainReport rep;
  rep.checkpoint_path = ckpt;
  rep.best_val = -1.0;
  std::vector<double> train_losses;

  for (int epoch = 1; epoch <= cfg.epochs_clf; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = cosine_lr(cfg.eta0, epoch - 1, cfg.epochs_clf);
    rng.shuffle(train_idx);
    double sum_loss = 0.0;
    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(train_idx.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int> rows = slice(train_idx, start, stop);
      Tensor images = gather_images(data, rows, cfg.float_mode);
      Tensor net_input;
      const Tensor* net_input_ptr = nullptr;
      if (uses_net && net->arch.in_channels == 2) {
        net_input = assemble_net_input(data, rows, true, cfg.float_mode);
        net_input_ptr = &net_input;
      }
      Tape tape;
      Tensor logits = clf.forward(tape, uses_net ? net : nullptr, images, net_input_ptr,
                                  image_only);
      Tensor loss = clf_loss(tape, logits, labels_of(data, rows), cfg.weights.gamma);
      tape.backward(loss);
      opt.step(trainable, lr);
      sum_loss += loss.item() * static_cast<double>(rows.size());
    }
    double train_loss = sum_loss / static_cast<double>(train_idx.size());
    Tensor val_logits = classifier_logits(clf, uses_net ? net : nullptr, data, val_idx,
                                          image_only);
    double val_acc = accuracy_of(val_logits, val_labels);

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.total = train_loss;
    st.val_metric = val_acc;
    st.seconds = seconds_since(t0);
    rep.epochs.push_back(st);
    train_losses.push_back(train_loss);

    if (val_acc > rep.best_val) {
      rep.best_val = val_acc;
      rep.best_epoch = epoch;
      save_best();
    }
    if (early_stop_window(train_losses, cfg.eps_clf)) {
      rep.stopped_early = true;
      break;
    }
  }

  ParamSet best = load_params_checkpoint(ckpt, nullptr, nullptr);
  assign_params(clf.params, best);
  if (uses_net) {
    ParamSet net_best;
    for (auto& [name, t] : best.items)
      if (name.rfind("net.", 0) == 0) net_best.items.emplace_back(name.substr(4), t);
    assign_params(net->params, net_best);
    net->params.set_requires_grad(true);
  }
  double total_s = 0.0;
  for (const EpochStats& e : rep.epochs) total_s += e.seconds;
  rep.mean_epoch_seconds = rep.epochs.empty() ? 0.0 : total_s / rep.epochs.size();
  return rep;
}

CorldNet load_corld_checkpoint(const std::string& path, TrainConfig* flags_out) {
  ArchDescriptor arch;
  std::vector<std::string> header;
  ParamSet params = load_params_checkpoint(path, &arch, &header);
  if (flags_out) {
    for (const std::string& line : header) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      if (k == "template_in_input") flags_out->template_in_input = v == "1";
      else if (k == "template_mode") flags_out->template_mode = template_mode_from(v);
      else if (k == "exp_steps") flags_out->exp_steps = std::stoi(v);
    }
  }
  CorldNet net;
  net.arch = arch;
  net.params = std::move(params);
  return net;
}

LoadedClassifier load_classifier_checkpoint(const std::string& path) {
  ArchDescriptor arch;
  std::vector<std::string> header;
  ParamSet all = load_params_checkpoint(path, &arch, &header);
  LoadedClassifier out;
  out.clf.arch = arch;
  out.net.arch = arch;
  for (const std::string& line : header) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "image_only") out.image_only = v == "1";
    else if (k == "has_net") out.has_net = v == "1";
    else if (k == "fuse_source")
      out.clf.fuse = v == "latent" ? FuseSource::Latent : FuseSource::Projected;
    else if (k == "net_template_input" && v == "1")
      out.net.arch.in_channels = 2;
  }
  for (auto& [name, t] : all.items) {
    if (name.rfind("net.", 0) == 0)
      out.net.params.items.emplace_back(name.substr(4), t);
    else
      out.clf.params.items.emplace_back(name, t);
  }
  return out;
}

}  // namespace corld
