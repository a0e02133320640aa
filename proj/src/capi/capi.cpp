#include "corld/corld.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "core/config.hpp"
#include "core/harness.hpp"
#include "core/selftest.hpp"

struct corld_ctx {
  std::string last_error;
};

namespace {

using namespace corld;

corld_status classify_error(const std::string& msg) {
  if (msg.rfind("serialize:", 0) == 0 || msg.rfind("data:", 0) == 0) {
    if (msg.find("cannot open") != std::string::npos ||
        msg.find("truncated") != std::string::npos ||
        msg.find("checksum") != std::string::npos ||
        msg.find("version mismatch") != std::string::npos)
      return CORLD_E_IO;
  }
  return CORLD_E_RUNTIME;
}

template <typename Fn>
corld_status guarded(corld_ctx* ctx, Fn&& fn) {
  if (!ctx) return CORLD_E_INVALID;
  ctx->last_error.clear();
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    ctx->last_error = e.what();
    return CORLD_E_INVALID;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return classify_error(ctx->last_error);
  } catch (...) {
    ctx->last_error = "unknown error";
    return CORLD_E_RUNTIME;
  }
}

corld_status require_args(corld_ctx* ctx, bool ok, const char* what) {
  if (ok) return CORLD_OK;
  if (ctx) ctx->last_error = std::string("invalid argument: ") + what;
  return CORLD_E_INVALID;
}

TrainConfig to_config(const corld_train_opts& o) {
  TrainConfig cfg;
  cfg.eta0 = o.eta0;
  cfg.weights.sigma = o.sigma;
  cfg.weights.delta = o.delta;
  cfg.weights.beta = o.beta;
  cfg.weights.gamma = o.gamma;
  cfg.weights.tau = o.tau;
  cfg.weights.weight_decay = o.weight_decay;
  cfg.eps_corld = o.eps_corld;
  cfg.eps_clf = o.eps_clf;
  cfg.epochs_corld = o.epochs_corld;
  cfg.epochs_clf = o.epochs_clf;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.candidate_set = o.candidate_set == CORLD_CANDIDATE_DIFFERENT_CLASS
                          ? CandidateSet::DifferentClassOnly
                          : CandidateSet::AllOthers;
  cfg.fuse_source = o.fuse_source == CORLD_FUSE_LATENT ? FuseSource::Latent
                                                       : FuseSource::Projected;
  cfg.template_mode = o.template_mode == CORLD_TEMPLATE_SINGLE ? TemplateMode::Single
                                                               : TemplateMode::Multi;
  cfg.float_mode = o.float_mode == CORLD_F64 ? Dtype::F64 : Dtype::F32;
  cfg.finetune_shape = o.finetune_shape != 0;
  cfg.contrastive_on = o.contrastive_on != 0;
  cfg.template_in_input = o.template_in_input != 0;
  cfg.exp_steps = o.exp_steps;
  validate_config(cfg);
  return cfg;
}

void from_config(const TrainConfig& cfg, corld_train_opts& o) {
  o.eta0 = cfg.eta0;
  o.sigma = cfg.weights.sigma;
  o.delta = cfg.weights.delta;
  o.beta = cfg.weights.beta;
  o.gamma = cfg.weights.gamma;
  o.tau = cfg.weights.tau;
  o.weight_decay = cfg.weights.weight_decay;
  o.eps_corld = cfg.eps_corld;
  o.eps_clf = cfg.eps_clf;
  o.epochs_corld = cfg.epochs_corld;
  o.epochs_clf = cfg.epochs_clf;
  o.batch_size = cfg.batch_size;
  o.seed = cfg.seed;
  o.candidate_set = cfg.candidate_set == CandidateSet::DifferentClassOnly
                        ? CORLD_CANDIDATE_DIFFERENT_CLASS
                        : CORLD_CANDIDATE_ALL_OTHERS;
  o.fuse_source = cfg.fuse_source == FuseSource::Latent ? CORLD_FUSE_LATENT
                                                        : CORLD_FUSE_PROJECTED;
  o.template_mode = cfg.template_mode == TemplateMode::Single ? CORLD_TEMPLATE_SINGLE
                                                              : CORLD_TEMPLATE_MULTI;
  o.float_mode = cfg.float_mode == Dtype::F64 ? CORLD_F64 : CORLD_F32;
  o.finetune_shape = cfg.finetune_shape ? 1 : 0;
  o.contrastive_on = cfg.contrastive_on ? 1 : 0;
  o.template_in_input = cfg.template_in_input ? 1 : 0;
  o.exp_steps = cfg.exp_steps;
}

ArchDescriptor arch_for(const Dataset& data, const TrainConfig& cfg) {
  ArchDescriptor arch;
  arch.in_channels = cfg.template_in_input ? 2 : 1;
  arch.image_size = data.height();
  arch.num_classes = data.num_classes;
  return arch;
}

}  // namespace

extern "C" {

const char* corld_version(void) { return "corld 1.0.0"; }

corld_status corld_ctx_create(corld_ctx** out_ctx) {
  if (!out_ctx) return CORLD_E_INVALID;
  *out_ctx = new (std::nothrow) corld_ctx();
  return *out_ctx ? CORLD_OK : CORLD_E_RUNTIME;
}

void corld_ctx_destroy(corld_ctx* ctx) { delete ctx; }

const char* corld_last_error(const corld_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

void corld_gen_spec_init(corld_gen_spec* spec) {
  if (!spec) return;
  GenSpec d;
  spec->classes = d.classes;
  spec->per_class = d.per_class;
  spec->size = d.size;
  spec->seed = d.seed;
  spec->deform_amplitude = d.deform_amplitude;
  spec->noise_std = d.noise_std;
}

corld_status corld_gen_data(corld_ctx* ctx, const corld_gen_spec* spec, const char* out_dir) {
  if (corld_status s = require_args(ctx, spec && out_dir, "gen_data(spec, out_dir)"); s)
    return s;
  return guarded(ctx, [&]() {
    GenSpec g;
    g.classes = spec->classes;
    g.per_class = spec->per_class;
    g.size = spec->size;
    g.seed = spec->seed;
    g.deform_amplitude = spec->deform_amplitude;
    g.noise_std = spec->noise_std;
    // the dataset manifest carries the spec, seed and per-file checksums, so
    // it doubles as the run manifest for this command
    Dataset d = gen_synthetic(g);
    save_dataset(d, out_dir);
    return CORLD_OK;
  });
}

void corld_train_opts_init(corld_train_opts* opts) {
  if (!opts) return;
  from_config(TrainConfig{}, *opts);
}

corld_status corld_train_opts_load(corld_ctx* ctx, const char* config_path,
                                   corld_train_opts* opts) {
  if (corld_status s = require_args(ctx, config_path && opts, "opts_load(path, opts)"); s)
    return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    load_train_config(config_path, cfg);
    from_config(cfg, *opts);
    return CORLD_OK;
  });
}

corld_status corld_train_opts_set(corld_ctx* ctx, const char* key, const char* value,
                                  corld_train_opts* opts) {
  if (corld_status s = require_args(ctx, key && value && opts, "opts_set(key, value, opts)"); s)
    return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    apply_config_kv(cfg, key, value);
    validate_config(cfg);
    from_config(cfg, *opts);
    return CORLD_OK;
  });
}

corld_status corld_train(corld_ctx* ctx, const char* data_dir, const corld_train_opts* opts,
                         const char* out_dir) {
  if (corld_status s = require_args(ctx, data_dir && opts && out_dir, "train(data, opts, out)");
      s)
    return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    Dataset data = load_dataset(data_dir);
    Rng rng(derive_seed(cfg.seed, "net_init"));
    CorldNet net = CorldNet::init(arch_for(data, cfg), rng, cfg.float_mode);
    TrainReport rep = train_corld(net, data, cfg, out_dir);
    write_report_csv(std::string(out_dir) + "/train_report.csv", rep);
    write_run_manifest(out_dir, "train", config_to_kv(cfg),
                       {"corld.ckpt", "train_report.csv"});
    return CORLD_OK;
  });
}

corld_status corld_train_clf(corld_ctx* ctx, const char* data_dir, const char* corld_model_dir,
                             int32_t image_only, const corld_train_opts* opts,
                             const char* out_dir) {
  if (corld_status s = require_args(ctx, data_dir && opts && out_dir, "train_clf args"); s)
    return s;
  if (corld_status s =
          require_args(ctx, image_only || corld_model_dir,
                       "train_clf needs a corld model dir unless image_only is set");
      s)
    return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    Dataset data = load_dataset(data_dir);
    CorldNet net;
    CorldNet* net_ptr = nullptr;
    if (!image_only) {
      net = load_corld_checkpoint(std::string(corld_model_dir) + "/corld.ckpt", &cfg);
      net_ptr = &net;
    }
    ArchDescriptor arch = net_ptr ? net.arch : arch_for(data, cfg);
    Rng rng(derive_seed(cfg.seed, "clf_init"));
    BoostedClassifier clf = BoostedClassifier::init(arch, cfg.fuse_source, rng, cfg.float_mode);
    TrainReport rep = train_classifier(clf, net_ptr, data, cfg, out_dir, image_only != 0);
    write_report_csv(std::string(out_dir) + "/clf_report.csv", rep);
    write_run_manifest(out_dir, "train-clf", config_to_kv(cfg), {"clf.ckpt", "clf_report.csv"});
    return CORLD_OK;
  });
}

corld_status corld_eval(corld_ctx* ctx, const char* data_dir, const char* model_dir,
                        const char* out_dir) {
  if (corld_status s = require_args(ctx, data_dir && model_dir && out_dir, "eval args"); s)
    return s;
  return guarded(ctx, [&]() {
    Dataset data = load_dataset(data_dir);
    LoadedClassifier model = load_classifier_checkpoint(std::string(model_dir) + "/clf.ckpt");
    eval_classifier_to_dir(model, data, out_dir);
    return CORLD_OK;
  });
}

corld_status corld_run_ablation(corld_ctx* ctx, const char* data_dir,
                                const corld_train_opts* opts, const char* out_dir) {
  if (corld_status s = require_args(ctx, data_dir && opts && out_dir, "ablation args"); s)
    return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    Dataset data = load_dataset(data_dir);
    run_ablation(data, cfg, out_dir);
    return CORLD_OK;
  });
}

corld_status corld_run_sweep(corld_ctx* ctx, int32_t kind, const char* data_dir,
                             const corld_train_opts* opts, const char* out_dir) {
  if (corld_status s = require_args(ctx, data_dir && opts && out_dir, "sweep args"); s) return s;
  return guarded(ctx, [&]() {
    TrainConfig cfg = to_config(*opts);
    Dataset data = load_dataset(data_dir);
    switch (kind) {
      case CORLD_SWEEP_TAU:
        run_sweep_tau(data, cfg, out_dir);
        break;
      case CORLD_SWEEP_ROBUSTNESS:
        run_sweep_robustness(data, cfg, out_dir);
        break;
      case CORLD_SWEEP_TEMPLATE:
        run_sweep_template(data, cfg, out_dir);
        break;
      default:
        fail_invalid("cli", "unknown sweep kind " + std::to_string(kind));
    }
    return CORLD_OK;
  });
}

corld_status corld_selftest(corld_ctx* ctx, int32_t quick, int32_t* out_failures) {
  return guarded(ctx, [&]() {
    SuiteResult g = selftest_gradients(std::cout, quick != 0);
    SuiteResult d = selftest_deform(std::cout, quick != 0);
    int failures = g.failures + d.failures;
    if (out_failures) *out_failures = failures;
    if (failures) {
      ctx->last_error = std::to_string(failures) + " selftest check(s) failed";
      return CORLD_E_RUNTIME;
    }
    return CORLD_OK;
  });
}

}  // extern "C"
