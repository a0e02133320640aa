// corld command-line tool. Talks to the core exclusively through the C API
// in corld/corld.h; argument parsing and exit-code policy live here.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "corld/corld.h"

namespace {

struct CtxGuard {
  corld_ctx* ctx = nullptr;
  CtxGuard() { corld_ctx_create(&ctx); }
  ~CtxGuard() { corld_ctx_destroy(ctx); }
};

int finish(corld_ctx* ctx, corld_status status, const char* command) {
  if (status == CORLD_OK) return 0;
  std::fprintf(stderr, "corld %s: %s\n", command, corld_last_error(ctx));
  return status == CORLD_E_INVALID ? 1 : 2;
}

// flag overrides applied in command-line order on top of config-file values
struct OptsBuilder {
  corld_train_opts opts;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string config_path;

  OptsBuilder() { corld_train_opts_init(&opts); }

  corld_status resolve(corld_ctx* ctx) {
    if (!config_path.empty()) {
      corld_status s = corld_train_opts_load(ctx, config_path.c_str(), &opts);
      if (s != CORLD_OK) return s;
    }
    for (const auto& [k, v] : overrides) {
      corld_status s = corld_train_opts_set(ctx, k.c_str(), v.c_str(), &opts);
      if (s != CORLD_OK) return s;
    }
    return CORLD_OK;
  }
};

void add_common_train_flags(CLI::App* cmd, OptsBuilder& b) {
  cmd->add_option("--config", b.config_path, "CORLD-CFG v1 key=value file");
  auto push = [&b](const std::string& key) {
    return [&b, key](const std::string& v) { b.overrides.emplace_back(key, v); };
  };
  cmd->add_option_function<std::string>("--seed", push("seed"), "RNG seed (u64)");
  cmd->add_option_function<std::string>("--float-mode", push("float_mode"), "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option_function<std::string>("--epochs", push("epochs_corld"),
                                        "representation-phase epochs");
  cmd->add_option_function<std::string>("--epochs-clf", push("epochs_clf"),
                                        "classifier-phase epochs");
  cmd->add_option_function<std::string>("--batch", push("batch_size"), "batch size");
  cmd->add_option_function<std::string>("--tau", push("tau"), "contrastive temperature");
  cmd->add_option_function<std::string>("--beta", push("beta"), "contrastive weight");
  cmd->add_option_function<std::string>("--set", [&b](const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value");
        b.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      },
      "any config key=value override")
      ->take_all();
}

std::string yesno_to_bool(const std::string& v) { return v == "yes" ? "1" : "0"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoRLD: contrastive representation learning of deformable shapes"};
  app.require_subcommand(1);
  app.set_help_flag("-h,--help", "print help");

  CtxGuard guard;
  corld_ctx* ctx = guard.ctx;
  if (!ctx) {
    std::fprintf(stderr, "corld: failed to create context\n");
    return 2;
  }

  // gen-data
  corld_gen_spec gen;
  corld_gen_spec_init(&gen);
  std::string gen_out;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic shape dataset");
  gen_cmd->add_option("--classes", gen.classes, "number of classes (2-4)");
  gen_cmd->add_option("--per-class", gen.per_class, "samples per class");
  gen_cmd->add_option("--size", gen.size, "image size (multiple of 8)");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("--amplitude", gen.deform_amplitude, "deformation amplitude in px");
  gen_cmd->add_option("--noise-std", gen.noise_std, "pixel noise std");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();

  // train
  OptsBuilder train_b;
  std::string train_data, train_out;
  CLI::App* train_cmd = app.add_subcommand("train", "phase-1 representation training");
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd
      ->add_option_function<std::string>(
          "--template-input",
          [&train_b](const std::string& v) {
            train_b.overrides.emplace_back("template_in_input", yesno_to_bool(v));
          },
          "feed the mean template as a second input channel")
      ->check(CLI::IsMember({"yes", "no"}));
  train_cmd
      ->add_option_function<std::string>(
          "--contrastive",
          [&train_b](const std::string& v) {
            train_b.overrides.emplace_back("contrastive_on", yesno_to_bool(v));
          },
          "enable the contrastive objective")
      ->check(CLI::IsMember({"yes", "no"}));
  train_cmd
      ->add_option_function<std::string>(
          "--template-mode",
          [&train_b](const std::string& v) {
            train_b.overrides.emplace_back("template_mode", v);
          },
          "loss-side templates: per-class or global mean")
      ->check(CLI::IsMember({"single", "multi"}));
  add_common_train_flags(train_cmd, train_b);

  // train-clf
  OptsBuilder clf_b;
  std::string clf_data, clf_out, clf_model;
  bool clf_image_only = false, clf_finetune = false;
  CLI::App* clf_cmd = app.add_subcommand("train-clf", "phase-2 boosted classifier training");
  clf_cmd->add_option("--data", clf_data, "dataset directory")->required();
  clf_cmd->add_option("--out", clf_out, "output directory")->required();
  clf_cmd->add_option("--corld", clf_model, "directory holding corld.ckpt from `train`");
  clf_cmd->add_flag("--image-only", clf_image_only, "intensity-only baseline (no shape branch)");
  clf_cmd->add_flag("--finetune-shape", clf_finetune,
                    "also update the shape network during phase 2");
  add_common_train_flags(clf_cmd, clf_b);

  // eval
  std::string eval_data, eval_model, eval_out;
  CLI::App* eval_cmd = app.add_subcommand("eval", "test-split metrics of a trained classifier");
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--model", eval_model, "directory holding clf.ckpt")->required();
  eval_cmd->add_option("--out", eval_out, "output directory")->required();

  // harnesses
  OptsBuilder ablate_b;
  std::string ablate_data, ablate_out;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "2x2 grid: template input x contrastive objective");
  ablate_cmd->add_option("--data", ablate_data, "dataset directory")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  add_common_train_flags(ablate_cmd, ablate_b);

  struct SweepCmd {
    OptsBuilder b;
    std::string data, out;
    int32_t kind = 0;
  };
  SweepCmd tau_sweep, robustness, template_sweep;
  tau_sweep.kind = CORLD_SWEEP_TAU;
  robustness.kind = CORLD_SWEEP_ROBUSTNESS;
  template_sweep.kind = CORLD_SWEEP_TEMPLATE;
  CLI::App* tau_cmd = app.add_subcommand("sweep-tau", "temperature sweep with probe accuracy");
  CLI::App* rob_cmd =
      app.add_subcommand("robustness", "universal-noise curves: image-only vs fused model");
  CLI::App* tpl_cmd = app.add_subcommand("sweep-template", "single- vs multi-template training");
  for (auto& [cmd, sweep] : std::vector<std::pair<CLI::App*, SweepCmd*>>{
           {tau_cmd, &tau_sweep}, {rob_cmd, &robustness}, {tpl_cmd, &template_sweep}}) {
    cmd->add_option("--data", sweep->data, "dataset directory")->required();
    cmd->add_option("--out", sweep->out, "output directory")->required();
    add_common_train_flags(cmd, sweep->b);
  }

  // selftest
  bool quick = false;
  CLI::App* selftest_cmd =
      app.add_subcommand("selftest", "gradient-check and deformation property suites");
  selftest_cmd->add_flag("--quick", quick, "reduced trial counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  if (gen_cmd->parsed()) return finish(ctx, corld_gen_data(ctx, &gen, gen_out.c_str()), "gen-data");

  if (train_cmd->parsed()) {
    if (corld_status s = train_b.resolve(ctx); s != CORLD_OK) return finish(ctx, s, "train");
    return finish(ctx, corld_train(ctx, train_data.c_str(), &train_b.opts, train_out.c_str()),
                  "train");
  }
  if (clf_cmd->parsed()) {
    if (clf_finetune) clf_b.overrides.emplace_back("finetune_shape", "1");
    if (corld_status s = clf_b.resolve(ctx); s != CORLD_OK) return finish(ctx, s, "train-clf");
    return finish(ctx,
                  corld_train_clf(ctx, clf_data.c_str(),
                                  clf_model.empty() ? nullptr : clf_model.c_str(),
                                  clf_image_only ? 1 : 0, &clf_b.opts, clf_out.c_str()),
                  "train-clf");
  }
  if (eval_cmd->parsed())
    return finish(ctx, corld_eval(ctx, eval_data.c_str(), eval_model.c_str(), eval_out.c_str()),
                  "eval");
  if (ablate_cmd->parsed()) {
    if (corld_status s = ablate_b.resolve(ctx); s != CORLD_OK) return finish(ctx, s, "ablate");
    return finish(
        ctx, corld_run_ablation(ctx, ablate_data.c_str(), &ablate_b.opts, ablate_out.c_str()),
        "ablate");
  }
  for (auto& [cmd, sweep, name] :
       std::vector<std::tuple<CLI::App*, SweepCmd*, const char*>>{
           {tau_cmd, &tau_sweep, "sweep-tau"},
           {rob_cmd, &robustness, "robustness"},
           {tpl_cmd, &template_sweep, "sweep-template"}}) {
    if (!cmd->parsed()) continue;
    if (corld_status s = sweep->b.resolve(ctx); s != CORLD_OK) return finish(ctx, s, name);
    return finish(ctx,
                  corld_run_sweep(ctx, sweep->kind, sweep->data.c_str(), &sweep->b.opts,
                                  sweep->out.c_str()),
                  name);
  }
  if (selftest_cmd->parsed()) {
    int32_t failures = 0;
    corld_status s = corld_selftest(ctx, quick ? 1 : 0, &failures);
    if (s == CORLD_OK) {
      std::printf("selftest: all checks passed\n");
      return 0;
    }
    return finish(ctx, s, "selftest");
  }
  std::fprintf(stderr, "%s", app.help().c_str());
  return 1;
}
