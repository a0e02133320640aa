/*
 * corld — template-free contrastive representation learning of deformable
 * shapes. C API over the C++ core: an opaque context carries error state,
 * every entry point returns a status code, and all heavy state moves through
 * directories of versioned artifacts (datasets, checkpoints, CSV reports).
 */

#ifndef CORLD_H
#define CORLD_H

#include <stdint.h>

#if defined(_WIN32)
#define CORLD_API __declspec(dllexport)
#else
#define CORLD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum corld_status {
  CORLD_OK = 0,
  CORLD_E_INVALID = 1, /* bad arguments or configuration */
  CORLD_E_RUNTIME = 2, /* numerical or internal failure */
  CORLD_E_IO = 3       /* file missing, truncated, or checksum mismatch */
} corld_status;

typedef struct corld_ctx corld_ctx;

CORLD_API const char* corld_version(void);

CORLD_API corld_status corld_ctx_create(corld_ctx** out_ctx);
CORLD_API void corld_ctx_destroy(corld_ctx* ctx);

/* Message for the most recent failure on this context; empty string when the
 * last call succeeded. Owned by the context, valid until the next call. */
CORLD_API const char* corld_last_error(const corld_ctx* ctx);

/* ---- synthetic datasets ---- */

typedef struct corld_gen_spec {
  int32_t classes;
  int32_t per_class;
  int32_t size; /* square images, multiple of 8 */
  uint64_t seed;
  double deform_amplitude; /* px */
  double noise_std;
} corld_gen_spec;

CORLD_API void corld_gen_spec_init(corld_gen_spec* spec);
CORLD_API corld_status corld_gen_data(corld_ctx* ctx, const corld_gen_spec* spec,
                                      const char* out_dir);

/* ---- training options ---- */

enum {
  CORLD_CANDIDATE_ALL_OTHERS = 0,
  CORLD_CANDIDATE_DIFFERENT_CLASS = 1
};
enum {
  CORLD_FUSE_PROJECTED = 0,
  CORLD_FUSE_LATENT = 1
};
enum {
  CORLD_TEMPLATE_MULTI = 0,
  CORLD_TEMPLATE_SINGLE = 1
};
enum {
  CORLD_F32 = 0,
  CORLD_F64 = 1
};

typedef struct corld_train_opts {
  double eta0;
  double sigma, delta, beta, gamma, tau, weight_decay;
  double eps_corld, eps_clf;
  int32_t epochs_corld, epochs_clf, batch_size;
  uint64_t seed;
  int32_t candidate_set;     /* CORLD_CANDIDATE_* */
  int32_t fuse_source;       /* CORLD_FUSE_* */
  int32_t template_mode;     /* CORLD_TEMPLATE_* */
  int32_t float_mode;        /* CORLD_F32 / CORLD_F64 */
  int32_t finetune_shape;    /* 0/1 */
  int32_t contrastive_on;    /* 0/1 */
  int32_t template_in_input; /* 0/1 */
  int32_t exp_steps;         /* scaling-and-squaring depth, [4,10] */
} corld_train_opts;

CORLD_API void corld_train_opts_init(corld_train_opts* opts);

/* Applies a CORLD-CFG v1 key=value file on top of *opts. */
CORLD_API corld_status corld_train_opts_load(corld_ctx* ctx, const char* config_path,
                                             corld_train_opts* opts);
/* One key=value override, same keys as the config file. */
CORLD_API corld_status corld_train_opts_set(corld_ctx* ctx, const char* key, const char* value,
                                            corld_train_opts* opts);

/* ---- training, evaluation, harnesses ---- */

/* Phase-1 representation training; writes corld.ckpt, train_report.csv and
 * manifest.txt into out_dir. */
CORLD_API corld_status corld_train(corld_ctx* ctx, const char* data_dir,
                                   const corld_train_opts* opts, const char* out_dir);

/* Phase-2 classifier training. corld_model_dir must contain corld.ckpt from
 * corld_train; pass NULL with image_only=1 for the intensity-only baseline.
 * Writes clf.ckpt, clf_report.csv and manifest.txt. */
CORLD_API corld_status corld_train_clf(corld_ctx* ctx, const char* data_dir,
                                       const char* corld_model_dir, int32_t image_only,
                                       const corld_train_opts* opts, const char* out_dir);

/* Test-split metrics of a trained classifier (clf.ckpt in model_dir);
 * writes metrics.csv and confusion.csv. */
CORLD_API corld_status corld_eval(corld_ctx* ctx, const char* data_dir, const char* model_dir,
                                  const char* out_dir);

/* 2x2 grid over {template input} x {contrastive objective}, shape-feature
 * probe accuracy per arm; writes ablation.csv. */
CORLD_API corld_status corld_run_ablation(corld_ctx* ctx, const char* data_dir,
                                          const corld_train_opts* opts, const char* out_dir);

enum {
  CORLD_SWEEP_TAU = 0,
  CORLD_SWEEP_ROBUSTNESS = 1,
  CORLD_SWEEP_TEMPLATE = 2
};

CORLD_API corld_status corld_run_sweep(corld_ctx* ctx, int32_t kind, const char* data_dir,
                                       const corld_train_opts* opts, const char* out_dir);

/* Gradient-fidelity and deformation property suites; prints one line per
 * check. Returns CORLD_OK only when every check passes; *out_failures (may
 * be NULL) receives the failure count. */
CORLD_API corld_status corld_selftest(corld_ctx* ctx, int32_t quick, int32_t* out_failures);

#ifdef __cplusplus
}
#endif

#endif /* CORLD_H */
