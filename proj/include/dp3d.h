/*
 * dp3d — 3D point-cloud local descriptor toolkit.
 *
 * C API over the C++ core: opaque handles, status-code returns, and a
 * thread-local error message retrievable via dp3d_last_error(). Every
 * function returning dp3d_status leaves its outputs untouched on failure.
 */
#ifndef DP3D_H
#define DP3D_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dp3d_status {
    DP3D_OK = 0,
    DP3D_E_INVALID_INPUT,
    DP3D_E_INVALID_CONFIG,
    DP3D_E_IO,
    DP3D_E_FORMAT,
    DP3D_E_DEGENERATE_GEOMETRY,
    DP3D_E_INSUFFICIENT_SUPPORT,
    DP3D_E_EMPTY_DATASET,
    DP3D_E_ARCH_MISMATCH,
    DP3D_E_INVALID_PARAMS,
    DP3D_E_INVALID_CACHE,
    DP3D_E_DIVERGENCE,
    DP3D_E_EMPTY_DESCRIPTORS,
    DP3D_E_INSUFFICIENT_RANK,
    DP3D_E_UNKNOWN
} dp3d_status;

const char* dp3d_version(void);
const char* dp3d_status_name(dp3d_status status);
/* Message of the most recent failing call on this thread. */
const char* dp3d_last_error(void);

typedef struct dp3d_cloud dp3d_cloud;
typedef struct dp3d_corpus dp3d_corpus;
typedef struct dp3d_dataset dp3d_dataset;
typedef struct dp3d_checkpoint dp3d_checkpoint;
typedef struct dp3d_descriptor_set dp3d_descriptor_set;
typedef struct dp3d_itq_model dp3d_itq_model;
typedef struct dp3d_codes dp3d_codes;
typedef struct dp3d_eval_report dp3d_eval_report;

/* ---- point clouds ------------------------------------------------------- */

/* Loads ASCII XYZ or an ASCII PLY subset, chosen by file extension. */
dp3d_status dp3d_cloud_load(const char* path, dp3d_cloud** out);
dp3d_status dp3d_cloud_save_xyz(const dp3d_cloud* cloud, const char* path);
void dp3d_cloud_free(dp3d_cloud* cloud);
size_t dp3d_cloud_size(const dp3d_cloud* cloud);
int dp3d_cloud_has_normals(const dp3d_cloud* cloud);

/* Mean nearest-neighbor distance. */
dp3d_status dp3d_cloud_resolution(const dp3d_cloud* cloud, double* out);
dp3d_status dp3d_cloud_subsample(const dp3d_cloud* cloud, double fraction, uint64_t seed,
                                 dp3d_cloud** out);
dp3d_status dp3d_cloud_estimate_normals(const dp3d_cloud* cloud, int k, dp3d_cloud** out);

/* ---- keypoints ----------------------------------------------------------- */

typedef struct dp3d_iss_params {
    double salient_radius; /* <= 0 picks 6x resolution */
    double gamma_21;
    double gamma_32;
    double nms_radius; /* <= 0 picks 4x resolution */
    int min_neighbors;
} dp3d_iss_params;

/*
 * Two-call pattern: pass indices = NULL to query the count, then call again
 * with a buffer of at least *count entries. params may be NULL for defaults.
 */
dp3d_status dp3d_detect_iss(const dp3d_cloud* cloud, const dp3d_iss_params* params,
                            int32_t* indices, size_t* count);
dp3d_status dp3d_keypoints_load(const char* path, int32_t* indices, size_t* count);
dp3d_status dp3d_keypoints_save(const int32_t* indices, size_t count, const char* path);

/* ---- synthetic corpora ---------------------------------------------------- */

typedef struct dp3d_synth_params {
    const char* kind; /* box | cylinder | ellipsoid | composite */
    int model_count;
    int archetype_count;
    int points_per_model;
    int keypoints_per_model;
    double noise;
    uint64_t seed;
} dp3d_synth_params;

/* Writes clouds, keypoints, part labels, correspondences and manifest.txt. */
dp3d_status dp3d_synth_generate(const dp3d_synth_params* params, const char* out_dir);

/* ---- corpora --------------------------------------------------------------- */

dp3d_status dp3d_corpus_load(const char* manifest_path, dp3d_corpus** out);
void dp3d_corpus_free(dp3d_corpus* corpus);
size_t dp3d_corpus_model_count(const dp3d_corpus* corpus);
const char* dp3d_corpus_model_id(const dp3d_corpus* corpus, size_t index);

/* Deterministic split by model-id hash; keep_train selects the side. */
dp3d_status dp3d_corpus_split(const dp3d_corpus* corpus, double train_fraction, uint64_t seed,
                              int keep_train, dp3d_corpus** out);
/* Appends subsampled copies of every model at each fraction in (0, 1). */
dp3d_status dp3d_corpus_augment(const dp3d_corpus* corpus, const double* fractions,
                                size_t fraction_count, uint64_t seed, dp3d_corpus** out);

/* ---- patch extraction configuration ----------------------------------------- */

typedef struct dp3d_patch_params {
    double radius;
    int n_points;
    double theta_min;
} dp3d_patch_params;

/* ---- mining ------------------------------------------------------------------ */

typedef struct dp3d_mine_params {
    dp3d_patch_params patch;
    int normals_k;
    double soft_distance_threshold;
    double nndr_max_ratio;
    size_t positive_budget; /* 0 keeps every correspondence */
    size_t soft_budget;     /* 0 defaults to half the positive count */
    size_t hard_budget;     /* 0 defaults to half the positive count */
    uint64_t seed;
    int triplets; /* nonzero mines (anchor, positive, negative) triplets */
} dp3d_mine_params;

dp3d_status dp3d_mine(const dp3d_corpus* corpus, const dp3d_mine_params* params,
                      dp3d_dataset** out);
void dp3d_dataset_free(dp3d_dataset* dataset);
dp3d_status dp3d_dataset_save(const dp3d_dataset* dataset, const char* path);
dp3d_status dp3d_dataset_load(const char* path, dp3d_dataset** out);
int dp3d_dataset_is_triplets(const dp3d_dataset* dataset);
void dp3d_dataset_counts(const dp3d_dataset* dataset, size_t* positives, size_t* soft,
                         size_t* hard);

/* ---- training ------------------------------------------------------------------ */

typedef struct dp3d_train_params {
    const char* loss; /* hinge | contrastive | triplet | mmcl */
    double m;
    double m1;
    double m2;
    double b;
    double lambda;
    const int32_t* point_dims; /* NULL picks [3, 32, 64, 128] */
    size_t n_point_dims;
    const int32_t* head_dims; /* NULL picks [128, 128, 128] */
    size_t n_head_dims;
    const char* variant; /* patch_siamese | aggregated */
    int epochs;
    int batch_size;
    double learning_rate;
    double momentum;
    uint64_t seed;
    int shuffle;
} dp3d_train_params;

typedef void (*dp3d_epoch_fn)(int epoch, double mean_loss, void* user);

dp3d_status dp3d_train(const dp3d_dataset* dataset, const dp3d_train_params* params,
                       dp3d_epoch_fn on_epoch, void* user, dp3d_checkpoint** out);
/* Random initialization without training (a comparison baseline). */
dp3d_status dp3d_checkpoint_init(const dp3d_train_params* params, dp3d_checkpoint** out);
void dp3d_checkpoint_free(dp3d_checkpoint* checkpoint);
dp3d_status dp3d_checkpoint_save(const dp3d_checkpoint* checkpoint, const char* path);
dp3d_status dp3d_checkpoint_load(const char* path, dp3d_checkpoint** out);
int dp3d_checkpoint_descriptor_dim(const dp3d_checkpoint* checkpoint);

/* ---- descriptors ------------------------------------------------------------------ */

typedef struct dp3d_baseline_params {
    int azimuth_bins;
    int elevation_bins;
    int radial_bins;
    int cosine_bins;
    int normals_k; /* used when the cloud has no normals */
} dp3d_baseline_params;

/*
 * One record per keypoint whose patch extraction succeeds; keypoints whose
 * extraction fails are skipped. Fails only when every keypoint fails.
 */
dp3d_status dp3d_describe(const dp3d_checkpoint* checkpoint, const dp3d_cloud* cloud,
                          const int32_t* keypoints, size_t count,
                          const dp3d_patch_params* patch, dp3d_descriptor_set** out);
dp3d_status dp3d_describe_baseline(const dp3d_cloud* cloud, const int32_t* keypoints,
                                   size_t count, const dp3d_patch_params* patch,
                                   const dp3d_baseline_params* baseline,
                                   dp3d_descriptor_set** out);
void dp3d_descriptor_set_free(dp3d_descriptor_set* set);
dp3d_status dp3d_descriptor_set_save(const dp3d_descriptor_set* set, const char* path);
dp3d_status dp3d_descriptor_set_load(const char* path, dp3d_descriptor_set** out);
size_t dp3d_descriptor_set_count(const dp3d_descriptor_set* set);
int dp3d_descriptor_set_dim(const dp3d_descriptor_set* set);
int32_t dp3d_descriptor_set_keypoint(const dp3d_descriptor_set* set, size_t index);
const double* dp3d_descriptor_set_values(const dp3d_descriptor_set* set, size_t index);

/*
 * Describe every model of a corpus with the checkpoint, or with the baseline
 * histogram descriptor when checkpoint is NULL. Returns a malloc'd array of
 * model_count sets; release with dp3d_descriptor_sets_free.
 */
dp3d_status dp3d_describe_corpus(const dp3d_corpus* corpus, const dp3d_checkpoint* checkpoint,
                                 const dp3d_patch_params* patch,
                                 const dp3d_baseline_params* baseline,
                                 dp3d_descriptor_set*** out_sets, size_t* out_count);
void dp3d_descriptor_sets_free(dp3d_descriptor_set** sets, size_t count);

/* ---- evaluation ---------------------------------------------------------------------- */

typedef struct dp3d_eval_params {
    int k;
    double tau;
    const char* match_rule; /* mutual | nndr */
    double nndr_ratio;
    int symmetric; /* nonzero honors symmetry groups */
} dp3d_eval_params;

/* sets must hold one descriptor set per corpus model, in corpus order. */
dp3d_status dp3d_evaluate(const dp3d_corpus* corpus, const dp3d_descriptor_set* const* sets,
                          size_t set_count, const dp3d_eval_params* params,
                          dp3d_eval_report** out);
void dp3d_eval_report_free(dp3d_eval_report* report);
double dp3d_eval_report_precision(const dp3d_eval_report* report);
double dp3d_eval_report_recall(const dp3d_eval_report* report);
double dp3d_eval_report_corr_accuracy(const dp3d_eval_report* report);
size_t dp3d_eval_report_cmc_length(const dp3d_eval_report* report);
double dp3d_eval_report_cmc(const dp3d_eval_report* report, size_t rank_index);
int dp3d_eval_report_zero_matches(const dp3d_eval_report* report);
/* k rows of "rank,cmc" plus a summary row. */
dp3d_status dp3d_eval_report_write_csv(const dp3d_eval_report* report, const char* path);

/*
 * Plain-text table covering both symmetry modes. Two-call pattern: pass
 * buffer = NULL to query the required size (including the terminator).
 */
dp3d_status dp3d_eval_report_format(const dp3d_eval_report* symmetric,
                                    const dp3d_eval_report* non_symmetric, char* buffer,
                                    size_t* size);

/* ---- binarization ---------------------------------------------------------------------- */

dp3d_status dp3d_itq_train(const dp3d_descriptor_set* const* sets, size_t set_count, int bits,
                           int iterations, uint64_t seed, dp3d_itq_model** out);
void dp3d_itq_free(dp3d_itq_model* model);
dp3d_status dp3d_itq_save(const dp3d_itq_model* model, const char* path);
dp3d_status dp3d_itq_load(const char* path, dp3d_itq_model** out);
int dp3d_itq_bits(const dp3d_itq_model* model);
dp3d_status dp3d_itq_encode(const dp3d_itq_model* model, const dp3d_descriptor_set* set,
                            dp3d_codes** out);
void dp3d_codes_free(dp3d_codes* codes);
dp3d_status dp3d_codes_save(const dp3d_codes* codes, const char* path);
dp3d_status dp3d_codes_load(const char* path, dp3d_codes** out);
size_t dp3d_codes_count(const dp3d_codes* codes);
int dp3d_codes_bits(const dp3d_codes* codes);

/*
 * Ranks all targets for one query code by ascending Hamming distance.
 * Two-call pattern like dp3d_detect_iss.
 */
dp3d_status dp3d_codes_hamming_rank(const dp3d_codes* queries, size_t query_index,
                                    const dp3d_codes* targets, int32_t* ranked, size_t* count);

#ifdef __cplusplus
}
#endif

#endif /* DP3D_H */
