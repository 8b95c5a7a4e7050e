#include "dp3d.h"

#include "core/baseline.hpp"
#include "core/errors.hpp"
#include "core/evaluation.hpp"
#include "core/geometry.hpp"
#include "core/io.hpp"
#include "core/itq.hpp"
#include "core/mining.hpp"
#include "core/model.hpp"
#include "core/synthetic.hpp"
#include "core/trainer.hpp"

#include <cstring>
#include <new>
#include <string>
#include <vector>

struct dp3d_cloud {
    dp3d::PointCloud v;
};
struct dp3d_corpus {
    dp3d::Corpus v;
};
struct dp3d_dataset {
    dp3d::Dataset v;
    dp3d::mining::MineCounts counts;
};
struct dp3d_checkpoint {
    dp3d::model::EncoderParams v;
};
struct dp3d_descriptor_set {
    dp3d::DescriptorSet v;
};
struct dp3d_itq_model {
    dp3d::itq::ItqModel v;
};
struct dp3d_codes {
    std::vector<dp3d::itq::BinaryCode> v;
};
struct dp3d_eval_report {
    dp3d::eval::EvalReport v;
};

namespace {

thread_local std::string g_last_error;

dp3d_status map_code(dp3d::Err code) {
    using dp3d::Err;
    switch (code) {
        case Err::InvalidInput: return DP3D_E_INVALID_INPUT;
        case Err::InvalidConfig: return DP3D_E_INVALID_CONFIG;
        case Err::Io: return DP3D_E_IO;
        case Err::Format: return DP3D_E_FORMAT;
        case Err::DegenerateGeometry: return DP3D_E_DEGENERATE_GEOMETRY;
        case Err::InsufficientSupport: return DP3D_E_INSUFFICIENT_SUPPORT;
        case Err::EmptyDataset: return DP3D_E_EMPTY_DATASET;
        case Err::ArchMismatch: return DP3D_E_ARCH_MISMATCH;
        case Err::InvalidParams: return DP3D_E_INVALID_PARAMS;
        case Err::InvalidCache: return DP3D_E_INVALID_CACHE;
        case Err::Divergence: return DP3D_E_DIVERGENCE;
        case Err::EmptyDescriptorSet: return DP3D_E_EMPTY_DESCRIPTORS;
        case Err::InsufficientRank: return DP3D_E_INSUFFICIENT_RANK;
    }
    return DP3D_E_UNKNOWN;
}

template <typename F>
dp3d_status guarded(F&& body) {
    try {
        body();
        return DP3D_OK;
    } catch (const dp3d::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return DP3D_E_UNKNOWN;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DP3D_E_UNKNOWN;
    }
}

void require(bool ok, const char* what) {
    if (!ok) dp3d::fail(dp3d::Err::InvalidInput, what);
}

dp3d::PatchParams to_patch_params(const dp3d_patch_params* p) {
    require(p != nullptr, "patch parameters are required");
    dp3d::PatchParams out;
    out.radius = p->radius;
    out.n_points = p->n_points;
    out.theta_min = p->theta_min;
    return out;
}

dp3d::baseline::HistogramBins to_bins(const dp3d_baseline_params* p) {
    dp3d::baseline::HistogramBins bins;
    if (p) {
        bins.azimuth = p->azimuth_bins;
        bins.elevation = p->elevation_bins;
        bins.radial = p->radial_bins;
        bins.cosine = p->cosine_bins;
    }
    return bins;
}

dp3d::model::LossKind loss_kind_from_name(const char* name) {
    require(name != nullptr, "loss name is required");
    const std::string s = name;
    if (s == "hinge") return dp3d::model::LossKind::hinge;
    if (s == "contrastive") return dp3d::model::LossKind::contrastive;
    if (s == "triplet") return dp3d::model::LossKind::triplet;
    if (s == "mmcl") return dp3d::model::LossKind::mmcl;
    dp3d::fail(dp3d::Err::InvalidConfig, "unknown loss: " + s);
}

dp3d::train::TrainConfig to_train_config(const dp3d_train_params* p) {
    require(p != nullptr, "training parameters are required");
    dp3d::train::TrainConfig cfg;
    cfg.loss.kind = loss_kind_from_name(p->loss);
    cfg.loss.m = p->m;
    cfg.loss.m1 = p->m1;
    cfg.loss.m2 = p->m2;
    cfg.loss.b = p->b;
    cfg.loss.lambda = p->lambda;
    if (p->point_dims) {
        cfg.arch.point_mlp_dims.assign(p->point_dims, p->point_dims + p->n_point_dims);
    }
    if (p->head_dims) {
        cfg.arch.head_dims.assign(p->head_dims, p->head_dims + p->n_head_dims);
    }
    if (p->variant) {
        const std::string v = p->variant;
        if (v == "patch_siamese") {
            cfg.arch.variant = dp3d::model::Variant::patch_siamese;
        } else if (v == "aggregated") {
            cfg.arch.variant = dp3d::model::Variant::aggregated;
        } else {
            dp3d::fail(dp3d::Err::InvalidConfig, "unknown variant: " + v);
        }
    }
    cfg.epochs = p->epochs;
    cfg.batch_size = p->batch_size;
    cfg.learning_rate = p->learning_rate;
    cfg.momentum = p->momentum;
    cfg.seed = p->seed;
    cfg.shuffle = p->shuffle != 0;
    return cfg;
}

// DP3F records carry cloud point indices; align them back onto the model's
// keypoint list, skipping keypoints whose record is missing.
std::vector<dp3d::eval::ModelDescriptors> align_sets(const dp3d::Corpus& corpus,
                                                     const dp3d_descriptor_set* const* sets,
                                                     size_t set_count) {
    require(sets != nullptr, "descriptor sets are required");
    if (set_count != corpus.models.size()) {
        dp3d::fail(dp3d::Err::InvalidInput, "need one descriptor set per corpus model");
    }
    std::vector<dp3d::eval::ModelDescriptors> out(set_count);
    for (size_t m = 0; m < set_count; ++m) {
        require(sets[m] != nullptr, "descriptor set handle is null");
        const dp3d::DescriptorSet& set = sets[m]->v;
        const dp3d::Model& model = corpus.models[m];
        out[m].resize(model.keypoints.size());
        std::size_t record = 0;
        for (std::size_t k = 0; k < model.keypoints.size(); ++k) {
            if (record < set.values.size() &&
                set.keypoint_indices[record] == model.keypoints[k]) {
                out[m][k] = set.values[record];
                ++record;
            }
        }
        if (record != set.values.size()) {
            dp3d::fail(dp3d::Err::InvalidInput,
                       "descriptor set does not align with the keypoints of model " +
                           model.cloud.id);
        }
    }
    return out;
}

dp3d::eval::EvalConfig to_eval_config(const dp3d_eval_params* p) {
    require(p != nullptr, "evaluation parameters are required");
    dp3d::eval::EvalConfig cfg;
    cfg.k = p->k;
    cfg.tau = p->tau;
    if (p->match_rule) {
        const std::string rule = p->match_rule;
        if (rule == "mutual") {
            cfg.match_rule = dp3d::eval::MatchRule::mutual_nearest;
        } else if (rule == "nndr") {
            cfg.match_rule = dp3d::eval::MatchRule::nndr;
        } else {
            dp3d::fail(dp3d::Err::InvalidConfig, "unknown match rule: " + rule);
        }
    }
    cfg.nndr_ratio = p->nndr_ratio;
    cfg.symmetry = p->symmetric ? dp3d::eval::SymmetryMode::symmetric
                                : dp3d::eval::SymmetryMode::non_symmetric;
    return cfg;
}

dp3d::DescriptorSet build_descriptor_set(const dp3d::PointCloud& cloud,
                                         const std::vector<int>& keypoints,
                                         const dp3d::model::EncoderParams* params,
                                         const dp3d::PatchParams& patch,
                                         const dp3d::baseline::HistogramBins& bins,
                                         int normals_k) {
    dp3d::DescriptorSet set;
    const dp3d::PointCloud* source = &cloud;
    dp3d::PointCloud with_normals;
    if (!params) {
        set.dim = bins.total();
        if (!cloud.has_normals()) {
            with_normals = dp3d::geom::estimate_normals(cloud, normals_k);
            source = &with_normals;
        }
    } else {
        set.dim = params->arch.descriptor_dim();
    }
    std::size_t failures = 0;
    for (int kp : keypoints) {
        try {
            Eigen::VectorXd value;
            if (params) {
                dp3d::Patch p = dp3d::geom::extract_patch(*source, kp, patch);
                value = dp3d::model::encoder_forward(*params, p);
            } else {
                value = dp3d::baseline::compute_histogram_descriptor(*source, kp, patch.radius,
                                                                     bins);
            }
            set.keypoint_indices.push_back(kp);
            set.values.push_back(std::move(value));
        } catch (const dp3d::Error& e) {
            if (e.code() == dp3d::Err::InsufficientSupport ||
                e.code() == dp3d::Err::DegenerateGeometry) {
                ++failures;
            } else {
                throw;
            }
        }
    }
    if (!keypoints.empty() && set.values.empty()) {
        dp3d::fail(dp3d::Err::EmptyDescriptorSet, "every keypoint failed patch extraction");
    }
    (void)failures;
    return set;
}

}  // namespace

extern "C" {

const char* dp3d_version(void) { return "0.1.0"; }

const char* dp3d_status_name(dp3d_status status) {
    switch (status) {
        case DP3D_OK: return "ok";
        case DP3D_E_INVALID_INPUT: return "invalid input";
        case DP3D_E_INVALID_CONFIG: return "invalid config";
        case DP3D_E_IO: return "io error";
        case DP3D_E_FORMAT: return "format error";
        case DP3D_E_DEGENERATE_GEOMETRY: return "degenerate geometry";
        case DP3D_E_INSUFFICIENT_SUPPORT: return "insufficient support";
        case DP3D_E_EMPTY_DATASET: return "empty dataset";
        case DP3D_E_ARCH_MISMATCH: return "architecture mismatch";
        case DP3D_E_INVALID_PARAMS: return "invalid parameters";
        case DP3D_E_INVALID_CACHE: return "invalid cache";
        case DP3D_E_DIVERGENCE: return "divergence";
        case DP3D_E_EMPTY_DESCRIPTORS: return "empty descriptor set";
        case DP3D_E_INSUFFICIENT_RANK: return "insufficient rank";
        case DP3D_E_UNKNOWN: break;
    }
    return "unknown error";
}

const char* dp3d_last_error(void) { return g_last_error.c_str(); }

/* ---- clouds ---- */

dp3d_status dp3d_cloud_load(const char* path, dp3d_cloud** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        auto* handle = new dp3d_cloud{dp3d::io::load_cloud(path)};
        *out = handle;
    });
}

dp3d_status dp3d_cloud_save_xyz(const dp3d_cloud* cloud, const char* path) {
    return guarded([&] {
        require(cloud && path, "cloud and path are required");
        dp3d::io::save_xyz(cloud->v, path);
    });
}

void dp3d_cloud_free(dp3d_cloud* cloud) { delete cloud; }

size_t dp3d_cloud_size(const dp3d_cloud* cloud) { return cloud ? cloud->v.size() : 0; }

int dp3d_cloud_has_normals(const dp3d_cloud* cloud) {
    return cloud && cloud->v.has_normals() ? 1 : 0;
}

dp3d_status dp3d_cloud_resolution(const dp3d_cloud* cloud, double* out) {
    return guarded([&] {
        require(cloud && out, "cloud and output are required");
        *out = dp3d::geom::compute_resolution(cloud->v);
    });
}

dp3d_status dp3d_cloud_subsample(const dp3d_cloud* cloud, double fraction, uint64_t seed,
                                 dp3d_cloud** out) {
    return guarded([&] {
        require(cloud && out, "cloud and output handle are required");
        *out = new dp3d_cloud{dp3d::geom::subsample(cloud->v, fraction, seed)};
    });
}

dp3d_status dp3d_cloud_estimate_normals(const dp3d_cloud* cloud, int k, dp3d_cloud** out) {
    return guarded([&] {
        require(cloud && out, "cloud and output handle are required");
        *out = new dp3d_cloud{dp3d::geom::estimate_normals(cloud->v, k)};
    });
}

/* ---- keypoints ---- */

dp3d_status dp3d_detect_iss(const dp3d_cloud* cloud, const dp3d_iss_params* params,
                            int32_t* indices, size_t* count) {
    return guarded([&] {
        require(cloud && count, "cloud and count are required");
        dp3d::IssParams iss;
        if (params) {
            iss.salient_radius = params->salient_radius;
            iss.gamma_21 = params->gamma_21;
            iss.gamma_32 = params->gamma_32;
            iss.nms_radius = params->nms_radius;
            iss.min_neighbors = params->min_neighbors;
        }
        if (!params || iss.salient_radius <= 0.0 || iss.nms_radius <= 0.0) {
            const dp3d::IssParams defaults =
                dp3d::geom::default_iss_params(dp3d::geom::compute_resolution(cloud->v));
            if (!params) {
                iss = defaults;
            } else {
                if (iss.salient_radius <= 0.0) iss.salient_radius = defaults.salient_radius;
                if (iss.nms_radius <= 0.0) iss.nms_radius = defaults.nms_radius;
            }
        }
        const std::vector<int> found = dp3d::geom::detect_iss_keypoints(cloud->v, iss);
        if (indices) {
            require(*count >= found.size(), "keypoint buffer too small");
            for (std::size_t i = 0; i < found.size(); ++i) {
                indices[i] = static_cast<int32_t>(found[i]);
            }
        }
        *count = found.size();
    });
}

dp3d_status dp3d_keypoints_load(const char* path, int32_t* indices, size_t* count) {
    return guarded([&] {
        require(path && count, "path and count are required");
        const std::vector<int> loaded = dp3d::io::load_keypoints(path);
        if (indices) {
            require(*count >= loaded.size(), "keypoint buffer too small");
            for (std::size_t i = 0; i < loaded.size(); ++i) {
                indices[i] = static_cast<int32_t>(loaded[i]);
            }
        }
        *count = loaded.size();
    });
}

dp3d_status dp3d_keypoints_save(const int32_t* indices, size_t count, const char* path) {
    return guarded([&] {
        require(path, "path is required");
        require(indices != nullptr || count == 0, "indices are required");
        std::vector<int> v(indices, indices + count);
        dp3d::io::save_keypoints(v, path);
    });
}

/* ---- synthetic corpora ---- */

dp3d_status dp3d_synth_generate(const dp3d_synth_params* params, const char* out_dir) {
    return guarded([&] {
        require(params && out_dir, "parameters and output directory are required");
        dp3d::synth::SynthSpec spec;
        spec.kind = dp3d::synth::shape_kind_from_name(params->kind ? params->kind : "composite");
        spec.model_count = params->model_count;
        spec.archetype_count = params->archetype_count;
        spec.points_per_model = params->points_per_model;
        spec.keypoints_per_model = params->keypoints_per_model;
        spec.noise = params->noise;
        spec.seed = params->seed;
        const dp3d::Corpus corpus = dp3d::synth::generate_synthetic_corpus(spec);
        dp3d::io::write_corpus(corpus, out_dir);
    });
}

/* ---- corpora ---- */

dp3d_status dp3d_corpus_load(const char* manifest_path, dp3d_corpus** out) {
    return guarded([&] {
        require(manifest_path && out, "manifest path and output handle are required");
        *out = new dp3d_corpus{dp3d::io::load_manifest(manifest_path)};
    });
}

void dp3d_corpus_free(dp3d_corpus* corpus) { delete corpus; }

size_t dp3d_corpus_model_count(const dp3d_corpus* corpus) {
    return corpus ? corpus->v.models.size() : 0;
}

const char* dp3d_corpus_model_id(const dp3d_corpus* corpus, size_t index) {
    if (!corpus || index >= corpus->v.models.size()) return nullptr;
    return corpus->v.models[index].cloud.id.c_str();
}

dp3d_status dp3d_corpus_split(const dp3d_corpus* corpus, double train_fraction, uint64_t seed,
                              int keep_train, dp3d_corpus** out) {
    return guarded([&] {
        require(corpus && out, "corpus and output handle are required");
        *out = new dp3d_corpus{
            dp3d::mining::split_corpus(corpus->v, train_fraction, seed, keep_train != 0)};
    });
}

dp3d_status dp3d_corpus_augment(const dp3d_corpus* corpus, const double* fractions,
                                size_t fraction_count, uint64_t seed, dp3d_corpus** out) {
    return guarded([&] {
        require(corpus && out, "corpus and output handle are required");
        require(fractions != nullptr || fraction_count == 0, "fractions are required");
        std::vector<double> f(fractions, fractions + fraction_count);
        *out = new dp3d_corpus{dp3d::mining::augment_multiresolution(corpus->v, f, seed)};
    });
}

/* ---- mining ---- */

dp3d_status dp3d_mine(const dp3d_corpus* corpus, const dp3d_mine_params* params,
                      dp3d_dataset** out) {
    return guarded([&] {
        require(corpus && params && out, "corpus, parameters and output handle are required");
        dp3d::mining::MiningConfig cfg;
        cfg.patch = to_patch_params(&params->patch);
        cfg.normals_k = params->normals_k > 0 ? params->normals_k : 12;
        cfg.soft_distance_threshold = params->soft_distance_threshold;
        cfg.nndr_max_ratio = params->nndr_max_ratio;
        cfg.positive_budget = params->positive_budget;
        cfg.soft_budget = params->soft_budget;
        cfg.hard_budget = params->hard_budget;
        cfg.seed = params->seed;
        auto* handle = new dp3d_dataset;
        try {
            handle->v = dp3d::mining::mine_dataset(
                corpus->v, cfg,
                params->triplets ? dp3d::Dataset::Kind::triplets : dp3d::Dataset::Kind::pairs,
                &handle->counts);
        } catch (...) {
            delete handle;
            throw;
        }
        *out = handle;
    });
}

void dp3d_dataset_free(dp3d_dataset* dataset) { delete dataset; }

dp3d_status dp3d_dataset_save(const dp3d_dataset* dataset, const char* path) {
    return guarded([&] {
        require(dataset && path, "dataset and path are required");
        dp3d::io::save_dataset(dataset->v, path);
    });
}

dp3d_status dp3d_dataset_load(const char* path, dp3d_dataset** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        auto* handle = new dp3d_dataset;
        try {
            handle->v = dp3d::io::load_dataset(path);
        } catch (...) {
            delete handle;
            throw;
        }
        handle->counts.positives = 0;
        for (const auto& p : handle->v.pairs) {
            if (p.positive) ++handle->counts.positives;
            else if (p.gamma == 0) ++handle->counts.soft;
            else ++handle->counts.hard;
        }
        if (handle->v.kind == dp3d::Dataset::Kind::triplets) {
            handle->counts.positives = handle->v.triplets.size();
        }
        *out = handle;
    });
}

int dp3d_dataset_is_triplets(const dp3d_dataset* dataset) {
    return dataset && dataset->v.kind == dp3d::Dataset::Kind::triplets ? 1 : 0;
}

void dp3d_dataset_counts(const dp3d_dataset* dataset, size_t* positives, size_t* soft,
                         size_t* hard) {
    if (!dataset) return;
    if (positives) *positives = dataset->counts.positives;
    if (soft) *soft = dataset->counts.soft;
    if (hard) *hard = dataset->counts.hard;
}

/* ---- training ---- */

dp3d_status dp3d_train(const dp3d_dataset* dataset, const dp3d_train_params* params,
                       dp3d_epoch_fn on_epoch, void* user, dp3d_checkpoint** out) {
    return guarded([&] {
        require(dataset && out, "dataset and output handle are required");
        const dp3d::train::TrainConfig cfg = to_train_config(params);
        auto* handle = new dp3d_checkpoint;
        try {
            dp3d::train::EpochCallback cb;
            if (on_epoch) {
                cb = [on_epoch, user](int epoch, double loss) { on_epoch(epoch, loss, user); };
            }
            dp3d::train::train(dataset->v, cfg, handle->v, cb);
        } catch (...) {
            delete handle;
            throw;
        }
        *out = handle;
    });
}

dp3d_status dp3d_checkpoint_init(const dp3d_train_params* params, dp3d_checkpoint** out) {
    return guarded([&] {
        require(out, "output handle is required");
        const dp3d::train::TrainConfig cfg = to_train_config(params);
        *out = new dp3d_checkpoint{dp3d::train::init_params(cfg.arch, cfg.seed)};
    });
}

void dp3d_checkpoint_free(dp3d_checkpoint* checkpoint) { delete checkpoint; }

dp3d_status dp3d_checkpoint_save(const dp3d_checkpoint* checkpoint, const char* path) {
    return guarded([&] {
        require(checkpoint && path, "checkpoint and path are required");
        dp3d::io::save_checkpoint(checkpoint->v, path);
    });
}

dp3d_status dp3d_checkpoint_load(const char* path, dp3d_checkpoint** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        *out = new dp3d_checkpoint{dp3d::io::load_checkpoint(path)};
    });
}

int dp3d_checkpoint_descriptor_dim(const dp3d_checkpoint* checkpoint) {
    return checkpoint ? checkpoint->v.arch.descriptor_dim() : 0;
}

/* ---- descriptors ---- */

dp3d_status dp3d_describe(const dp3d_checkpoint* checkpoint, const dp3d_cloud* cloud,
                          const int32_t* keypoints, size_t count,
                          const dp3d_patch_params* patch, dp3d_descriptor_set** out) {
    return guarded([&] {
        require(checkpoint && cloud && out, "checkpoint, cloud and output handle are required");
        require(keypoints != nullptr || count == 0, "keypoints are required");
        std::vector<int> kps(keypoints, keypoints + count);
        *out = new dp3d_descriptor_set{
            build_descriptor_set(cloud->v, kps, &checkpoint->v, to_patch_params(patch),
                                 dp3d::baseline::HistogramBins{}, 12)};
    });
}

dp3d_status dp3d_describe_baseline(const dp3d_cloud* cloud, const int32_t* keypoints,
                                   size_t count, const dp3d_patch_params* patch,
                                   const dp3d_baseline_params* baseline,
                                   dp3d_descriptor_set** out) {
    return guarded([&] {
        require(cloud && out, "cloud and output handle are required");
        require(keypoints != nullptr || count == 0, "keypoints are required");
        std::vector<int> kps(keypoints, keypoints + count);
        const int normals_k = baseline && baseline->normals_k > 0 ? baseline->normals_k : 12;
        *out = new dp3d_descriptor_set{build_descriptor_set(
            cloud->v, kps, nullptr, to_patch_params(patch), to_bins(baseline), normals_k)};
    });
}

void dp3d_descriptor_set_free(dp3d_descriptor_set* set) { delete set; }

dp3d_status dp3d_descriptor_set_save(const dp3d_descriptor_set* set, const char* path) {
    return guarded([&] {
        require(set && path, "descriptor set and path are required");
        dp3d::io::save_descriptor_set(set->v, path);
    });
}

dp3d_status dp3d_descriptor_set_load(const char* path, dp3d_descriptor_set** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        *out = new dp3d_descriptor_set{dp3d::io::load_descriptor_set(path)};
    });
}

size_t dp3d_descriptor_set_count(const dp3d_descriptor_set* set) {
    return set ? set->v.size() : 0;
}

int dp3d_descriptor_set_dim(const dp3d_descriptor_set* set) { return set ? set->v.dim : 0; }

int32_t dp3d_descriptor_set_keypoint(const dp3d_descriptor_set* set, size_t index) {
    if (!set || index >= set->v.keypoint_indices.size()) return -1;
    return static_cast<int32_t>(set->v.keypoint_indices[index]);
}

const double* dp3d_descriptor_set_values(const dp3d_descriptor_set* set, size_t index) {
    if (!set || index >= set->v.values.size()) return nullptr;
    return set->v.values[index].data();
}

dp3d_status dp3d_describe_corpus(const dp3d_corpus* corpus, const dp3d_checkpoint* checkpoint,
                                 const dp3d_patch_params* patch,
                                 const dp3d_baseline_params* baseline,
                                 dp3d_descriptor_set*** out_sets, size_t* out_count) {
    return guarded([&] {
        require(corpus && out_sets && out_count, "corpus and output handles are required");
        const dp3d::PatchParams pp = to_patch_params(patch);
        const dp3d::baseline::HistogramBins bins = to_bins(baseline);
        const int normals_k = baseline && baseline->normals_k > 0 ? baseline->normals_k : 12;

        const std::size_t n = corpus->v.models.size();
        auto** sets = new dp3d_descriptor_set*[n]();
        try {
            for (std::size_t m = 0; m < n; ++m) {
                const dp3d::Model& model = corpus->v.models[m];
                sets[m] = new dp3d_descriptor_set{
                    build_descriptor_set(model.cloud, model.keypoints,
                                         checkpoint ? &checkpoint->v : nullptr, pp, bins,
                                         normals_k)};
            }
        } catch (...) {
            for (std::size_t m = 0; m < n; ++m) delete sets[m];
            delete[] sets;
            throw;
        }
        *out_sets = sets;
        *out_count = n;
    });
}

void dp3d_descriptor_sets_free(dp3d_descriptor_set** sets, size_t count) {
    if (!sets) return;
    for (size_t i = 0; i < count; ++i) delete sets[i];
    delete[] sets;
}

/* ---- evaluation ---- */

dp3d_status dp3d_evaluate(const dp3d_corpus* corpus, const dp3d_descriptor_set* const* sets,
                          size_t set_count, const dp3d_eval_params* params,
                          dp3d_eval_report** out) {
    return guarded([&] {
        require(corpus && out, "corpus and output handle are required");
        const dp3d::eval::EvalConfig cfg = to_eval_config(params);
        const auto aligned = align_sets(corpus->v, sets, set_count);
        *out = new dp3d_eval_report{dp3d::eval::evaluate(corpus->v, aligned, cfg)};
    });
}

void dp3d_eval_report_free(dp3d_eval_report* report) { delete report; }

double dp3d_eval_report_precision(const dp3d_eval_report* report) {
    return report ? report->v.precision : 0.0;
}

double dp3d_eval_report_recall(const dp3d_eval_report* report) {
    return report ? report->v.recall : 0.0;
}

double dp3d_eval_report_corr_accuracy(const dp3d_eval_report* report) {
    return report ? report->v.corr_accuracy : 0.0;
}

size_t dp3d_eval_report_cmc_length(const dp3d_eval_report* report) {
    return report ? report->v.cmc.size() : 0;
}

double dp3d_eval_report_cmc(const dp3d_eval_report* report, size_t rank_index) {
    if (!report || rank_index >= report->v.cmc.size()) return 0.0;
    return report->v.cmc[rank_index];
}

int dp3d_eval_report_zero_matches(const dp3d_eval_report* report) {
    return report && report->v.zero_matches ? 1 : 0;
}

dp3d_status dp3d_eval_report_write_csv(const dp3d_eval_report* report, const char* path) {
    return guarded([&] {
        require(report && path, "report and path are required");
        dp3d::io::write_file_atomic(path, dp3d::eval::format_report_csv(report->v));
    });
}

dp3d_status dp3d_eval_report_format(const dp3d_eval_report* symmetric,
                                    const dp3d_eval_report* non_symmetric, char* buffer,
                                    size_t* size) {
    return guarded([&] {
        require(symmetric && non_symmetric && size, "reports and size are required");
        const std::string text =
            dp3d::eval::format_report_text(symmetric->v, non_symmetric->v);
        if (buffer) {
            require(*size >= text.size() + 1, "buffer too small");
            std::memcpy(buffer, text.c_str(), text.size() + 1);
        }
        *size = text.size() + 1;
    });
}

/* ---- binarization ---- */

dp3d_status dp3d_itq_train(const dp3d_descriptor_set* const* sets, size_t set_count, int bits,
                           int iterations, uint64_t seed, dp3d_itq_model** out) {
    return guarded([&] {
        require(sets && out, "descriptor sets and output handle are required");
        std::vector<Eigen::VectorXd> descriptors;
        for (size_t s = 0; s < set_count; ++s) {
            require(sets[s] != nullptr, "descriptor set handle is null");
            for (const auto& v : sets[s]->v.values) descriptors.push_back(v);
        }
        *out = new dp3d_itq_model{dp3d::itq::itq_train(descriptors, bits, iterations, seed)};
    });
}

void dp3d_itq_free(dp3d_itq_model* model) { delete model; }

dp3d_status dp3d_itq_save(const dp3d_itq_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "model and path are required");
        dp3d::io::save_itq_model(model->v, path);
    });
}

dp3d_status dp3d_itq_load(const char* path, dp3d_itq_model** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        *out = new dp3d_itq_model{dp3d::io::load_itq_model(path)};
    });
}

int dp3d_itq_bits(const dp3d_itq_model* model) { return model ? model->v.bits() : 0; }

dp3d_status dp3d_itq_encode(const dp3d_itq_model* model, const dp3d_descriptor_set* set,
                            dp3d_codes** out) {
    return guarded([&] {
        require(model && set && out, "model, descriptor set and output handle are required");
        auto* handle = new dp3d_codes;
        try {
            handle->v.reserve(set->v.values.size());
            for (const auto& v : set->v.values) {
                handle->v.push_back(dp3d::itq::itq_encode(model->v, v));
            }
        } catch (...) {
            delete handle;
            throw;
        }
        *out = handle;
    });
}

void dp3d_codes_free(dp3d_codes* codes) { delete codes; }

dp3d_status dp3d_codes_save(const dp3d_codes* codes, const char* path) {
    return guarded([&] {
        require(codes && path, "codes and path are required");
        dp3d::io::save_codes(codes->v, path);
    });
}

dp3d_status dp3d_codes_load(const char* path, dp3d_codes** out) {
    return guarded([&] {
        require(path && out, "path and output handle are required");
        *out = new dp3d_codes{dp3d::io::load_codes(path)};
    });
}

size_t dp3d_codes_count(const dp3d_codes* codes) { return codes ? codes->v.size() : 0; }

int dp3d_codes_bits(const dp3d_codes* codes) {
    return codes && !codes->v.empty() ? codes->v.front().bits : 0;
}

dp3d_status dp3d_codes_hamming_rank(const dp3d_codes* queries, size_t query_index,
                                    const dp3d_codes* targets, int32_t* ranked, size_t* count) {
    return guarded([&] {
        require(queries && targets && count, "queries, targets and count are required");
        require(query_index < queries->v.size(), "query index out of range");
        const std::vector<int> order =
            dp3d::itq::hamming_rank(queries->v[query_index], targets->v);
        if (ranked) {
            require(*count >= order.size(), "rank buffer too small");
            for (std::size_t i = 0; i < order.size(); ++i) {
                ranked[i] = static_cast<int32_t>(order[i]);
            }
        }
        *count = order.size();
    });
}

}  // extern "C"
