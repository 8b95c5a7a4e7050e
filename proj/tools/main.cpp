// dp3d command-line tool. Everything goes through the shared-library C API.

#include <dp3d.h>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CliError {
    int code;
    std::string message;
};

void check(dp3d_status status) {
    if (status != DP3D_OK) {
        throw CliError{kExitRuntime, std::string(dp3d_status_name(status)) + ": " +
                                         dp3d_last_error()};
    }
}

void usage_error(const std::string& message) { throw CliError{kExitUsage, message}; }

// RAII wrappers around the C handles
template <typename T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    explicit Handle(T* p) : ptr(p) {}
    ~Handle() { Free(ptr); }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
    Handle& operator=(Handle&& o) noexcept {
        if (this != &o) {
            Free(ptr);
            ptr = o.ptr;
            o.ptr = nullptr;
        }
        return *this;
    }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
    explicit operator bool() const { return ptr != nullptr; }
};

using CloudHandle = Handle<dp3d_cloud, dp3d_cloud_free>;
using CorpusHandle = Handle<dp3d_corpus, dp3d_corpus_free>;
using DatasetHandle = Handle<dp3d_dataset, dp3d_dataset_free>;
using CheckpointHandle = Handle<dp3d_checkpoint, dp3d_checkpoint_free>;
using DescriptorSetHandle = Handle<dp3d_descriptor_set, dp3d_descriptor_set_free>;
using ItqHandle = Handle<dp3d_itq_model, dp3d_itq_free>;
using CodesHandle = Handle<dp3d_codes, dp3d_codes_free>;
using ReportHandle = Handle<dp3d_eval_report, dp3d_eval_report_free>;

struct DescriptorSetArray {
    dp3d_descriptor_set** sets = nullptr;
    size_t count = 0;
    ~DescriptorSetArray() { dp3d_descriptor_sets_free(sets, count); }
};

std::vector<int32_t> load_keypoint_file(const std::string& path) {
    size_t count = 0;
    check(dp3d_keypoints_load(path.c_str(), nullptr, &count));
    std::vector<int32_t> indices(count);
    check(dp3d_keypoints_load(path.c_str(), indices.data(), &count));
    indices.resize(count);
    return indices;
}

struct PatchFlags {
    double radius = 0.0;
    int n_points = 64;
    double theta_min = 0.2;

    void attach(CLI::App* cmd, bool radius_required = true) {
        auto* r = cmd->add_option("--radius", radius, "patch support radius (model units)");
        if (radius_required) r->required();
        cmd->add_option("--n-points", n_points, "points per patch (N)")->capture_default_str();
        cmd->add_option("--theta-min", theta_min, "angular constraint in radians")->capture_default_str();
    }
    dp3d_patch_params params() const { return {radius, n_points, theta_min}; }
};

struct TrainFlags {
    std::string loss = "mmcl";
    double m = 1.0, m1 = 2.0, m2 = 1.0, b = 0.0, lambda = 1e-4;
    std::vector<int32_t> arch = {3, 32, 64, 128};
    std::vector<int32_t> head = {128, 128, 128};
    std::string variant = "patch_siamese";
    int epochs = 30, batch_size = 32;
    double lr = 1e-2, momentum = 0.9;
    std::uint64_t seed = 0;
    bool no_shuffle = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--loss", loss, "hinge | contrastive | triplet | mmcl")->capture_default_str();
        cmd->add_option("--m", m, "margin for single-margin losses")->capture_default_str();
        cmd->add_option("--m1", m1, "hard-negative margin")->capture_default_str();
        cmd->add_option("--m2", m2, "soft-negative margin")->capture_default_str();
        cmd->add_option("--b", b, "hinge bias")->capture_default_str();
        cmd->add_option("--lambda", lambda, "weight-decay coefficient")->capture_default_str();
        cmd->add_option("--arch", arch, "per-point MLP widths, starting at 3")->delimiter(',');
        cmd->add_option("--head", head, "head widths; the last one is D")->delimiter(',');
        cmd->add_option("--variant", variant, "patch_siamese | aggregated")->capture_default_str();
        cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
        cmd->add_option("--batch-size", batch_size, "mini-batch size")->capture_default_str();
        cmd->add_option("--lr", lr, "learning rate")->capture_default_str();
        cmd->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
        cmd->add_option("--seed", seed, "random seed")->capture_default_str();
        cmd->add_flag("--no-shuffle", no_shuffle, "keep dataset order within epochs");
    }
    dp3d_train_params params() const {
        dp3d_train_params p{};
        p.loss = loss.c_str();
        p.m = m;
        p.m1 = m1;
        p.m2 = m2;
        p.b = b;
        p.lambda = lambda;
        p.point_dims = arch.data();
        p.n_point_dims = arch.size();
        p.head_dims = head.data();
        p.n_head_dims = head.size();
        p.variant = variant.c_str();
        p.epochs = epochs;
        p.batch_size = batch_size;
        p.learning_rate = lr;
        p.momentum = momentum;
        p.seed = seed;
        p.shuffle = no_shuffle ? 0 : 1;
        return p;
    }
};

// ---- synth ------------------------------------------------------------------

struct SynthCmd {
    std::string kind = "composite";
    int count = 20;
    int archetypes = 4;
    int points = 1800;
    int keypoints = 40;
    double noise = 0.3;
    std::uint64_t seed = 0;
    std::string out;

    void run() const {
        dp3d_synth_params params{kind.c_str(), count,  archetypes, points,
                                 keypoints,    noise, seed};
        check(dp3d_synth_generate(&params, out.c_str()));
        std::printf("wrote %d models to %s\n", count, out.c_str());
    }
};

// ---- mine -------------------------------------------------------------------

struct MineCmd {
    std::string manifest;
    std::string out;
    PatchFlags patch;
    int normals_k = 12;
    double distance_threshold = 0.7;
    double nndr = 0.8;
    std::size_t positives = 0, soft = 0, hard = 0;
    std::uint64_t seed = 0;
    bool triplets = false;
    std::vector<double> fractions;
    std::string split = "all";
    double train_fraction = 0.8;
    std::uint64_t split_seed = 0;

    void run() const {
        CorpusHandle corpus;
        check(dp3d_corpus_load(manifest.c_str(), corpus.out()));
        if (split != "all") {
            if (split != "train" && split != "test") usage_error("--split must be train|test|all");
            CorpusHandle side;
            check(dp3d_corpus_split(corpus.get(), train_fraction, split_seed,
                                    split == "train" ? 1 : 0, side.out()));
            corpus = std::move(side);
        }
        if (!fractions.empty()) {
            CorpusHandle augmented;
            check(dp3d_corpus_augment(corpus.get(), fractions.data(), fractions.size(), seed,
                                      augmented.out()));
            corpus = std::move(augmented);
        }

        dp3d_mine_params params{};
        params.patch = patch.params();
        params.normals_k = normals_k;
        params.soft_distance_threshold = distance_threshold;
        params.nndr_max_ratio = nndr;
        params.positive_budget = positives;
        params.soft_budget = soft;
        params.hard_budget = hard;
        params.seed = seed;
        params.triplets = triplets ? 1 : 0;

        DatasetHandle dataset;
        check(dp3d_mine(corpus.get(), &params, dataset.out()));
        check(dp3d_dataset_save(dataset.get(), out.c_str()));

        size_t n_pos = 0, n_soft = 0, n_hard = 0;
        dp3d_dataset_counts(dataset.get(), &n_pos, &n_soft, &n_hard);
        if (triplets) {
            std::printf("triplets: %zu\n", n_pos);
        } else {
            std::printf("positives: %zu\nsoft negatives: %zu\nhard negatives: %zu\n", n_pos,
                        n_soft, n_hard);
        }
    }
};

// ---- train ------------------------------------------------------------------

struct TrainCmd {
    std::string dataset_path;
    std::string out;
    TrainFlags flags;

    void run() const {
        DatasetHandle dataset;
        check(dp3d_dataset_load(dataset_path.c_str(), dataset.out()));
        const bool want_triplets = flags.loss == "triplet";
        if (want_triplets != (dp3d_dataset_is_triplets(dataset.get()) != 0)) {
            usage_error("--loss " + flags.loss + " does not match the dataset kind");
        }
        const dp3d_train_params params = flags.params();
        CheckpointHandle checkpoint;
        check(dp3d_train(
            dataset.get(), &params,
            [](int epoch, double loss, void*) { std::printf("epoch %d: loss %.6f\n", epoch, loss); },
            nullptr, checkpoint.out()));
        check(dp3d_checkpoint_save(checkpoint.get(), out.c_str()));
        std::printf("checkpoint written to %s\n", out.c_str());
    }
};

// ---- describe ----------------------------------------------------------------

struct DescribeCmd {
    std::string checkpoint_path;
    bool baseline = false;
    std::string cloud_path;
    std::string keypoints_path;
    bool iss = false;
    PatchFlags patch;
    std::vector<int> bins = {8, 2, 2, 8};
    int normals_k = 12;
    std::string out;

    void run() const {
        if (baseline == !checkpoint_path.empty()) {
            usage_error("pass exactly one of --checkpoint or --baseline");
        }
        if (iss == !keypoints_path.empty()) {
            usage_error("pass exactly one of --keypoints or --iss");
        }
        if (bins.size() != 4) usage_error("--bins needs 4 values");

        CloudHandle cloud;
        check(dp3d_cloud_load(cloud_path.c_str(), cloud.out()));

        std::vector<int32_t> keypoints;
        if (iss) {
            size_t count = 0;
            check(dp3d_detect_iss(cloud.get(), nullptr, nullptr, &count));
            keypoints.resize(count);
            check(dp3d_detect_iss(cloud.get(), nullptr, keypoints.data(), &count));
            std::printf("detected %zu keypoints\n", count);
        } else {
            keypoints = load_keypoint_file(keypoints_path);
        }

        const dp3d_patch_params pp = patch.params();
        DescriptorSetHandle set;
        if (baseline) {
            dp3d_baseline_params bp{bins[0], bins[1], bins[2], bins[3], normals_k};
            check(dp3d_describe_baseline(cloud.get(), keypoints.data(), keypoints.size(), &pp,
                                         &bp, set.out()));
        } else {
            CheckpointHandle checkpoint;
            check(dp3d_checkpoint_load(checkpoint_path.c_str(), checkpoint.out()));
            check(dp3d_describe(checkpoint.get(), cloud.get(), keypoints.data(),
                                keypoints.size(), &pp, set.out()));
        }
        check(dp3d_descriptor_set_save(set.get(), out.c_str()));
        std::printf("described %zu of %zu keypoints (D = %d)\n",
                    dp3d_descriptor_set_count(set.get()), keypoints.size(),
                    dp3d_descriptor_set_dim(set.get()));
    }
};

// ---- eval --------------------------------------------------------------------

struct EvalCmd {
    std::string manifest;
    std::string checkpoint_path;
    bool baseline = false;
    std::vector<std::string> descriptor_paths;
    int k = 100;
    double tau = 0.25;
    std::string match_rule = "mutual";
    double nndr = 0.8;
    std::string symmetry = "symmetric";
    PatchFlags patch;
    std::vector<int> bins = {8, 2, 2, 8};
    int normals_k = 12;
    std::string csv;

    void run() const {
        const int sources = (checkpoint_path.empty() ? 0 : 1) + (baseline ? 1 : 0) +
                            (descriptor_paths.empty() ? 0 : 1);
        if (sources != 1) {
            usage_error("pass exactly one of --checkpoint, --baseline or --descriptors");
        }
        if (symmetry != "symmetric" && symmetry != "non_symmetric") {
            usage_error("--symmetry must be symmetric|non_symmetric");
        }
        if (descriptor_paths.empty() && patch.radius <= 0.0) {
            usage_error("--radius is required unless --descriptors is given");
        }

        CorpusHandle corpus;
        check(dp3d_corpus_load(manifest.c_str(), corpus.out()));

        DescriptorSetArray sets;
        std::vector<DescriptorSetHandle> loaded;
        std::vector<const dp3d_descriptor_set*> set_ptrs;
        if (!descriptor_paths.empty()) {
            if (descriptor_paths.size() != dp3d_corpus_model_count(corpus.get())) {
                usage_error("--descriptors needs one file per manifest model, in order");
            }
            for (const std::string& path : descriptor_paths) {
                DescriptorSetHandle set;
                check(dp3d_descriptor_set_load(path.c_str(), set.out()));
                loaded.push_back(std::move(set));
            }
            for (const auto& h : loaded) set_ptrs.push_back(h.get());
        } else {
            const dp3d_patch_params pp = patch.params();
            dp3d_baseline_params bp{bins[0], bins[1], bins[2], bins[3], normals_k};
            CheckpointHandle checkpoint;
            if (!checkpoint_path.empty()) {
                check(dp3d_checkpoint_load(checkpoint_path.c_str(), checkpoint.out()));
            }
            check(dp3d_describe_corpus(corpus.get(), checkpoint.get(), &pp, &bp, &sets.sets,
                                       &sets.count));
            for (size_t i = 0; i < sets.count; ++i) set_ptrs.push_back(sets.sets[i]);
        }

        dp3d_eval_params params{k, tau, match_rule.c_str(), nndr, 1};
        ReportHandle symmetric;
        check(dp3d_evaluate(corpus.get(), set_ptrs.data(), set_ptrs.size(), &params,
                            symmetric.out()));
        params.symmetric = 0;
        ReportHandle non_symmetric;
        check(dp3d_evaluate(corpus.get(), set_ptrs.data(), set_ptrs.size(), &params,
                            non_symmetric.out()));

        size_t size = 0;
        check(dp3d_eval_report_format(symmetric.get(), non_symmetric.get(), nullptr, &size));
        std::string text(size, '\0');
        check(dp3d_eval_report_format(symmetric.get(), non_symmetric.get(), text.data(), &size));
        std::fputs(text.c_str(), stdout);

        if (!csv.empty()) {
            const dp3d_eval_report* chosen =
                symmetry == "symmetric" ? symmetric.get() : non_symmetric.get();
            check(dp3d_eval_report_write_csv(chosen, csv.c_str()));
            std::printf("csv written to %s\n", csv.c_str());
        }
    }
};

// ---- binarize ------------------------------------------------------------------

struct BinarizeCmd {
    std::vector<std::string> descriptor_paths;
    int bits = 128;
    int iters = 50;
    std::uint64_t seed = 0;
    std::string out;
    std::string model_out;

    void run() const {
        std::vector<DescriptorSetHandle> loaded;
        for (const std::string& path : descriptor_paths) {
            DescriptorSetHandle set;
            check(dp3d_descriptor_set_load(path.c_str(), set.out()));
            loaded.push_back(std::move(set));
        }
        std::vector<const dp3d_descriptor_set*> set_ptrs;
        for (const auto& h : loaded) set_ptrs.push_back(h.get());

        ItqHandle model;
        check(dp3d_itq_train(set_ptrs.data(), set_ptrs.size(), bits, iters, seed, model.out()));
        check(dp3d_itq_save(model.get(), model_out.c_str()));

        // encode with the stored model so codes match any later re-encode
        ItqHandle stored;
        check(dp3d_itq_load(model_out.c_str(), stored.out()));
        size_t total = 0;
        for (size_t i = 0; i < loaded.size(); ++i) {
            CodesHandle codes;
            check(dp3d_itq_encode(stored.get(), loaded[i].get(), codes.out()));
            std::string path = out;
            if (loaded.size() > 1) {
                path += "." + std::to_string(i);
            }
            check(dp3d_codes_save(codes.get(), path.c_str()));
            total += dp3d_codes_count(codes.get());
        }
        std::printf("encoded %zu descriptors to %d-bit codes\n", total, bits);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D point-cloud local descriptor toolkit"};
    app.require_subcommand(1);

    SynthCmd synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    synth_cmd->add_option("--kind", synth.kind, "box | cylinder | ellipsoid | composite")->capture_default_str();
    synth_cmd->add_option("--count", synth.count, "number of models")->capture_default_str();
    synth_cmd->add_option("--archetypes", synth.archetypes, "number of shape archetypes")->capture_default_str();
    synth_cmd->add_option("--points", synth.points, "points per model")->capture_default_str();
    synth_cmd->add_option("--keypoints", synth.keypoints, "keypoints per model")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "jitter in units of model resolution")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "random seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "output directory")->required();

    MineCmd mine;
    auto* mine_cmd = app.add_subcommand("mine", "build a training set from a corpus");
    mine_cmd->add_option("--manifest", mine.manifest, "corpus manifest")->required();
    mine_cmd->add_option("--out", mine.out, "output training-set file")->required();
    mine.patch.attach(mine_cmd);
    mine_cmd->add_option("--normals-k", mine.normals_k, "k-NN for estimated normals")->capture_default_str();
    mine_cmd->add_option("--distance-threshold", mine.distance_threshold,
                         "soft-negative descriptor distance threshold")->capture_default_str();
    mine_cmd->add_option("--nndr", mine.nndr, "hard-negative NNDR ratio")->capture_default_str();
    mine_cmd->add_option("--positives", mine.positives, "positive budget (0 = all)")->capture_default_str();
    mine_cmd->add_option("--soft", mine.soft, "soft-negative budget (0 = positives/2)")->capture_default_str();
    mine_cmd->add_option("--hard", mine.hard, "hard-negative budget (0 = positives/2)")->capture_default_str();
    mine_cmd->add_option("--seed", mine.seed, "random seed")->capture_default_str();
    mine_cmd->add_flag("--triplets", mine.triplets, "mine (anchor, positive, negative) triplets");
    mine_cmd->add_option("--fractions", mine.fractions,
                         "multi-resolution augmentation fractions in (0, 1)")->delimiter(',');
    mine_cmd->add_option("--split", mine.split, "train | test | all")->capture_default_str();
    mine_cmd->add_option("--train-fraction", mine.train_fraction, "split fraction")->capture_default_str();
    mine_cmd->add_option("--split-seed", mine.split_seed, "split hash seed")->capture_default_str();

    TrainCmd train;
    auto* train_cmd = app.add_subcommand("train", "train the descriptor encoder");
    train_cmd->add_option("--dataset", train.dataset_path, "training-set file")->required();
    train_cmd->add_option("--out", train.out, "output checkpoint")->required();
    train.flags.attach(train_cmd);

    DescribeCmd describe;
    auto* describe_cmd = app.add_subcommand("describe", "compute keypoint descriptors");
    describe_cmd->add_option("--checkpoint", describe.checkpoint_path, "trained checkpoint");
    describe_cmd->add_flag("--baseline", describe.baseline, "use the histogram baseline");
    describe_cmd->add_option("--cloud", describe.cloud_path, "input cloud (.xyz or .ply)")
        ->required();
    describe_cmd->add_option("--keypoints", describe.keypoints_path, "keypoint index file");
    describe_cmd->add_flag("--iss", describe.iss, "detect keypoints with ISS");
    describe.patch.attach(describe_cmd);
    describe_cmd->add_option("--bins", describe.bins,
                             "baseline bins: azimuth elevation radial cosine")->delimiter(',');
    describe_cmd->add_option("--normals-k", describe.normals_k, "k-NN for estimated normals")
        ->capture_default_str();
    describe_cmd->add_option("--out", describe.out, "output descriptor file")->required();

    EvalCmd eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate descriptors on a corpus");
    eval_cmd->add_option("--manifest", eval.manifest, "corpus manifest")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "trained checkpoint");
    eval_cmd->add_flag("--baseline", eval.baseline, "use the histogram baseline");
    eval_cmd->add_option("--descriptors", eval.descriptor_paths,
                         "precomputed descriptor files, one per model")->delimiter(',');
    eval_cmd->add_option("--k", eval.k, "CMC cutoff")->capture_default_str();
    eval_cmd->add_option("--tau", eval.tau, "correspondence error threshold")->capture_default_str();
    eval_cmd->add_option("--match-rule", eval.match_rule, "mutual | nndr")->capture_default_str();
    eval_cmd->add_option("--nndr", eval.nndr, "NNDR ratio for the nndr rule")->capture_default_str();
    eval_cmd->add_option("--symmetry", eval.symmetry,
                         "symmetry mode written to the CSV: symmetric | non_symmetric")->capture_default_str();
    eval.patch.attach(eval_cmd, /*radius_required=*/false);
    eval_cmd->add_option("--bins", eval.bins, "baseline bins")->delimiter(',');
    eval_cmd->add_option("--normals-k", eval.normals_k, "k-NN for estimated normals")->capture_default_str();
    eval_cmd->add_option("--csv", eval.csv, "CSV output path");

    BinarizeCmd binarize;
    auto* binarize_cmd = app.add_subcommand("binarize", "quantize descriptors to binary codes");
    binarize_cmd->add_option("--descriptors", binarize.descriptor_paths, "descriptor files")
        ->required()->delimiter(',');
    binarize_cmd->add_option("--bits", binarize.bits, "code length in bits")->capture_default_str();
    binarize_cmd->add_option("--iters", binarize.iters, "refinement iterations")->capture_default_str();
    binarize_cmd->add_option("--seed", binarize.seed, "random seed")->capture_default_str();
    binarize_cmd->add_option("--out", binarize.out, "output code file")->required();
    binarize_cmd->add_option("--model-out", binarize.model_out, "output quantizer model")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) synth.run();
        else if (mine_cmd->parsed()) mine.run();
        else if (train_cmd->parsed()) train.run();
        else if (describe_cmd->parsed()) describe.run();
        else if (eval_cmd->parsed()) eval.run();
        else if (binarize_cmd->parsed()) binarize.run();
    } catch (const CliError& e) {
        std::fprintf(stderr, "%s\n", e.message.c_str());
        return e.code;
    }
    return kExitOk;
}
