#pragma once

#include "core/model.hpp"
#include "core/types.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace dp3d::eval {

enum class MatchRule { mutual_nearest, nndr };
enum class SymmetryMode { symmetric, non_symmetric };

struct EvalConfig {
    int k = 100;
    double tau = 0.25;
    MatchRule match_rule = MatchRule::mutual_nearest;
    double nndr_ratio = 0.8;
    SymmetryMode symmetry = SymmetryMode::non_symmetric;

    void validate() const;
};

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double corr_accuracy = 0.0;
    std::vector<double> cmc;
    bool zero_matches = false;     // precision reported as 0 because no match was emitted
    std::size_t dropped_pairs = 0; // ground-truth pairs without descriptors on both ends
};

// Descriptors aligned with a model's keypoint list; a zero-size vector marks
// a keypoint whose patch extraction failed.
using ModelDescriptors = std::vector<Eigen::VectorXd>;

// Everything the metrics need for one ordered shape pair. Keypoint positions
// are pre-scaled by the owning model's bounding-box diagonal so the error
// threshold tau is dimensionless.
struct PairInstance {
    std::vector<std::pair<int, int>> gt_pairs;  // (query kp position, target kp position)
    std::vector<std::pair<int, int>> sym_query;
    std::vector<std::pair<int, int>> sym_target;
    std::vector<std::vector<int>> rankings;  // per query kp position; empty = no descriptor
    std::vector<std::optional<Vec3>> target_positions;  // normalized; nullopt = no descriptor
    std::vector<std::pair<int, int>> matches;  // decided (query, target) list
};

int sym_group_of(const std::vector<std::pair<int, int>>& groups, int keypoint);

// One descriptor per keypoint whose patch extraction succeeds; indices of the
// failures are appended to `failed` when given.
ModelDescriptors describe_keypoints(const model::EncoderParams& params, const PointCloud& cloud,
                                    const std::vector<int>& keypoints, const PatchParams& patch,
                                    std::vector<int>* failed = nullptr);

// Full ranking of target indices by ascending Euclidean distance, ties by
// lower index. Queries with no descriptor get an empty ranking.
std::vector<std::vector<int>> rank_matches(const ModelDescriptors& queries,
                                           const ModelDescriptors& targets);

std::vector<std::pair<int, int>> decide_matches(const ModelDescriptors& queries,
                                                const ModelDescriptors& targets,
                                                const EvalConfig& cfg);

// Fraction of ground-truth correspondences whose true target (or, in
// symmetric mode, any keypoint sharing its symmetry group) appears within the
// top r ranks, for r = 1..k, averaged over shape pairs.
std::vector<double> cmc_curve(const std::vector<PairInstance>& instances, const EvalConfig& cfg);

// Fraction of rank-1 matches within distance tau of the true target position,
// averaged over shape pairs.
double correspondence_accuracy(const std::vector<PairInstance>& instances, const EvalConfig& cfg);

// Pooled over shape pairs: precision = correct / emitted matches,
// recall = correct / ground-truth correspondences.
struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    bool zero_matches = false;
};
PrecisionRecall precision_recall(const std::vector<PairInstance>& instances,
                                 const EvalConfig& cfg);

// Assemble per-shape-pair inputs from a corpus and its descriptors, then run
// all four metrics.
std::vector<PairInstance> build_instances(const Corpus& corpus,
                                          const std::vector<ModelDescriptors>& descriptors,
                                          const EvalConfig& cfg, std::size_t* dropped = nullptr);

EvalReport evaluate(const Corpus& corpus, const std::vector<ModelDescriptors>& descriptors,
                    const EvalConfig& cfg);

double bounding_box_diagonal(const PointCloud& cloud);

// k lines of "rank,cmc_value" plus one summary row with
// precision/recall/correspondence accuracy.
std::string format_report_csv(const EvalReport& report);

// Plain-text table covering both symmetry modes.
std::string format_report_text(const EvalReport& symmetric, const EvalReport& non_symmetric);

}  // namespace dp3d::eval
