#pragma once

#include "core/baseline.hpp"
#include "core/dataset.hpp"
#include "core/types.hpp"

#include <cstdint>
#include <vector>

namespace dp3d::mining {

struct MiningConfig {
    PatchParams patch;
    baseline::HistogramBins bins;
    int normals_k = 12;              // k-NN for estimated normals when absent
    double soft_distance_threshold = 0.7;
    double nndr_max_ratio = 0.8;
    std::size_t positive_budget = 0;  // 0 = keep all
    std::size_t soft_budget = 0;      // 0 = half the positive count
    std::size_t hard_budget = 0;      // 0 = half the positive count
    std::uint64_t seed = 0;
};

// Caches per-model baseline descriptors and normals so the negative miners
// share one computation.
class CorpusContext {
public:
    CorpusContext(const Corpus& corpus, const MiningConfig& cfg);

    const Corpus& corpus() const { return *corpus_; }
    const MiningConfig& config() const { return cfg_; }
    const PointCloud& cloud_with_normals(int model) const;
    // Baseline descriptor per keypoint position; zero-size if not computable.
    const std::vector<Eigen::VectorXd>& baseline_descriptors(int model) const;
    bool is_ground_truth(int model_a, int kp_a, int model_b, int kp_b) const;

private:
    const Corpus* corpus_;
    MiningConfig cfg_;
    std::vector<PointCloud> clouds_;
    std::vector<std::vector<Eigen::VectorXd>> descriptors_;
};

std::vector<TrainingPair> build_positive_pairs(const Corpus& corpus, const MiningConfig& cfg,
                                               std::size_t* skipped = nullptr);

std::vector<TrainingPair> mine_soft_negatives(CorpusContext& ctx);
std::vector<TrainingPair> mine_hard_negatives(CorpusContext& ctx);

std::vector<TrainingTriplet> build_triplets(CorpusContext& ctx, std::size_t budget);

// Full pipeline: positives plus both negative sets (or triplets), in
// canonical order, serializable as one dataset.
struct MineCounts {
    std::size_t positives = 0;
    std::size_t soft = 0;
    std::size_t hard = 0;
    std::size_t skipped = 0;
};
Dataset mine_dataset(const Corpus& corpus, const MiningConfig& cfg, Dataset::Kind kind,
                     MineCounts* counts = nullptr);

// Appends subsampled copies of every model; keypoints are remapped to the
// nearest retained point and dropped if that moves them farther than twice
// the model resolution. Correspondences are remapped onto the copies.
Corpus augment_multiresolution(const Corpus& corpus, const std::vector<double>& fractions,
                               std::uint64_t seed);

// Deterministic global split by model-id hash. keep_train selects which side
// is returned; correspondence sets crossing the split are dropped.
Corpus split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed,
                    bool keep_train);

}  // namespace dp3d::mining
