#pragma once

#include "core/types.hpp"

#include <Eigen/Core>

#include <array>
#include <vector>

namespace dp3d::baseline {

// azimuth x elevation x radial x normal-cosine bins
struct HistogramBins {
    int azimuth = 8;
    int elevation = 2;
    int radial = 2;
    int cosine = 8;

    int total() const { return azimuth * elevation * radial * cosine; }
};

struct NndrMatch {
    int query_index = -1;
    int target_index = -1;
    double ratio = 0.0;
};

// Hard-binned histogram over the LRF-aligned support region, L2-normalized.
// Stands in for a full handcrafted descriptor in mining and evaluation.
Eigen::VectorXd compute_histogram_descriptor(const PointCloud& cloud, int keypoint_index,
                                             double radius, const HistogramBins& bins);

// Nearest-neighbor distance ratio matching: emits (query, nearest target)
// whenever d1/d2 <= max_ratio. Ties resolved by lower target index.
std::vector<NndrMatch> nndr_match(const std::vector<Eigen::VectorXd>& queries,
                                  const std::vector<Eigen::VectorXd>& targets, double max_ratio);

}  // namespace dp3d::baseline
