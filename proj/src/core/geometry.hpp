#pragma once

#include "core/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace dp3d::geom {

// Mean distance to the nearest distinct (d > 0) neighbor, over all points
// that have one. This is the "mesh resolution" the radius defaults scale by.
double compute_resolution(const PointCloud& cloud);

// ceil(fraction * count) points chosen uniformly without replacement.
// Selected indices are emitted in ascending order, so fraction = 1 returns
// the input unchanged.
PointCloud subsample(const PointCloud& cloud, double fraction, std::uint64_t seed);

// Normal per point from the k-NN scatter matrix, oriented away from the
// cloud centroid.
PointCloud estimate_normals(const PointCloud& cloud, int k);

IssParams default_iss_params(double resolution);

// Eigenvalue-ratio ISS detector with non-maximum suppression on the smallest
// eigenvalue. Returns indices sorted by descending saliency.
std::vector<int> detect_iss_keypoints(const PointCloud& cloud, const IssParams& params);

// Support points within radius of the keypoint, excluding exact duplicates
// of it, as (distance, index) sorted by ascending distance (ties by index).
std::vector<std::pair<double, int>> radius_support(const PointCloud& cloud,
                                                   int keypoint_index, double radius);

// Distance-weighted scatter matrix of the support region (the matrix whose
// eigenvectors define the LRF). Exposed separately so tests can check it
// against a direct summation.
Mat3 lrf_scatter_matrix(const PointCloud& cloud, int keypoint_index, double radius);

Lrf compute_lrf(const PointCloud& cloud, int keypoint_index, double radius);

// Angular-constraint neighborhood: candidates by ascending distance, greedy
// acceptance iff the angle at the keypoint to every accepted point is
// >= theta_min, transformed into the LRF and divided by the radius. Padded
// to n_points by cycling through the accepted points.
Patch extract_patch(const PointCloud& cloud, int keypoint_index, const PatchParams& params);

}  // namespace dp3d::geom
