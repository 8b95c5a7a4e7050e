#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace dp3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct PointCloud {
    std::string id;
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty, or one unit normal per point

    bool has_normals() const { return !normals.empty(); }
    std::size_t size() const { return points.size(); }
};

// Canonical frame at a keypoint. Rows of `axes` are the x/y/z axes, so
// axes * (p - origin) maps a world point into the frame.
struct Lrf {
    Vec3 origin = Vec3::Zero();
    Mat3 axes = Mat3::Identity();
    double support_radius = 0.0;
};

// Fixed-size network input: N neighbor points expressed in the LRF and
// divided by the support radius. Entries at index >= valid_count are cyclic
// copies of the accepted points.
struct Patch {
    int keypoint_index = -1;
    std::vector<Vec3> points;
    int valid_count = 0;
    Lrf lrf;
};

struct IssParams {
    double salient_radius = 0.0;
    double gamma_21 = 0.975;
    double gamma_32 = 0.975;
    double nms_radius = 0.0;
    int min_neighbors = 5;
};

struct PatchParams {
    double radius = 0.0;
    int n_points = 64;
    double theta_min = 0.2;
};

// One model of a corpus: cloud, keypoints (indices into the cloud), and an
// opaque part label per keypoint.
struct Model {
    PointCloud cloud;
    std::vector<int> keypoints;
    std::vector<int> part_labels;
};

// Ground-truth correspondences between two models. Pair indices refer to
// positions in each model's keypoint list. sym_* map keypoint positions to
// symmetry-equivalence group ids; keypoints without an entry have no group.
struct CorrespondenceSet {
    std::string model_a;
    std::string model_b;
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::pair<int, int>> sym_a;  // (keypoint position, group id)
    std::vector<std::pair<int, int>> sym_b;
};

struct Corpus {
    std::vector<Model> models;
    std::vector<CorrespondenceSet> correspondences;

    int model_index(const std::string& id) const {
        for (std::size_t i = 0; i < models.size(); ++i) {
            if (models[i].cloud.id == id) return static_cast<int>(i);
        }
        return -1;
    }
};

// Descriptors of one model's keypoints; keypoint_indices are cloud point
// indices, one per record. dim is carried explicitly so empty sets keep it.
struct DescriptorSet {
    int dim = 0;
    std::vector<int> keypoint_indices;
    std::vector<Eigen::VectorXd> values;

    std::size_t size() const { return values.size(); }
};

}  // namespace dp3d
