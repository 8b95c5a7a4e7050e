#include "core/geometry.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dp3d::geom {

namespace {

void require_points(const PointCloud& cloud) {
    if (cloud.points.empty()) fail(Err::InvalidInput, "point cloud is empty");
}

void require_index(const PointCloud& cloud, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= cloud.size()) {
        fail(Err::InvalidInput, "keypoint index out of range");
    }
}

// k nearest neighbors of cloud[index] (self excluded), by (distance, index).
std::vector<int> knn_indices(const PointCloud& cloud, int index, int k) {
    const Vec3& p = cloud.points[index];
    std::vector<std::pair<double, int>> dists;
    dists.reserve(cloud.size() - 1);
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (static_cast<int>(j) == index) continue;
        dists.emplace_back((cloud.points[j] - p).norm(), static_cast<int>(j));
    }
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    std::vector<int> out(k);
    for (int j = 0; j < k; ++j) out[j] = dists[j].second;
    return out;
}

// Eigenvectors of a symmetric 3x3, columns ordered by descending eigenvalue.
void eigen_descending(const Mat3& m, Vec3& values, Mat3& vectors) {
    Eigen::SelfAdjointEigenSolver<Mat3> solver(m);
    // solver returns ascending order
    for (int i = 0; i < 3; ++i) {
        values[i] = solver.eigenvalues()[2 - i];
        vectors.col(i) = solver.eigenvectors().col(2 - i);
    }
}

}  // namespace

double compute_resolution(const PointCloud& cloud) {
    if (cloud.size() < 2) fail(Err::InvalidInput, "resolution needs at least 2 points");
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            if (i == j) continue;
            double d = (cloud.points[i] - cloud.points[j]).norm();
            if (d > 0.0 && d < best) best = d;
        }
        if (std::isfinite(best)) {
            sum += best;
            ++counted;
        }
    }
    if (counted == 0) fail(Err::InvalidInput, "all points coincide");
    return sum / static_cast<double>(counted);
}

PointCloud subsample(const PointCloud& cloud, double fraction, std::uint64_t seed) {
    require_points(cloud);
    if (fraction <= 0.0 || fraction > 1.0) fail(Err::InvalidInput, "fraction must be in (0, 1]");
    const std::size_t n = cloud.size();
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (keep < 2) fail(Err::InvalidInput, "subsample would leave fewer than 2 points");

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < keep; ++i) {
        std::size_t j = i + rng.next_below(n - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(keep);
    std::sort(indices.begin(), indices.end());

    PointCloud out;
    out.id = cloud.id;
    out.points.reserve(keep);
    if (cloud.has_normals()) out.normals.reserve(keep);
    for (std::size_t idx : indices) {
        out.points.push_back(cloud.points[idx]);
        if (cloud.has_normals()) out.normals.push_back(cloud.normals[idx]);
    }
    return out;
}

PointCloud estimate_normals(const PointCloud& cloud, int k) {
    require_points(cloud);
    if (k < 3) fail(Err::InvalidInput, "normal estimation needs k >= 3");
    if (cloud.size() <= static_cast<std::size_t>(k)) {
        fail(Err::InvalidInput, "normal estimation needs more than k points");
    }

    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.size());

    PointCloud out = cloud;
    out.normals.assign(cloud.size(), Vec3::Zero());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::vector<int> nn = knn_indices(cloud, static_cast<int>(i), k);
        Vec3 mean = Vec3::Zero();
        for (int j : nn) mean += cloud.points[j];
        mean /= static_cast<double>(k);
        Mat3 scatter = Mat3::Zero();
        for (int j : nn) {
            Vec3 d = cloud.points[j] - mean;
            scatter += d * d.transpose();
        }
        if (scatter.isZero(0.0)) {
            fail(Err::DegenerateGeometry, "degenerate neighborhood at point " + std::to_string(i));
        }
        Eigen::SelfAdjointEigenSolver<Mat3> solver(scatter);
        Vec3 normal = solver.eigenvectors().col(0);  // smallest eigenvalue
        double outward = normal.dot(cloud.points[i] - centroid);
        if (outward < 0.0) {
            normal = -normal;
        } else if (outward == 0.0) {
            // centroid-coplanar point: orient by the dominant component so
            // all points of a plane get the same sign
            int c;
            normal.cwiseAbs().maxCoeff(&c);
            if (normal[c] < 0.0) normal = -normal;
        }
        out.normals[i] = normal.normalized();
    }
    return out;
}

IssParams default_iss_params(double resolution) {
    IssParams p;
    p.salient_radius = 6.0 * resolution;
    p.nms_radius = 4.0 * resolution;
    return p;
}

std::vector<int> detect_iss_keypoints(const PointCloud& cloud, const IssParams& params) {
    require_points(cloud);
    if (params.salient_radius <= 0.0 || params.nms_radius <= 0.0 || params.min_neighbors < 5 ||
        params.gamma_21 <= 0.0 || params.gamma_21 >= 1.0 || params.gamma_32 <= 0.0 ||
        params.gamma_32 >= 1.0) {
        fail(Err::InvalidConfig, "invalid ISS parameters");
    }

    const std::size_t n = cloud.size();
    std::vector<double> saliency(n, -1.0);  // lambda3 where the ratio test passes
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = cloud.points[i];
        std::vector<int> nbrs;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if ((cloud.points[j] - p).norm() <= params.salient_radius) {
                nbrs.push_back(static_cast<int>(j));
            }
        }
        if (static_cast<int>(nbrs.size()) < params.min_neighbors) continue;

        Vec3 mean = Vec3::Zero();
        for (int j : nbrs) mean += cloud.points[j];
        mean /= static_cast<double>(nbrs.size());
        Mat3 scatter = Mat3::Zero();
        for (int j : nbrs) {
            Vec3 d = cloud.points[j] - mean;
            scatter += d * d.transpose();
        }
        Vec3 ev;
        Mat3 basis;
        eigen_descending(scatter, ev, basis);
        if (ev[0] <= 0.0) continue;
        if (ev[1] / ev[0] < params.gamma_21 && ev[1] > 0.0 && ev[2] / ev[1] < params.gamma_32) {
            saliency[i] = ev[2];
        }
    }

    // non-maximum suppression on saliency within nms_radius; equal saliency
    // keeps the lower index
    std::vector<int> kept;
    for (std::size_t i = 0; i < n; ++i) {
        if (saliency[i] < 0.0) continue;
        bool is_max = true;
        for (std::size_t j = 0; j < n && is_max; ++j) {
            if (j == i || saliency[j] < 0.0) continue;
            if ((cloud.points[j] - cloud.points[i]).norm() > params.nms_radius) continue;
            if (saliency[j] > saliency[i] || (saliency[j] == saliency[i] && j < i)) {
                is_max = false;
            }
        }
        if (is_max) kept.push_back(static_cast<int>(i));
    }
    std::sort(kept.begin(), kept.end(), [&](int a, int b) {
        if (saliency[a] != saliency[b]) return saliency[a] > saliency[b];
        return a < b;
    });
    return kept;
}

std::vector<std::pair<double, int>> radius_support(const PointCloud& cloud, int keypoint_index,
                                                   double radius) {
    require_points(cloud);
    require_index(cloud, keypoint_index);
    if (radius <= 0.0) fail(Err::InvalidInput, "support radius must be positive");
    const Vec3& p = cloud.points[keypoint_index];
    std::vector<std::pair<double, int>> support;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        double d = (cloud.points[j] - p).norm();
        if (d > 0.0 && d <= radius) support.emplace_back(d, static_cast<int>(j));
    }
    std::sort(support.begin(), support.end());
    return support;
}

Mat3 lrf_scatter_matrix(const PointCloud& cloud, int keypoint_index, double radius) {
    auto support = radius_support(cloud, keypoint_index, radius);
    if (support.size() < 3) {
        fail(Err::InsufficientSupport,
             "LRF needs at least 3 support points, found " + std::to_string(support.size()));
    }
    const Vec3& p = cloud.points[keypoint_index];
    double weight_sum = 0.0;
    Mat3 m = Mat3::Zero();
    for (const auto& [d, j] : support) {
        double w = radius - d;
        Vec3 diff = cloud.points[j] - p;
        m += w * (diff * diff.transpose());
        weight_sum += w;
    }
    return m / weight_sum;
}

Lrf compute_lrf(const PointCloud& cloud, int keypoint_index, double radius) {
    Mat3 m = lrf_scatter_matrix(cloud, keypoint_index, radius);
    Vec3 ev;
    Mat3 basis;
    eigen_descending(m, ev, basis);
    if (ev[0] <= 0.0 || ev[1] <= 1e-10 * ev[0]) {
        fail(Err::DegenerateGeometry, "LRF scatter matrix has rank < 2");
    }

    auto support = radius_support(cloud, keypoint_index, radius);
    const Vec3& p = cloud.points[keypoint_index];

    // Sign disambiguation: point each of the first two eigenvectors at the
    // majority of the support; exact balance is broken by the point with the
    // largest |projection| (first in distance order on further ties).
    auto disambiguate = [&](Vec3 axis) {
        int pos = 0, neg = 0;
        double best_abs = -1.0;
        double best_proj = 0.0;
        for (const auto& [d, j] : support) {
            double proj = (cloud.points[j] - p).dot(axis);
            if (proj > 0.0) ++pos;
            else if (proj < 0.0) ++neg;
            if (std::abs(proj) > best_abs) {
                best_abs = std::abs(proj);
                best_proj = proj;
            }
        }
        if (neg > pos) return Vec3(-axis);
        if (pos == neg && best_proj < 0.0) return Vec3(-axis);
        return axis;
    };

    Lrf lrf;
    lrf.origin = p;
    lrf.support_radius = radius;
    Vec3 x = disambiguate(basis.col(0));
    Vec3 y = disambiguate(basis.col(1));
    Vec3 z = x.cross(y);
    lrf.axes.row(0) = x;
    lrf.axes.row(1) = y;
    lrf.axes.row(2) = z;
    return lrf;
}

Patch extract_patch(const PointCloud& cloud, int keypoint_index, const PatchParams& params) {
    if (params.n_points < 8) fail(Err::InvalidConfig, "patch size must be at least 8");
    if (params.theta_min < 0.0 || params.theta_min >= M_PI / 2.0) {
        fail(Err::InvalidConfig, "theta_min must be in [0, pi/2)");
    }
    Lrf lrf = compute_lrf(cloud, keypoint_index, params.radius);
    auto support = radius_support(cloud, keypoint_index, params.radius);
    const Vec3& p = cloud.points[keypoint_index];

    const double cos_theta = std::cos(params.theta_min);
    std::vector<Vec3> accepted_dirs;
    std::vector<int> accepted;
    for (const auto& [d, j] : support) {
        if (static_cast<int>(accepted.size()) >= params.n_points) break;
        Vec3 dir = (cloud.points[j] - p) / d;
        bool ok = true;
        for (const Vec3& a : accepted_dirs) {
            double c = std::clamp(dir.dot(a), -1.0, 1.0);
            if (c > cos_theta) {  // angle < theta_min
                ok = false;
                break;
            }
        }
        if (ok) {
            accepted_dirs.push_back(dir);
            accepted.push_back(j);
        }
    }

    Patch patch;
    patch.keypoint_index = keypoint_index;
    patch.lrf = lrf;
    patch.valid_count = static_cast<int>(accepted.size());
    patch.points.reserve(params.n_points);
    for (int i = 0; i < params.n_points; ++i) {
        int j = accepted[i % accepted.size()];
        patch.points.push_back(lrf.axes * (cloud.points[j] - p) / params.radius);
    }
    return patch;
}

}  // namespace dp3d::geom
