#include "core/baseline.hpp"

#include "core/errors.hpp"
#include "core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dp3d::baseline {

namespace {

// Bin a value in [lo, hi]; values exactly on an interior edge go to the
// higher-index bin, the top edge clamps to the last bin.
int bin_of(double value, double lo, double hi, int bins) {
    double t = (value - lo) / (hi - lo) * static_cast<double>(bins);
    int b = static_cast<int>(std::floor(t));
    return std::clamp(b, 0, bins - 1);
}

}  // namespace

Eigen::VectorXd compute_histogram_descriptor(const PointCloud& cloud, int keypoint_index,
                                             double radius, const HistogramBins& bins) {
    if (!cloud.has_normals()) fail(Err::InvalidInput, "histogram descriptor needs normals");
    if (bins.azimuth < 1 || bins.elevation < 1 || bins.radial < 1 || bins.cosine < 1) {
        fail(Err::InvalidConfig, "histogram bin counts must be positive");
    }
    Lrf lrf = geom::compute_lrf(cloud, keypoint_index, radius);
    auto support = geom::radius_support(cloud, keypoint_index, radius);
    if (support.empty()) fail(Err::InsufficientSupport, "no support points for histogram");

    const Vec3& p = cloud.points[keypoint_index];
    const Vec3& np = cloud.normals[keypoint_index];

    Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins.total());
    for (const auto& [d, j] : support) {
        Vec3 q = lrf.axes * (cloud.points[j] - p);
        double azimuth = std::atan2(q.y(), q.x());
        int ba;
        if (azimuth == M_PI) {
            ba = 0;  // azimuth is circular; +pi wraps onto -pi
        } else {
            ba = bin_of(azimuth, -M_PI, M_PI, bins.azimuth);
        }
        double elevation = std::asin(std::clamp(q.z() / d, -1.0, 1.0));
        int be = bin_of(elevation, -M_PI / 2.0, M_PI / 2.0, bins.elevation);
        int br = bin_of(d / radius, 0.0, 1.0, bins.radial);
        double c = std::clamp(cloud.normals[j].dot(np), -1.0, 1.0);
        int bc = bin_of(c, -1.0, 1.0, bins.cosine);

        int index = ((ba * bins.elevation + be) * bins.radial + br) * bins.cosine + bc;
        hist[index] += 1.0;
    }
    return hist / hist.norm();
}

std::vector<NndrMatch> nndr_match(const std::vector<Eigen::VectorXd>& queries,
                                  const std::vector<Eigen::VectorXd>& targets, double max_ratio) {
    if (targets.size() < 2) fail(Err::InvalidInput, "NNDR needs at least 2 targets");
    if (max_ratio <= 0.0 || max_ratio > 1.0) fail(Err::InvalidInput, "max_ratio must be in (0, 1]");

    std::vector<NndrMatch> matches;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        double d1 = std::numeric_limits<double>::infinity();
        double d2 = std::numeric_limits<double>::infinity();
        int best = -1;
        for (std::size_t ti = 0; ti < targets.size(); ++ti) {
            double d = (queries[qi] - targets[ti]).norm();
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = static_cast<int>(ti);
            } else if (d < d2) {
                d2 = d;
            }
        }
        double ratio = d2 > 0.0 ? d1 / d2 : 0.0;
        if (ratio <= max_ratio) {
            matches.push_back({static_cast<int>(qi), best, ratio});
        }
    }
    return matches;
}

}  // namespace dp3d::baseline
