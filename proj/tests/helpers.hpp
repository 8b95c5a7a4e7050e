#pragma once

#include "core/model.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "core/types.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace dp3d::testing {

inline PointCloud random_blob(Rng& rng, std::size_t n, double scale = 1.0) {
    PointCloud cloud;
    cloud.id = "blob";
    cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.points.emplace_back(rng.normal() * scale, rng.normal() * scale,
                                  rng.normal() * scale);
    }
    return cloud;
}

inline Mat3 random_rotation(Rng& rng) {
    double q[4];
    double n2;
    do {
        n2 = 0.0;
        for (double& c : q) {
            c = rng.normal();
            n2 += c * c;
        }
    } while (n2 < 1e-12);
    const double s = 1.0 / std::sqrt(n2);
    const double w = q[0] * s, x = q[1] * s, y = q[2] * s, z = q[3] * s;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline PointCloud rigid_move(const PointCloud& cloud, const Mat3& rot, const Vec3& trans) {
    PointCloud out = cloud;
    for (Vec3& p : out.points) p = rot * p + trans;
    for (Vec3& n : out.normals) n = rot * n;
    return out;
}

inline Patch random_patch(Rng& rng, int n_points) {
    Patch patch;
    patch.keypoint_index = 0;
    patch.valid_count = n_points;
    for (int i = 0; i < n_points; ++i) {
        Vec3 p(rng.normal(), rng.normal(), rng.normal());
        if (p.norm() > 1.0) p /= p.norm() * rng.uniform(1.0, 2.0);
        patch.points.push_back(p);
    }
    return patch;
}

// Parameters flattened to a vector and back, for finite differencing.
inline std::vector<double*> param_slots(model::EncoderParams& params) {
    std::vector<double*> slots;
    auto collect = [&](std::vector<model::Layer>& layers) {
        for (model::Layer& l : layers) {
            for (Eigen::Index i = 0; i < l.weight.size(); ++i) slots.push_back(l.weight.data() + i);
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) slots.push_back(l.bias.data() + i);
        }
    };
    collect(params.point_layers);
    collect(params.head_layers);
    return slots;
}

inline std::vector<double> flatten_grads(const model::ParamGrads& grads) {
    std::vector<double> flat;
    auto collect = [&](const std::vector<model::Layer>& layers) {
        for (const model::Layer& l : layers) {
            for (Eigen::Index i = 0; i < l.weight.size(); ++i) flat.push_back(l.weight.data()[i]);
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias.data()[i]);
        }
    };
    collect(grads.point_layers);
    collect(grads.head_layers);
    return flat;
}

// Central finite differences of an arbitrary scalar function of the params.
inline std::vector<double> finite_difference(model::EncoderParams& params,
                                             const std::function<double()>& value, double eps) {
    std::vector<double*> slots = param_slots(params);
    std::vector<double> grad(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + eps;
        const double hi = value();
        *slots[i] = saved - eps;
        const double lo = value();
        *slots[i] = saved;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

}  // namespace dp3d::testing
