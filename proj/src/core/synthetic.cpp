#include "core/synthetic.hpp"

#include "core/errors.hpp"
#include "core/geometry.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace dp3d::synth {

namespace {

struct Archetype {
    std::vector<Vec3> points;    // canonical sample positions; sites first
    int site_count = 0;          // first site_count points are keypoint sites
    std::vector<int> part_labels;            // per site
    std::vector<std::pair<int, int>> sym;    // (site index, group id)
    double resolution = 0.0;
};

Vec3 random_unit(Rng& rng) {
    for (;;) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        double n = v.norm();
        if (n > 1e-12) return v / n;
    }
}

Mat3 random_rotation(Rng& rng) {
    // uniform over SO(3) via a normalized quaternion
    double q[4];
    double n2 = 0.0;
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

// Canonical box/cylinder/ellipsoid sites pair up under a mirror or rotation;
// each orbit becomes one symmetry group.
void add_mirror_x_groups(Archetype& arch, const std::vector<Vec3>& sites) {
    int next_group = 0;
    std::vector<bool> grouped(sites.size(), false);
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (grouped[i] || sites[i].x() == 0.0) continue;
        Vec3 mirrored(-sites[i].x(), sites[i].y(), sites[i].z());
        for (std::size_t j = i + 1; j < sites.size(); ++j) {
            if (grouped[j] || (sites[j] - mirrored).norm() > 1e-12) continue;
            arch.sym.emplace_back(static_cast<int>(i), next_group);
            arch.sym.emplace_back(static_cast<int>(j), next_group);
            grouped[i] = grouped[j] = true;
            ++next_group;
            break;
        }
    }
}

Archetype make_box(Rng& rng, int n_points, int n_keypoints) {
    Vec3 h(rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0));

    std::vector<Vec3> sites;
    for (int sx : {-1, 1})
        for (int sy : {-1, 1})
            for (int sz : {-1, 1}) sites.emplace_back(sx * h.x(), sy * h.y(), sz * h.z());
    // edge midpoints
    for (int axis = 0; axis < 3; ++axis) {
        for (int s1 : {-1, 1}) {
            for (int s2 : {-1, 1}) {
                Vec3 p = Vec3::Zero();
                int a = (axis + 1) % 3, b = (axis + 2) % 3;
                p[a] = s1 * h[a];
                p[b] = s2 * h[b];
                sites.push_back(p);
            }
        }
    }
    // face centers
    for (int axis = 0; axis < 3; ++axis) {
        for (int s : {-1, 1}) {
            Vec3 p = Vec3::Zero();
            p[axis] = s * h[axis];
            sites.push_back(p);
        }
    }
    if (n_keypoints < static_cast<int>(sites.size())) sites.resize(n_keypoints);

    Archetype arch;
    arch.site_count = static_cast<int>(sites.size());
    arch.points = sites;
    for (int i = 0; i < arch.site_count; ++i) arch.part_labels.push_back(i);
    add_mirror_x_groups(arch, sites);

    // area-weighted face sampling for the remaining points
    const double ax = h.y() * h.z(), ay = h.x() * h.z(), az = h.x() * h.y();
    const double total = 2.0 * (ax + ay + az);
    while (static_cast<int>(arch.points.size()) < n_points) {
        double u = rng.uniform01() * total;
        int axis = u < 2 * ax ? 0 : (u < 2 * (ax + ay) ? 1 : 2);
        double side = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        Vec3 p;
        p[axis] = side * h[axis];
        int a = (axis + 1) % 3, b = (axis + 2) % 3;
        p[a] = rng.uniform(-h[a], h[a]);
        p[b] = rng.uniform(-h[b], h[b]);
        arch.points.push_back(p);
    }
    return arch;
}

Archetype make_cylinder(Rng& rng, int n_points, int n_keypoints) {
    const double r = rng.uniform(0.4, 0.8);
    const double h = rng.uniform(0.6, 1.2);

    Archetype arch;
    std::vector<Vec3> sites;
    // 8 points around each rim, cap centers, 8 around the equator
    for (double z : {h, -h}) {
        for (int i = 0; i < 8; ++i) {
            double a = 2.0 * M_PI * i / 8.0;
            sites.emplace_back(r * std::cos(a), r * std::sin(a), z);
        }
    }
    sites.emplace_back(0, 0, h);
    sites.emplace_back(0, 0, -h);
    for (int i = 0; i < 8; ++i) {
        double a = 2.0 * M_PI * (i + 0.5) / 8.0;
        sites.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
    }
    if (n_keypoints < static_cast<int>(sites.size())) sites.resize(n_keypoints);

    arch.site_count = static_cast<int>(sites.size());
    arch.points = sites;
    for (int i = 0; i < arch.site_count; ++i) arch.part_labels.push_back(i);
    // rotational orbits: top rim, bottom rim, equator ring
    for (int i = 0; i < arch.site_count; ++i) {
        if (i < 8) arch.sym.emplace_back(i, 0);
        else if (i < 16) arch.sym.emplace_back(i, 1);
        else if (i >= 18) arch.sym.emplace_back(i, 2);
    }

    const double lateral = 2.0 * M_PI * r * 2.0 * h;
    const double caps = 2.0 * M_PI * r * r;
    while (static_cast<int>(arch.points.size()) < n_points) {
        if (rng.uniform01() * (lateral + caps) < lateral) {
            double a = rng.uniform(0.0, 2.0 * M_PI);
            arch.points.emplace_back(r * std::cos(a), r * std::sin(a), rng.uniform(-h, h));
        } else {
            double a = rng.uniform(0.0, 2.0 * M_PI);
            double rr = r * std::sqrt(rng.uniform01());
            double z = rng.uniform01() < 0.5 ? h : -h;
            arch.points.emplace_back(rr * std::cos(a), rr * std::sin(a), z);
        }
    }
    return arch;
}

Archetype make_ellipsoid(Rng& rng, int n_points, int n_keypoints, Rng& site_rng) {
    Vec3 radii(rng.uniform(0.9, 1.1), rng.uniform(0.65, 0.85), rng.uniform(0.4, 0.6));

    Archetype arch;
    std::vector<Vec3> sites;
    for (int axis = 0; axis < 3; ++axis) {
        for (int s : {-1, 1}) {
            Vec3 p = Vec3::Zero();
            p[axis] = s * radii[axis];
            sites.push_back(p);
        }
    }
    while (static_cast<int>(sites.size()) < n_keypoints) {
        Vec3 u = random_unit(site_rng);
        sites.push_back(u.cwiseProduct(radii));
    }
    arch.site_count = static_cast<int>(sites.size());
    arch.points = sites;
    for (int i = 0; i < arch.site_count; ++i) arch.part_labels.push_back(i);
    // antipodal axis endpoints are equivalent
    for (int axis = 0; axis < 3 && 2 * axis + 1 < arch.site_count; ++axis) {
        arch.sym.emplace_back(2 * axis, axis);
        arch.sym.emplace_back(2 * axis + 1, axis);
    }

    while (static_cast<int>(arch.points.size()) < n_points) {
        arch.points.push_back(random_unit(rng).cwiseProduct(radii));
    }
    return arch;
}

// Ellipsoid base with Gaussian radial bumps at well-separated directions.
// Every bump center is a keypoint site and its own part.
Archetype make_composite(Rng& rng, int n_points, int n_keypoints) {
    Vec3 radii(rng.uniform(0.8, 1.0), rng.uniform(0.7, 0.9), rng.uniform(0.6, 0.8));

    std::vector<Vec3> dirs;
    std::vector<double> amp, width;
    double min_sep = 0.5;
    int failures = 0;
    while (static_cast<int>(dirs.size()) < n_keypoints) {
        Vec3 u = random_unit(rng);
        bool ok = true;
        for (const Vec3& d : dirs) {
            if (std::acos(std::clamp(u.dot(d), -1.0, 1.0)) < min_sep) {
                ok = false;
                break;
            }
        }
        if (ok) {
            dirs.push_back(u);
            amp.push_back(rng.uniform(0.18, 0.38));
            width.push_back(rng.uniform(0.14, 0.26));
            failures = 0;
        } else if (++failures > 256) {
            min_sep *= 0.8;  // crowded sphere, relax the spacing
            failures = 0;
        }
    }

    auto surface = [&](const Vec3& u) {
        const double base = 1.0 / std::sqrt((u.x() / radii.x()) * (u.x() / radii.x()) +
                                            (u.y() / radii.y()) * (u.y() / radii.y()) +
                                            (u.z() / radii.z()) * (u.z() / radii.z()));
        double bump = 0.0;
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            const double theta = std::acos(std::clamp(u.dot(dirs[k]), -1.0, 1.0));
            bump += amp[k] * std::exp(-theta * theta / (2.0 * width[k] * width[k]));
        }
        return base * (1.0 + bump);
    };

    Archetype arch;
    arch.site_count = n_keypoints;
    for (const Vec3& u : dirs) arch.points.push_back(surface(u) * u);
    for (int i = 0; i < n_keypoints; ++i) arch.part_labels.push_back(i);
    while (static_cast<int>(arch.points.size()) < n_points) {
        Vec3 u = random_unit(rng);
        arch.points.push_back(surface(u) * u);
    }
    return arch;
}

}  // namespace

Corpus generate_synthetic_corpus(const SynthSpec& spec, SynthDebug* debug) {
    if (spec.model_count < 2) fail(Err::InvalidInput, "synthetic corpus needs at least 2 models");
    if (spec.archetype_count < 1 || spec.archetype_count > spec.model_count) {
        fail(Err::InvalidInput, "archetype count must be in [1, model count]");
    }
    if (spec.points_per_model < 64) fail(Err::InvalidInput, "too few points per model");
    if (spec.keypoints_per_model < 1) fail(Err::InvalidInput, "keypoint count must be positive");
    if (spec.noise < 0.0) fail(Err::InvalidInput, "noise must be non-negative");

    Rng rng(mix_seed(spec.seed, 0x73796e7468ULL));

    std::vector<Archetype> archetypes;
    for (int a = 0; a < spec.archetype_count; ++a) {
        Rng arng = rng.fork(a);
        Archetype arch;
        switch (spec.kind) {
            case ShapeKind::box:
                arch = make_box(arng, spec.points_per_model, spec.keypoints_per_model);
                break;
            case ShapeKind::cylinder:
                arch = make_cylinder(arng, spec.points_per_model, spec.keypoints_per_model);
                break;
            case ShapeKind::ellipsoid: {
                Rng srng = arng.fork(1);
                arch = make_ellipsoid(arng, spec.points_per_model, spec.keypoints_per_model, srng);
                break;
            }
            case ShapeKind::composite:
                arch = make_composite(arng, spec.points_per_model, spec.keypoints_per_model);
                break;
        }
        PointCloud tmp;
        tmp.points = arch.points;
        arch.resolution = geom::compute_resolution(tmp);
        // distinct part label spaces per archetype
        for (int& label : arch.part_labels) label += a * 1000;
        archetypes.push_back(std::move(arch));
    }

    Corpus corpus;
    std::vector<int> archetype_of(spec.model_count);
    for (int m = 0; m < spec.model_count; ++m) {
        const int a = m % spec.archetype_count;
        archetype_of[m] = a;
        const Archetype& arch = archetypes[a];

        Rng irng = rng.fork(1000 + m);
        Mat3 rot = random_rotation(irng);
        Vec3 trans(irng.uniform(-2.0, 2.0), irng.uniform(-2.0, 2.0), irng.uniform(-2.0, 2.0));
        const double sigma = spec.noise * arch.resolution;

        Model model;
        char name[16];
        std::snprintf(name, sizeof(name), "m%03d", m);
        model.cloud.id = name;
        model.cloud.points.reserve(arch.points.size());
        for (const Vec3& p : arch.points) {
            Vec3 jitter(irng.normal(), irng.normal(), irng.normal());
            model.cloud.points.push_back(rot * (p + sigma * jitter) + trans);
        }
        for (int k = 0; k < arch.site_count; ++k) {
            model.keypoints.push_back(k);
            model.part_labels.push_back(arch.part_labels[k]);
        }
        corpus.models.push_back(std::move(model));
        if (debug) {
            debug->rotations.push_back(rot);
            debug->translations.push_back(trans);
        }
    }
    if (debug) debug->archetype_of = archetype_of;

    for (int i = 0; i < spec.model_count; ++i) {
        for (int j = i + 1; j < spec.model_count; ++j) {
            if (archetype_of[i] != archetype_of[j]) continue;
            const Archetype& arch = archetypes[archetype_of[i]];
            CorrespondenceSet cs;
            cs.model_a = corpus.models[i].cloud.id;
            cs.model_b = corpus.models[j].cloud.id;
            for (int k = 0; k < arch.site_count; ++k) cs.pairs.emplace_back(k, k);
            cs.sym_a = arch.sym;
            cs.sym_b = arch.sym;
            corpus.correspondences.push_back(std::move(cs));
        }
    }
    return corpus;
}

ShapeKind shape_kind_from_name(const std::string& name) {
    if (name == "box") return ShapeKind::box;
    if (name == "cylinder") return ShapeKind::cylinder;
    if (name == "ellipsoid") return ShapeKind::ellipsoid;
    if (name == "composite") return ShapeKind::composite;
    fail(Err::InvalidConfig, "unknown shape kind: " + name);
}

const char* shape_kind_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::box: return "box";
        case ShapeKind::cylinder: return "cylinder";
        case ShapeKind::ellipsoid: return "ellipsoid";
        case ShapeKind::composite: return "composite";
    }
    return "unknown";
}

}  // namespace dp3d::synth
