#pragma once

#include "core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dp3d::synth {

enum class ShapeKind { box, cylinder, ellipsoid, composite };

struct SynthSpec {
    ShapeKind kind = ShapeKind::composite;
    int model_count = 20;
    int archetype_count = 4;  // instances are spread evenly across archetypes
    int points_per_model = 1800;
    int keypoints_per_model = 40;
    double noise = 0.3;  // jitter sigma in units of the archetype resolution
    std::uint64_t seed = 0;
};

// Per-instance ground truth kept out of the corpus itself; used by tests.
struct SynthDebug {
    std::vector<Mat3> rotations;
    std::vector<Vec3> translations;
    std::vector<int> archetype_of;
};

// Instances of the same archetype share their parametric sample indices, so
// correspondences are exact by construction. Canonical keypoint sites come
// first in every cloud; symmetry groups are annotated from the archetype's
// analytic symmetries.
Corpus generate_synthetic_corpus(const SynthSpec& spec, SynthDebug* debug = nullptr);

ShapeKind shape_kind_from_name(const std::string& name);
const char* shape_kind_name(ShapeKind kind);

}  // namespace dp3d::synth
