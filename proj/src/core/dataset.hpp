#pragma once

#include "core/types.hpp"

#include <vector>

namespace dp3d {

// Labeled patch pair. gamma distinguishes hard (1) from soft (0) negatives
// and is ignored for positives.
struct TrainingPair {
    Patch a;
    Patch b;
    bool positive = false;
    int gamma = 0;
};

struct TrainingTriplet {
    Patch anchor;
    Patch positive;
    Patch negative;
};

struct Dataset {
    enum class Kind { pairs, triplets };

    Kind kind = Kind::pairs;
    int n_points = 0;  // patch size N shared by every record
    std::vector<TrainingPair> pairs;
    std::vector<TrainingTriplet> triplets;

    std::size_t size() const {
        return kind == Kind::pairs ? pairs.size() : triplets.size();
    }
};

}  // namespace dp3d
