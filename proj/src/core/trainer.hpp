#pragma once

#include "core/dataset.hpp"
#include "core/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dp3d::train {

struct TrainConfig {
    model::LossConfig loss;
    model::EncoderArch arch;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-2;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean data loss per epoch
    double wall_seconds = 0.0;
};

// Uniform init with scale 1/sqrt(fan_in) per layer, zero biases.
model::EncoderParams init_params(const model::EncoderArch& arch, std::uint64_t seed);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// SGD with momentum on the batch-mean regularized objective. Both siamese
// branches (all three for triplets) share the single parameter set. Fully
// deterministic for a fixed (dataset, config).
TrainReport train(const Dataset& dataset, const TrainConfig& cfg, model::EncoderParams& params,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace dp3d::train
