#pragma once

#include "core/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace dp3d::model {

enum class Variant { patch_siamese, aggregated };

// Shared per-point MLP followed by channelwise max-pooling and a head MLP.
// head_dims[0] must equal the last per-point width; the final head width is
// the descriptor dimension D.
struct EncoderArch {
    std::vector<int> point_mlp_dims = {3, 32, 64, 128};
    std::vector<int> head_dims = {128, 128, 128};
    Variant variant = Variant::patch_siamese;

    int descriptor_dim() const { return head_dims.back(); }
    void validate() const;
};

struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

struct EncoderParams {
    EncoderArch arch;
    std::vector<Layer> point_layers;
    std::vector<Layer> head_layers;

    void validate() const;
    std::size_t parameter_count() const;
    double weight_squared_norm() const;  // weights only, biases excluded
};

// Activations kept from a forward pass so the matching backward pass can
// reuse them. Tied to one (params, patch) evaluation via a fingerprint.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> point_inputs;  // per point layer: N x in
    std::vector<Eigen::MatrixXd> point_masks;   // per non-final point layer: N x out (0/1)
    Eigen::MatrixXd point_features;             // N x F after the last point layer
    std::vector<int> argmax_rows;               // pooled row per channel
    std::vector<Eigen::VectorXd> head_inputs;   // per head layer
    std::vector<Eigen::VectorXd> head_masks;    // per non-final head layer (0/1)
    std::uint64_t fingerprint = 0;
};

Eigen::VectorXd encoder_forward(const EncoderParams& params, const Patch& patch,
                                ForwardCache* cache = nullptr);

struct ParamGrads {
    std::vector<Layer> point_layers;
    std::vector<Layer> head_layers;

    void accumulate(const ParamGrads& other, double scale = 1.0);
    void scale(double factor);
};

ParamGrads zero_grads(const EncoderParams& params);

// Gradient of (upstream . descriptor) with respect to all parameters.
// Max-pool routes gradient to the argmax point; ties go to the lowest index.
ParamGrads encoder_backward(const EncoderParams& params, const Patch& patch,
                            const Eigen::VectorXd& upstream, const ForwardCache& cache);

enum class LossKind { hinge, contrastive, triplet, mmcl };

struct LossConfig {
    LossKind kind = LossKind::mmcl;
    double m = 1.0;       // single margin (hinge, contrastive, triplet)
    double m1 = 2.0;      // hard-negative margin
    double m2 = 1.0;      // soft-negative margin
    double b = 0.0;       // hinge bias
    double lambda = 1e-4; // weight-decay coefficient

    void validate() const;
};

struct PairLoss {
    double value = 0.0;
    Eigen::VectorXd grad_i;
    Eigen::VectorXd grad_j;
};

struct TripletLoss {
    double value = 0.0;
    Eigen::VectorXd grad_anchor;
    Eigen::VectorXd grad_positive;
    Eigen::VectorXd grad_negative;
};

// y is +1 for positive pairs and -1 for negative pairs.
PairLoss hinge_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y,
                    const LossConfig& cfg);

// y is 1 for positive pairs and 0 for negative pairs.
PairLoss contrastive_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y,
                          const LossConfig& cfg);

// Ratio form: max(0, 1 - |f(x)-f(x-)|^2 / (|f(x)-f(x+)|^2 + m)).
TripletLoss triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                         const Eigen::VectorXd& negative, const LossConfig& cfg);

// Two-margin contrastive loss; gamma is 1 for hard negatives, 0 for soft.
PairLoss mmcl_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y, int gamma,
                   const LossConfig& cfg);

double regularized_loss(double base, const EncoderParams& params, double lambda);

}  // namespace dp3d::model
