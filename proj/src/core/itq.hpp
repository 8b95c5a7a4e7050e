#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace dp3d::itq {

struct BinaryCode {
    int bits = 0;
    std::vector<std::uint8_t> bytes;  // little-endian bit packing

    bool get(int i) const { return (bytes[i / 8] >> (i % 8)) & 1; }
    void set(int i, bool v) {
        if (v) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        else bytes[i / 8] &= static_cast<std::uint8_t>(~(1u << (i % 8)));
    }
    bool operator==(const BinaryCode&) const = default;
};

BinaryCode make_code(int bits);

struct ItqModel {
    Eigen::VectorXd mean;        // D
    Eigen::MatrixXd projection;  // D x B, top principal directions as columns
    Eigen::MatrixXd rotation;    // B x B orthogonal
    std::vector<double> quantization_loss;  // one entry per training iteration

    int bits() const { return static_cast<int>(rotation.rows()); }
    int dim() const { return static_cast<int>(mean.size()); }
};

// PCA to `bits` dimensions, then alternating sign/Procrustes refinement of
// the rotation.
ItqModel itq_train(const std::vector<Eigen::VectorXd>& descriptors, int bits, int iterations,
                   std::uint64_t seed);

// bits = sign((x - mean) . projection . rotation) > 0; exact zeros map to 0.
BinaryCode itq_encode(const ItqModel& model, const Eigen::VectorXd& descriptor);

int hamming_distance(const BinaryCode& a, const BinaryCode& b);

// Target indices by ascending Hamming distance, ties by lower index.
std::vector<int> hamming_rank(const BinaryCode& query, const std::vector<BinaryCode>& targets);

}  // namespace dp3d::itq
