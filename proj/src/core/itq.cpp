#include "core/itq.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>

namespace dp3d::itq {

BinaryCode make_code(int bits) {
    BinaryCode c;
    c.bits = bits;
    c.bytes.assign((bits + 7) / 8, 0);
    return c;
}

namespace {

Eigen::MatrixXd random_orthogonal(int n, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x69747172ULL));
    Eigen::MatrixXd g(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) g(r, c) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int c = 0; c < n; ++c) {
        if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    return q;
}

}  // namespace

ItqModel itq_train(const std::vector<Eigen::VectorXd>& descriptors, int bits, int iterations,
                   std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(descriptors.size());
    if (bits < 1) fail(Err::InvalidInput, "bit count must be positive");
    if (iterations < 0) fail(Err::InvalidInput, "iteration count must be non-negative");
    if (n == 0) fail(Err::InvalidInput, "no descriptors to train on");
    const Eigen::Index dim = descriptors.front().size();
    if (bits > dim) fail(Err::InvalidInput, "bit count exceeds descriptor dimension");
    if (n <= bits) fail(Err::InvalidInput, "need more descriptors than bits");
    for (const auto& d : descriptors) {
        if (d.size() != dim) fail(Err::InvalidInput, "descriptor dimension mismatch");
        if (!d.allFinite()) fail(Err::InvalidInput, "non-finite descriptor");
    }

    Eigen::MatrixXd x(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = descriptors[i].transpose();

    ItqModel model;
    model.mean = x.colwise().mean();
    x.rowwise() -= model.mean.transpose();

    Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const double lead = solver.eigenvalues()(dim - 1);
    if (lead <= 0.0 || solver.eigenvalues()(dim - bits) <= lead * 1e-12) {
        fail(Err::InsufficientRank, "covariance has fewer positive directions than bits");
    }
    model.projection.resize(dim, bits);
    for (int b = 0; b < bits; ++b) {
        Eigen::VectorXd dir = solver.eigenvectors().col(dim - 1 - b);
        Eigen::Index peak;
        dir.cwiseAbs().maxCoeff(&peak);
        if (dir(peak) < 0.0) dir = -dir;
        model.projection.col(b) = dir;
    }

    model.rotation = random_orthogonal(bits, seed);
    const Eigen::MatrixXd v = x * model.projection;  // n x bits

    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd vr = v * model.rotation;
        Eigen::MatrixXd codes = (vr.array() > 0.0).select(
            Eigen::MatrixXd::Ones(n, bits), Eigen::MatrixXd::Constant(n, bits, -1.0));
        Eigen::MatrixXd s = v.transpose() * codes;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
        model.rotation = svd.matrixU() * svd.matrixV().transpose();
        model.quantization_loss.push_back((codes - v * model.rotation).squaredNorm());
    }
    return model;
}

BinaryCode itq_encode(const ItqModel& model, const Eigen::VectorXd& descriptor) {
    if (descriptor.size() != model.mean.size()) {
        fail(Err::InvalidInput, "descriptor dimension does not match the ITQ model");
    }
    Eigen::VectorXd v = model.rotation.transpose() *
                        (model.projection.transpose() * (descriptor - model.mean));
    BinaryCode code = make_code(model.bits());
    for (int i = 0; i < code.bits; ++i) {
        if (v[i] > 0.0) code.set(i, true);
    }
    return code;
}

int hamming_distance(const BinaryCode& a, const BinaryCode& b) {
    if (a.bits != b.bits) fail(Err::InvalidInput, "binary code length mismatch");
    int d = 0;
    for (std::size_t i = 0; i < a.bytes.size(); ++i) {
        d += std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i]));
    }
    return d;
}

std::vector<int> hamming_rank(const BinaryCode& query, const std::vector<BinaryCode>& targets) {
    std::vector<std::pair<int, int>> scored;
    scored.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        scored.emplace_back(hamming_distance(query, targets[i]), static_cast<int>(i));
    }
    std::sort(scored.begin(), scored.end());
    std::vector<int> out;
    out.reserve(scored.size());
    for (const auto& [d, i] : scored) out.push_back(i);
    return out;
}

}  // namespace dp3d::itq
