#include "core/model.hpp"

#include "core/errors.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace dp3d::model {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t input_fingerprint(const EncoderParams& params, const Patch& patch) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Vec3& p : patch.points) h = fnv1a(h, p.data(), 3 * sizeof(double));
    for (const Layer& l : params.point_layers) {
        h = fnv1a(h, l.weight.data(), l.weight.size() * sizeof(double));
        h = fnv1a(h, l.bias.data(), l.bias.size() * sizeof(double));
    }
    for (const Layer& l : params.head_layers) {
        h = fnv1a(h, l.weight.data(), l.weight.size() * sizeof(double));
        h = fnv1a(h, l.bias.data(), l.bias.size() * sizeof(double));
    }
    return h;
}

}  // namespace

void EncoderArch::validate() const {
    if (point_mlp_dims.size() < 2 || head_dims.size() < 2) {
        fail(Err::InvalidConfig, "encoder needs at least one per-point and one head layer");
    }
    if (point_mlp_dims.front() != 3) {
        fail(Err::InvalidConfig, "per-point MLP must start at 3 input channels");
    }
    if (head_dims.front() != point_mlp_dims.back()) {
        fail(Err::InvalidConfig, "head input width must match the pooled feature width");
    }
    if (head_dims.back() < 8) fail(Err::InvalidConfig, "descriptor dimension must be at least 8");
    for (int d : point_mlp_dims) {
        if (d < 1) fail(Err::InvalidConfig, "layer widths must be positive");
    }
    for (int d : head_dims) {
        if (d < 1) fail(Err::InvalidConfig, "layer widths must be positive");
    }
}

void EncoderParams::validate() const {
    arch.validate();
    auto check = [](const std::vector<Layer>& layers, const std::vector<int>& dims,
                    const char* what) {
        if (layers.size() + 1 != dims.size()) fail(Err::ArchMismatch, std::string(what) + ": layer count mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].weight.rows() != dims[l + 1] || layers[l].weight.cols() != dims[l] ||
                layers[l].bias.size() != dims[l + 1]) {
                fail(Err::ArchMismatch, std::string(what) + ": weight shape mismatch at layer " +
                                            std::to_string(l));
            }
            if (!layers[l].weight.allFinite() || !layers[l].bias.allFinite()) {
                fail(Err::InvalidParams, std::string(what) + ": non-finite parameter at layer " +
                                             std::to_string(l));
            }
        }
    };
    check(point_layers, arch.point_mlp_dims, "point MLP");
    check(head_layers, arch.head_dims, "head");
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : point_layers) n += l.weight.size() + l.bias.size();
    for (const Layer& l : head_layers) n += l.weight.size() + l.bias.size();
    return n;
}

double EncoderParams::weight_squared_norm() const {
    double s = 0.0;
    for (const Layer& l : point_layers) s += l.weight.squaredNorm();
    for (const Layer& l : head_layers) s += l.weight.squaredNorm();
    return s;
}

Eigen::VectorXd encoder_forward(const EncoderParams& params, const Patch& patch,
                                ForwardCache* cache) {
    params.validate();
    const auto n = static_cast<Eigen::Index>(patch.points.size());
    if (n == 0) fail(Err::ArchMismatch, "patch has no points");

    Eigen::MatrixXd h(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = patch.points[i].transpose();

    if (cache) {
        cache->point_inputs.clear();
        cache->point_masks.clear();
        cache->head_inputs.clear();
        cache->head_masks.clear();
        cache->fingerprint = input_fingerprint(params, patch);
    }

    const std::size_t n_point = params.point_layers.size();
    for (std::size_t l = 0; l < n_point; ++l) {
        if (cache) cache->point_inputs.push_back(h);
        const Layer& layer = params.point_layers[l];
        Eigen::MatrixXd z = h * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (l + 1 < n_point) {
            Eigen::MatrixXd mask = (z.array() > 0.0).cast<double>();
            h = z.cwiseProduct(mask);
            if (cache) cache->point_masks.push_back(std::move(mask));
        } else {
            h = std::move(z);
        }
    }
    if (cache) cache->point_features = h;

    // channelwise max over points; ties keep the lowest row
    const auto f = h.cols();
    Eigen::VectorXd pooled(f);
    std::vector<int> argmax(f);
    for (Eigen::Index j = 0; j < f; ++j) {
        Eigen::Index row = 0;
        pooled[j] = h.col(j).maxCoeff(&row);
        argmax[j] = static_cast<int>(row);
    }
    if (cache) cache->argmax_rows = argmax;

    Eigen::VectorXd v = pooled;
    const std::size_t n_head = params.head_layers.size();
    for (std::size_t l = 0; l < n_head; ++l) {
        if (cache) cache->head_inputs.push_back(v);
        const Layer& layer = params.head_layers[l];
        Eigen::VectorXd z = layer.weight * v + layer.bias;
        if (l + 1 < n_head) {
            Eigen::VectorXd mask = (z.array() > 0.0).cast<double>();
            v = z.cwiseProduct(mask);
            if (cache) cache->head_masks.push_back(std::move(mask));
        } else {
            v = std::move(z);
        }
    }
    return v;
}

ParamGrads zero_grads(const EncoderParams& params) {
    ParamGrads g;
    for (const Layer& l : params.point_layers) {
        g.point_layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                  Eigen::VectorXd::Zero(l.bias.size())});
    }
    for (const Layer& l : params.head_layers) {
        g.head_layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                 Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
}

void ParamGrads::accumulate(const ParamGrads& other, double s) {
    for (std::size_t i = 0; i < point_layers.size(); ++i) {
        point_layers[i].weight += s * other.point_layers[i].weight;
        point_layers[i].bias += s * other.point_layers[i].bias;
    }
    for (std::size_t i = 0; i < head_layers.size(); ++i) {
        head_layers[i].weight += s * other.head_layers[i].weight;
        head_layers[i].bias += s * other.head_layers[i].bias;
    }
}

void ParamGrads::scale(double factor) {
    for (Layer& l : point_layers) {
        l.weight *= factor;
        l.bias *= factor;
    }
    for (Layer& l : head_layers) {
        l.weight *= factor;
        l.bias *= factor;
    }
}

ParamGrads encoder_backward(const EncoderParams& params, const Patch& patch,
                            const Eigen::VectorXd& upstream, const ForwardCache& cache) {
    if (cache.fingerprint != input_fingerprint(params, patch)) {
        fail(Err::InvalidCache, "forward cache does not match params and patch");
    }
    if (upstream.size() != params.arch.descriptor_dim()) {
        fail(Err::ArchMismatch, "upstream gradient dimension mismatch");
    }

    ParamGrads grads = zero_grads(params);

    Eigen::VectorXd delta = upstream;
    for (int l = static_cast<int>(params.head_layers.size()) - 1; l >= 0; --l) {
        if (l + 1 < static_cast<int>(params.head_layers.size())) {
            delta = delta.cwiseProduct(cache.head_masks[l]);
        }
        grads.head_layers[l].weight = delta * cache.head_inputs[l].transpose();
        grads.head_layers[l].bias = delta;
        delta = params.head_layers[l].weight.transpose() * delta;
    }

    // route the pooled gradient back to the argmax point per channel
    const auto n = static_cast<Eigen::Index>(patch.points.size());
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, delta.size());
    for (Eigen::Index j = 0; j < delta.size(); ++j) {
        dh(cache.argmax_rows[j], j) = delta[j];
    }

    for (int l = static_cast<int>(params.point_layers.size()) - 1; l >= 0; --l) {
        if (l + 1 < static_cast<int>(params.point_layers.size())) {
            dh = dh.cwiseProduct(cache.point_masks[l]);
        }
        grads.point_layers[l].weight = dh.transpose() * cache.point_inputs[l];
        grads.point_layers[l].bias = dh.colwise().sum().transpose();
        dh = dh * params.point_layers[l].weight;
    }
    return grads;
}

void LossConfig::validate() const {
    if (m <= 0.0) fail(Err::InvalidConfig, "margin m must be positive");
    if (!(m1 >= m2 && m2 > 0.0)) fail(Err::InvalidConfig, "margins must satisfy m1 >= m2 > 0");
    if (lambda < 0.0) fail(Err::InvalidConfig, "lambda must be non-negative");
}

namespace {

void check_dims(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) fail(Err::InvalidInput, "descriptor dimension mismatch");
}

}  // namespace

PairLoss hinge_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y,
                    const LossConfig& cfg) {
    check_dims(desc_i, desc_j);
    Eigen::VectorXd diff = desc_i - desc_j;
    const double d2 = diff.squaredNorm();
    const double arg = cfg.b - static_cast<double>(y) * (cfg.m - d2);

    PairLoss out;
    out.value = std::max(0.0, arg);
    // subgradient: active branch, zero exactly at the kink
    const double dl_dd2 = arg > 0.0 ? static_cast<double>(y) : 0.0;
    out.grad_i = dl_dd2 * 2.0 * diff;
    out.grad_j = -out.grad_i;
    return out;
}

PairLoss contrastive_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y,
                          const LossConfig& cfg) {
    check_dims(desc_i, desc_j);
    Eigen::VectorXd diff = desc_i - desc_j;
    const double d2 = diff.squaredNorm();
    const double yd = static_cast<double>(y);
    const double margin_term = cfg.m * cfg.m - d2;

    PairLoss out;
    out.value = yd * d2 + (1.0 - yd) * std::max(0.0, margin_term);
    const double dl_dd2 = yd - (1.0 - yd) * (margin_term > 0.0 ? 1.0 : 0.0);
    out.grad_i = dl_dd2 * 2.0 * diff;
    out.grad_j = -out.grad_i;
    return out;
}

TripletLoss triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                         const Eigen::VectorXd& negative, const LossConfig& cfg) {
    check_dims(anchor, positive);
    check_dims(anchor, negative);
    Eigen::VectorXd diff_n = anchor - negative;
    Eigen::VectorXd diff_p = anchor - positive;
    const double dn = diff_n.squaredNorm();
    const double dp = diff_p.squaredNorm();
    const double denom = dp + cfg.m;
    const double arg = 1.0 - dn / denom;

    TripletLoss out;
    out.value = std::max(0.0, arg);
    if (arg > 0.0) {
        const double dl_ddn = -1.0 / denom;
        const double dl_ddp = dn / (denom * denom);
        out.grad_anchor = dl_ddn * 2.0 * diff_n + dl_ddp * 2.0 * diff_p;
        out.grad_negative = -dl_ddn * 2.0 * diff_n;
        out.grad_positive = -dl_ddp * 2.0 * diff_p;
    } else {
        out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
        out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
        out.grad_negative = Eigen::VectorXd::Zero(anchor.size());
    }
    return out;
}

PairLoss mmcl_loss(const Eigen::VectorXd& desc_i, const Eigen::VectorXd& desc_j, int y, int gamma,
                   const LossConfig& cfg) {
    check_dims(desc_i, desc_j);
    Eigen::VectorXd diff = desc_i - desc_j;
    const double d2 = diff.squaredNorm();
    const double yd = static_cast<double>(y);
    const double g = static_cast<double>(gamma);
    const double hard_term = g * (cfg.m1 * cfg.m1 - d2);
    const double soft_term = (1.0 - g) * (cfg.m2 * cfg.m2 - d2);
    const double neg = std::max(0.0, std::max(hard_term, soft_term));

    PairLoss out;
    out.value = yd * d2 + (1.0 - yd) * neg;
    double dneg_dd2 = 0.0;
    if (neg > 0.0) {
        dneg_dd2 = hard_term >= soft_term ? -g : -(1.0 - g);
    }
    const double dl_dd2 = yd + (1.0 - yd) * dneg_dd2;
    out.grad_i = dl_dd2 * 2.0 * diff;
    out.grad_j = -out.grad_i;
    return out;
}

double regularized_loss(double base, const EncoderParams& params, double lambda) {
    if (!std::isfinite(base)) fail(Err::InvalidInput, "base loss is not finite");
    return base + lambda * params.weight_squared_norm();
}

}  // namespace dp3d::model
