#include "core/trainer.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace dp3d::train {

void TrainConfig::validate() const {
    loss.validate();
    arch.validate();
    if (epochs < 1) fail(Err::InvalidConfig, "epochs must be at least 1");
    if (batch_size < 1) fail(Err::InvalidConfig, "batch size must be at least 1");
    if (learning_rate < 0.0) fail(Err::InvalidConfig, "learning rate must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) fail(Err::InvalidConfig, "momentum must be in [0, 1)");
}

model::EncoderParams init_params(const model::EncoderArch& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(mix_seed(seed, 0x696e6974ULL));
    model::EncoderParams params;
    params.arch = arch;
    auto make_layers = [&](const std::vector<int>& dims, std::vector<model::Layer>& out) {
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const int fan_in = dims[l];
            const int fan_out = dims[l + 1];
            const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
            model::Layer layer;
            layer.weight.resize(fan_out, fan_in);
            for (int r = 0; r < fan_out; ++r) {
                for (int c = 0; c < fan_in; ++c) {
                    layer.weight(r, c) = rng.uniform(-scale, scale);
                }
            }
            layer.bias = Eigen::VectorXd::Zero(fan_out);
            out.push_back(std::move(layer));
        }
    };
    make_layers(arch.point_mlp_dims, params.point_layers);
    make_layers(arch.head_dims, params.head_layers);
    return params;
}

namespace {

// Proportional interleave of index strata: at every slot the stratum that is
// furthest behind its quota emits its next element. Keeps each mini-batch
// close to the corpus ratio of positives, soft and hard negatives.
std::vector<std::size_t> interleave_strata(const std::vector<std::vector<std::size_t>>& strata) {
    std::size_t total = 0;
    for (const auto& s : strata) total += s.size();
    std::vector<std::size_t> order;
    order.reserve(total);
    std::vector<std::size_t> taken(strata.size(), 0);
    for (std::size_t slot = 1; slot <= total; ++slot) {
        double best = -1.0;
        std::size_t pick = 0;
        for (std::size_t k = 0; k < strata.size(); ++k) {
            if (taken[k] >= strata[k].size()) continue;
            const double quota = static_cast<double>(slot) * static_cast<double>(strata[k].size()) /
                                 static_cast<double>(total);
            const double deficit = quota - static_cast<double>(taken[k]);
            if (deficit > best) {
                best = deficit;
                pick = k;
            }
        }
        order.push_back(strata[pick][taken[pick]]);
        ++taken[pick];
    }
    return order;
}

std::vector<std::size_t> epoch_order(const Dataset& dataset, const TrainConfig& cfg, Rng& rng) {
    const std::size_t n = dataset.size();
    if (dataset.kind == Dataset::Kind::pairs && cfg.loss.kind == model::LossKind::mmcl) {
        std::vector<std::vector<std::size_t>> strata(3);  // positives, soft, hard
        for (std::size_t i = 0; i < n; ++i) {
            const TrainingPair& p = dataset.pairs[i];
            strata[p.positive ? 0 : (p.gamma == 0 ? 1 : 2)].push_back(i);
        }
        if (cfg.shuffle) {
            for (auto& s : strata) rng.shuffle(s);
        }
        return interleave_strata(strata);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) rng.shuffle(order);
    return order;
}

}  // namespace

TrainReport train(const Dataset& dataset, const TrainConfig& cfg, model::EncoderParams& params,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (dataset.size() == 0) fail(Err::EmptyDataset, "training dataset is empty");
    const bool triplet_loss_kind = cfg.loss.kind == model::LossKind::triplet;
    if (triplet_loss_kind != (dataset.kind == Dataset::Kind::triplets)) {
        fail(Err::InvalidConfig, "dataset kind does not match the configured loss");
    }

    const auto start = std::chrono::steady_clock::now();
    params = init_params(cfg.arch, cfg.seed);
    model::ParamGrads velocity = model::zero_grads(params);
    Rng rng(mix_seed(cfg.seed, 0x736675ULL));

    const int decay_every = (cfg.epochs + 2) / 3;  // ceil(epochs / 3)
    TrainReport report;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * std::pow(0.5, epoch / decay_every);
        const std::vector<std::size_t> order = epoch_order(dataset, cfg, rng);

        double epoch_loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            const double inv_batch = 1.0 / static_cast<double>(end - begin);

            model::ParamGrads grads = model::zero_grads(params);
            double batch_loss = 0.0;
            for (std::size_t pos = begin; pos < end; ++pos) {
                const std::size_t idx = order[pos];
                if (dataset.kind == Dataset::Kind::pairs) {
                    const TrainingPair& pair = dataset.pairs[idx];
                    model::ForwardCache cache_a, cache_b;
                    Eigen::VectorXd da = model::encoder_forward(params, pair.a, &cache_a);
                    Eigen::VectorXd db = model::encoder_forward(params, pair.b, &cache_b);
                    model::PairLoss pl;
                    switch (cfg.loss.kind) {
                        case model::LossKind::hinge:
                            pl = model::hinge_loss(da, db, pair.positive ? 1 : -1, cfg.loss);
                            break;
                        case model::LossKind::contrastive:
                            pl = model::contrastive_loss(da, db, pair.positive ? 1 : 0, cfg.loss);
                            break;
                        case model::LossKind::mmcl:
                            pl = model::mmcl_loss(da, db, pair.positive ? 1 : 0, pair.gamma,
                                                  cfg.loss);
                            break;
                        case model::LossKind::triplet:
                            fail(Err::InvalidConfig, "triplet loss needs a triplet dataset");
                    }
                    batch_loss += pl.value;
                    grads.accumulate(model::encoder_backward(params, pair.a, pl.grad_i, cache_a),
                                     inv_batch);
                    grads.accumulate(model::encoder_backward(params, pair.b, pl.grad_j, cache_b),
                                     inv_batch);
                } else {
                    const TrainingTriplet& t = dataset.triplets[idx];
                    model::ForwardCache ca, cp, cn;
                    Eigen::VectorXd fa = model::encoder_forward(params, t.anchor, &ca);
                    Eigen::VectorXd fp = model::encoder_forward(params, t.positive, &cp);
                    Eigen::VectorXd fn = model::encoder_forward(params, t.negative, &cn);
                    model::TripletLoss tl = model::triplet_loss(fa, fp, fn, cfg.loss);
                    batch_loss += tl.value;
                    grads.accumulate(model::encoder_backward(params, t.anchor, tl.grad_anchor, ca),
                                     inv_batch);
                    grads.accumulate(
                        model::encoder_backward(params, t.positive, tl.grad_positive, cp),
                        inv_batch);
                    grads.accumulate(
                        model::encoder_backward(params, t.negative, tl.grad_negative, cn),
                        inv_batch);
                }
            }
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss)) {
                fail(Err::Divergence, "non-finite loss in epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(batch_index));
            }
            epoch_loss_sum += batch_loss * static_cast<double>(end - begin);

            // weight decay from the regularized objective
            if (cfg.loss.lambda > 0.0) {
                for (std::size_t l = 0; l < params.point_layers.size(); ++l) {
                    grads.point_layers[l].weight += 2.0 * cfg.loss.lambda *
                                                    params.point_layers[l].weight;
                }
                for (std::size_t l = 0; l < params.head_layers.size(); ++l) {
                    grads.head_layers[l].weight += 2.0 * cfg.loss.lambda *
                                                   params.head_layers[l].weight;
                }
            }

            for (std::size_t l = 0; l < params.point_layers.size(); ++l) {
                velocity.point_layers[l].weight = cfg.momentum * velocity.point_layers[l].weight +
                                                  grads.point_layers[l].weight;
                velocity.point_layers[l].bias = cfg.momentum * velocity.point_layers[l].bias +
                                                grads.point_layers[l].bias;
                params.point_layers[l].weight -= lr * velocity.point_layers[l].weight;
                params.point_layers[l].bias -= lr * velocity.point_layers[l].bias;
            }
            for (std::size_t l = 0; l < params.head_layers.size(); ++l) {
                velocity.head_layers[l].weight = cfg.momentum * velocity.head_layers[l].weight +
                                                 grads.head_layers[l].weight;
                velocity.head_layers[l].bias = cfg.momentum * velocity.head_layers[l].bias +
                                               grads.head_layers[l].bias;
                params.head_layers[l].weight -= lr * velocity.head_layers[l].weight;
                params.head_layers[l].bias -= lr * velocity.head_layers[l].bias;
            }
        }

        const double mean_loss = epoch_loss_sum / static_cast<double>(order.size());
        report.epoch_loss.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss);
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace dp3d::train
