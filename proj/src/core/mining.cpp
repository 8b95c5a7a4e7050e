#include "core/mining.hpp"

#include "core/errors.hpp"
#include "core/geometry.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <tuple>

namespace dp3d::mining {

namespace {

// candidate negative pair, canonically ordered for deduplication and output
struct NegCandidate {
    int model_a, kp_a, model_b, kp_b;

    NegCandidate(int ma, int ka, int mb, int kb) {
        if (std::tie(ma, ka) <= std::tie(mb, kb)) {
            model_a = ma; kp_a = ka; model_b = mb; kp_b = kb;
        } else {
            model_a = mb; kp_a = kb; model_b = ma; kp_b = ka;
        }
    }
    auto key() const { return std::tie(model_a, kp_a, model_b, kp_b); }
    bool operator<(const NegCandidate& o) const { return key() < o.key(); }
};

bool try_extract(const PointCloud& cloud, int keypoint, const PatchParams& params, Patch& out) {
    try {
        out = geom::extract_patch(cloud, keypoint, params);
        return true;
    } catch (const Error& e) {
        if (e.code() == Err::InsufficientSupport || e.code() == Err::DegenerateGeometry) {
            return false;
        }
        throw;
    }
}

}  // namespace

CorpusContext::CorpusContext(const Corpus& corpus, const MiningConfig& cfg)
    : corpus_(&corpus), cfg_(cfg) {
    clouds_.reserve(corpus.models.size());
    descriptors_.resize(corpus.models.size());
    for (std::size_t m = 0; m < corpus.models.size(); ++m) {
        const Model& model = corpus.models[m];
        if (model.cloud.has_normals()) {
            clouds_.push_back(model.cloud);
        } else {
            clouds_.push_back(geom::estimate_normals(model.cloud, cfg.normals_k));
        }
        descriptors_[m].resize(model.keypoints.size());
        for (std::size_t k = 0; k < model.keypoints.size(); ++k) {
            try {
                descriptors_[m][k] = baseline::compute_histogram_descriptor(
                    clouds_[m], model.keypoints[k], cfg.patch.radius, cfg.bins);
            } catch (const Error& e) {
                if (e.code() != Err::InsufficientSupport &&
                    e.code() != Err::DegenerateGeometry) {
                    throw;
                }
            }
        }
    }
}

const PointCloud& CorpusContext::cloud_with_normals(int model) const { return clouds_[model]; }

const std::vector<Eigen::VectorXd>& CorpusContext::baseline_descriptors(int model) const {
    return descriptors_[model];
}

bool CorpusContext::is_ground_truth(int model_a, int kp_a, int model_b, int kp_b) const {
    if (model_a == model_b && kp_a == kp_b) return true;
    const std::string& id_a = corpus_->models[model_a].cloud.id;
    const std::string& id_b = corpus_->models[model_b].cloud.id;
    for (const CorrespondenceSet& cs : corpus_->correspondences) {
        int qa = -1, qb = -1;
        if (cs.model_a == id_a && cs.model_b == id_b) {
            qa = kp_a;
            qb = kp_b;
        } else if (cs.model_a == id_b && cs.model_b == id_a) {
            qa = kp_b;
            qb = kp_a;
        } else {
            continue;
        }
        for (const auto& [ia, ib] : cs.pairs) {
            if (ia == qa && ib == qb) return true;
        }
    }
    return false;
}

std::vector<TrainingPair> build_positive_pairs(const Corpus& corpus, const MiningConfig& cfg,
                                               std::size_t* skipped) {
    if (corpus.correspondences.empty()) {
        fail(Err::EmptyDataset, "corpus has no correspondence sets");
    }
    std::vector<std::tuple<int, int, int>> candidates;  // (cs index, pair index, tiebreak)
    for (std::size_t c = 0; c < corpus.correspondences.size(); ++c) {
        for (std::size_t p = 0; p < corpus.correspondences[c].pairs.size(); ++p) {
            candidates.emplace_back(static_cast<int>(c), static_cast<int>(p), 0);
        }
    }
    if (cfg.positive_budget > 0 && candidates.size() > cfg.positive_budget) {
        Rng rng(mix_seed(cfg.seed, 0x706f73ULL));
        rng.shuffle(candidates);
        candidates.resize(cfg.positive_budget);
        std::sort(candidates.begin(), candidates.end());
    }

    std::size_t skip_count = 0;
    std::vector<TrainingPair> pairs;
    for (const auto& [c, p, unused] : candidates) {
        const CorrespondenceSet& cs = corpus.correspondences[c];
        const int a = corpus.model_index(cs.model_a);
        const int b = corpus.model_index(cs.model_b);
        if (a < 0 || b < 0) fail(Err::InvalidInput, "correspondence references unknown model");
        const auto& [ia, ib] = cs.pairs[p];
        const Model& ma = corpus.models[a];
        const Model& mb = corpus.models[b];
        if (ia < 0 || static_cast<std::size_t>(ia) >= ma.keypoints.size() || ib < 0 ||
            static_cast<std::size_t>(ib) >= mb.keypoints.size()) {
            fail(Err::InvalidInput, "correspondence keypoint position out of range");
        }
        TrainingPair pair;
        pair.positive = true;
        if (try_extract(ma.cloud, ma.keypoints[ia], cfg.patch, pair.a) &&
            try_extract(mb.cloud, mb.keypoints[ib], cfg.patch, pair.b)) {
            pairs.push_back(std::move(pair));
        } else {
            ++skip_count;
        }
    }
    if (skipped) *skipped = skip_count;
    if (pairs.empty()) fail(Err::EmptyDataset, "no correspondence produced a valid pair");
    return pairs;
}

std::vector<TrainingPair> mine_soft_negatives(CorpusContext& ctx) {
    const Corpus& corpus = ctx.corpus();
    const MiningConfig& cfg = ctx.config();
    const std::size_t budget = cfg.soft_budget;
    if (budget < 1) fail(Err::InvalidConfig, "soft-negative budget must be at least 1");

    Rng rng(mix_seed(cfg.seed, 0x736f6674ULL));
    std::set<NegCandidate> seen;
    std::vector<NegCandidate> picked;
    const std::size_t max_attempts = budget * 64 + 256;
    for (std::size_t attempt = 0; attempt < max_attempts && picked.size() < budget; ++attempt) {
        const int a = static_cast<int>(rng.next_below(corpus.models.size()));
        const int b = static_cast<int>(rng.next_below(corpus.models.size()));
        const Model& ma = corpus.models[a];
        const Model& mb = corpus.models[b];
        if (ma.keypoints.empty() || mb.keypoints.empty()) continue;
        const int i = static_cast<int>(rng.next_below(ma.keypoints.size()));
        const int j = static_cast<int>(rng.next_below(mb.keypoints.size()));
        if (ma.part_labels[i] == mb.part_labels[j]) continue;
        if (ctx.is_ground_truth(a, i, b, j)) continue;
        const Eigen::VectorXd& da = ctx.baseline_descriptors(a)[i];
        const Eigen::VectorXd& db = ctx.baseline_descriptors(b)[j];
        if (da.size() == 0 || db.size() == 0) continue;
        if ((da - db).norm() <= cfg.soft_distance_threshold) continue;
        NegCandidate cand(a, i, b, j);
        if (!seen.insert(cand).second) continue;
        picked.push_back(cand);
    }
    std::sort(picked.begin(), picked.end());

    std::vector<TrainingPair> out;
    for (const NegCandidate& c : picked) {
        TrainingPair pair;
        pair.positive = false;
        pair.gamma = 0;
        if (try_extract(corpus.models[c.model_a].cloud,
                        corpus.models[c.model_a].keypoints[c.kp_a], cfg.patch, pair.a) &&
            try_extract(corpus.models[c.model_b].cloud,
                        corpus.models[c.model_b].keypoints[c.kp_b], cfg.patch, pair.b)) {
            out.push_back(std::move(pair));
        }
    }
    if (out.empty()) fail(Err::EmptyDataset, "no soft negative satisfied the distance threshold");
    return out;
}

std::vector<TrainingPair> mine_hard_negatives(CorpusContext& ctx) {
    const Corpus& corpus = ctx.corpus();
    const MiningConfig& cfg = ctx.config();
    const std::size_t budget = cfg.hard_budget;
    if (budget < 1) fail(Err::InvalidConfig, "hard-negative budget must be at least 1");
    const std::size_t n_models = corpus.models.size();

    // same-model runs always; cross-model runs sampled
    std::vector<std::pair<int, int>> runs;
    for (std::size_t m = 0; m < n_models; ++m) runs.emplace_back(m, m);
    Rng rng(mix_seed(cfg.seed, 0x68617264ULL));
    if (n_models > 1) {
        const std::size_t wanted = std::min(n_models * (n_models - 1), 4 * n_models);
        std::set<std::pair<int, int>> seen_runs;
        std::size_t guard = 0;
        while (seen_runs.size() < wanted && guard++ < wanted * 32) {
            int a = static_cast<int>(rng.next_below(n_models));
            int b = static_cast<int>(rng.next_below(n_models));
            if (a == b) continue;
            if (seen_runs.insert({a, b}).second) runs.emplace_back(a, b);
        }
    }

    std::set<NegCandidate> seen;
    std::vector<NegCandidate> candidates;
    for (const auto& [a, b] : runs) {
        const auto& descs_a = ctx.baseline_descriptors(a);
        const auto& descs_b = ctx.baseline_descriptors(b);
        std::vector<int> qmap, tmap;
        std::vector<Eigen::VectorXd> qs, ts;
        for (std::size_t i = 0; i < descs_a.size(); ++i) {
            if (descs_a[i].size() > 0) {
                qmap.push_back(static_cast<int>(i));
                qs.push_back(descs_a[i]);
            }
        }
        for (std::size_t i = 0; i < descs_b.size(); ++i) {
            if (descs_b[i].size() > 0) {
                tmap.push_back(static_cast<int>(i));
                ts.push_back(descs_b[i]);
            }
        }
        if (qs.empty() || ts.size() < 2) continue;
        for (const auto& m : baseline::nndr_match(qs, ts, cfg.nndr_max_ratio)) {
            const int i = qmap[m.query_index];
            const int j = tmap[m.target_index];
            if (corpus.models[a].part_labels[i] == corpus.models[b].part_labels[j]) continue;
            if (ctx.is_ground_truth(a, i, b, j)) continue;
            NegCandidate cand(a, i, b, j);
            if (seen.insert(cand).second) candidates.push_back(cand);
        }
    }

    if (candidates.size() > budget) {
        rng.shuffle(candidates);
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(budget),
                         candidates.end());
    }
    std::sort(candidates.begin(), candidates.end());

    std::vector<TrainingPair> out;
    for (const NegCandidate& c : candidates) {
        TrainingPair pair;
        pair.positive = false;
        pair.gamma = 1;
        if (try_extract(corpus.models[c.model_a].cloud,
                        corpus.models[c.model_a].keypoints[c.kp_a], cfg.patch, pair.a) &&
            try_extract(corpus.models[c.model_b].cloud,
                        corpus.models[c.model_b].keypoints[c.kp_b], cfg.patch, pair.b)) {
            out.push_back(std::move(pair));
        }
    }
    if (out.empty()) fail(Err::EmptyDataset, "no hard negative found");
    return out;
}

std::vector<TrainingTriplet> build_triplets(CorpusContext& ctx, std::size_t budget) {
    const Corpus& corpus = ctx.corpus();
    const MiningConfig& cfg = ctx.config();
    if (budget < 1) fail(Err::InvalidConfig, "triplet budget must be at least 1");

    struct AnchorRef {
        int cs, pair;
    };
    std::vector<AnchorRef> anchors;
    for (std::size_t c = 0; c < corpus.correspondences.size(); ++c) {
        for (std::size_t p = 0; p < corpus.correspondences[c].pairs.size(); ++p) {
            anchors.push_back({static_cast<int>(c), static_cast<int>(p)});
        }
    }
    if (anchors.empty()) fail(Err::EmptyDataset, "corpus has no correspondence sets");

    Rng rng(mix_seed(cfg.seed, 0x74726970ULL));
    rng.shuffle(anchors);
    if (anchors.size() > budget) anchors.resize(budget);
    std::sort(anchors.begin(), anchors.end(), [](const AnchorRef& x, const AnchorRef& y) {
        return std::tie(x.cs, x.pair) < std::tie(y.cs, y.pair);
    });

    std::vector<TrainingTriplet> out;
    for (const AnchorRef& ref : anchors) {
        const CorrespondenceSet& cs = corpus.correspondences[ref.cs];
        const int a = corpus.model_index(cs.model_a);
        const int b = corpus.model_index(cs.model_b);
        const auto& [ia, ib] = cs.pairs[ref.pair];
        const Model& ma = corpus.models[a];
        const Model& mb = corpus.models[b];

        // negative: any keypoint on a distinct part, not corresponding to the anchor
        int neg_model = -1, neg_kp = -1;
        for (int attempt = 0; attempt < 128; ++attempt) {
            int nm = static_cast<int>(rng.next_below(corpus.models.size()));
            const Model& mn = corpus.models[nm];
            if (mn.keypoints.empty()) continue;
            int nk = static_cast<int>(rng.next_below(mn.keypoints.size()));
            if (mn.part_labels[nk] == ma.part_labels[ia]) continue;
            if (ctx.is_ground_truth(a, ia, nm, nk)) continue;
            neg_model = nm;
            neg_kp = nk;
            break;
        }
        if (neg_model < 0) continue;

        TrainingTriplet t;
        if (try_extract(ma.cloud, ma.keypoints[ia], cfg.patch, t.anchor) &&
            try_extract(mb.cloud, mb.keypoints[ib], cfg.patch, t.positive) &&
            try_extract(corpus.models[neg_model].cloud,
                        corpus.models[neg_model].keypoints[neg_kp], cfg.patch, t.negative)) {
            out.push_back(std::move(t));
        }
    }
    if (out.empty()) fail(Err::EmptyDataset, "no triplet could be built");
    return out;
}

Dataset mine_dataset(const Corpus& corpus, const MiningConfig& cfg, Dataset::Kind kind,
                     MineCounts* counts) {
    Dataset dataset;
    dataset.kind = kind;
    dataset.n_points = cfg.patch.n_points;

    std::size_t skipped = 0;
    if (kind == Dataset::Kind::triplets) {
        CorpusContext ctx(corpus, cfg);
        std::size_t budget = cfg.positive_budget;
        if (budget == 0) {
            for (const auto& cs : corpus.correspondences) budget += cs.pairs.size();
        }
        dataset.triplets = build_triplets(ctx, budget);
        if (counts) {
            *counts = {};
            counts->positives = dataset.triplets.size();
        }
        return dataset;
    }

    std::vector<TrainingPair> positives = build_positive_pairs(corpus, cfg, &skipped);

    MiningConfig negative_cfg = cfg;
    // default budgets keep positives : soft : hard at 2 : 1 : 1
    if (negative_cfg.soft_budget == 0) {
        negative_cfg.soft_budget = std::max<std::size_t>(1, positives.size() / 2);
    }
    if (negative_cfg.hard_budget == 0) {
        negative_cfg.hard_budget = std::max<std::size_t>(1, positives.size() / 2);
    }

    CorpusContext ctx(corpus, negative_cfg);
    std::vector<TrainingPair> soft = mine_soft_negatives(ctx);
    std::vector<TrainingPair> hard = mine_hard_negatives(ctx);

    if (counts) {
        counts->positives = positives.size();
        counts->soft = soft.size();
        counts->hard = hard.size();
        counts->skipped = skipped;
    }
    dataset.pairs = std::move(positives);
    dataset.pairs.insert(dataset.pairs.end(), std::make_move_iterator(soft.begin()),
                         std::make_move_iterator(soft.end()));
    dataset.pairs.insert(dataset.pairs.end(), std::make_move_iterator(hard.begin()),
                         std::make_move_iterator(hard.end()));
    return dataset;
}

Corpus augment_multiresolution(const Corpus& corpus, const std::vector<double>& fractions,
                               std::uint64_t seed) {
    for (double f : fractions) {
        if (f <= 0.0 || f >= 1.0) fail(Err::InvalidInput, "fractions must be in (0, 1)");
    }
    Corpus out = corpus;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        const double fraction = fractions[fi];
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "@%g", fraction);

        // old keypoint position -> new keypoint position (or -1) per model
        std::vector<std::vector<int>> remap(corpus.models.size());
        for (std::size_t mi = 0; mi < corpus.models.size(); ++mi) {
            const Model& src = corpus.models[mi];
            const double resolution = geom::compute_resolution(src.cloud);
            PointCloud sub = geom::subsample(src.cloud, fraction,
                                             mix_seed(seed, fi * 8192 + mi));
            Model copy;
            copy.cloud = sub;
            copy.cloud.id = src.cloud.id + suffix;

            remap[mi].assign(src.keypoints.size(), -1);
            for (std::size_t k = 0; k < src.keypoints.size(); ++k) {
                const Vec3& kp = src.cloud.points[src.keypoints[k]];
                double best = std::numeric_limits<double>::infinity();
                int arg = -1;
                for (std::size_t j = 0; j < sub.points.size(); ++j) {
                    double d = (sub.points[j] - kp).norm();
                    if (d < best) {
                        best = d;
                        arg = static_cast<int>(j);
                    }
                }
                if (arg < 0 || best > 2.0 * resolution) continue;  // keypoint dropped
                remap[mi][k] = static_cast<int>(copy.keypoints.size());
                copy.keypoints.push_back(arg);
                copy.part_labels.push_back(src.part_labels.empty() ? static_cast<int>(k)
                                                                   : src.part_labels[k]);
            }
            out.models.push_back(std::move(copy));
        }

        for (const CorrespondenceSet& cs : corpus.correspondences) {
            const int a = corpus.model_index(cs.model_a);
            const int b = corpus.model_index(cs.model_b);
            if (a < 0 || b < 0) continue;
            CorrespondenceSet copy;
            copy.model_a = cs.model_a + suffix;
            copy.model_b = cs.model_b + suffix;
            for (const auto& [ia, ib] : cs.pairs) {
                const int na = remap[a][ia];
                const int nb = remap[b][ib];
                if (na >= 0 && nb >= 0) copy.pairs.emplace_back(na, nb);
            }
            for (const auto& [kp, group] : cs.sym_a) {
                if (remap[a][kp] >= 0) copy.sym_a.emplace_back(remap[a][kp], group);
            }
            for (const auto& [kp, group] : cs.sym_b) {
                if (remap[b][kp] >= 0) copy.sym_b.emplace_back(remap[b][kp], group);
            }
            if (!copy.pairs.empty()) out.correspondences.push_back(std::move(copy));
        }
    }
    return out;
}

Corpus split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed,
                    bool keep_train) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        fail(Err::InvalidInput, "train fraction must be in (0, 1)");
    }
    auto in_train = [&](const std::string& id) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : id) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h = mix_seed(h, seed);
        return static_cast<double>(h >> 11) * 0x1.0p-53 < train_fraction;
    };

    Corpus out;
    for (const Model& m : corpus.models) {
        if (in_train(m.cloud.id) == keep_train) out.models.push_back(m);
    }
    for (const CorrespondenceSet& cs : corpus.correspondences) {
        if (out.model_index(cs.model_a) >= 0 && out.model_index(cs.model_b) >= 0) {
            out.correspondences.push_back(cs);
        }
    }
    return out;
}

}  // namespace dp3d::mining
