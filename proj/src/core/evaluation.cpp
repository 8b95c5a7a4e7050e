#include "core/evaluation.hpp"

#include "core/baseline.hpp"
#include "core/errors.hpp"
#include "core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dp3d::eval {

void EvalConfig::validate() const {
    if (k < 1) fail(Err::InvalidConfig, "CMC cutoff k must be at least 1");
    if (tau <= 0.0) fail(Err::InvalidConfig, "tau must be positive");
    if (match_rule == MatchRule::nndr && (nndr_ratio <= 0.0 || nndr_ratio > 1.0)) {
        fail(Err::InvalidConfig, "NNDR ratio must be in (0, 1]");
    }
}

int sym_group_of(const std::vector<std::pair<int, int>>& groups, int keypoint) {
    for (const auto& [kp, group] : groups) {
        if (kp == keypoint) return group;
    }
    return -1;
}

ModelDescriptors describe_keypoints(const model::EncoderParams& params, const PointCloud& cloud,
                                    const std::vector<int>& keypoints, const PatchParams& patch,
                                    std::vector<int>* failed) {
    ModelDescriptors out(keypoints.size());
    std::size_t ok = 0;
    for (std::size_t i = 0; i < keypoints.size(); ++i) {
        try {
            Patch p = geom::extract_patch(cloud, keypoints[i], patch);
            out[i] = model::encoder_forward(params, p);
            ++ok;
        } catch (const Error& e) {
            if (e.code() == Err::InsufficientSupport || e.code() == Err::DegenerateGeometry) {
                if (failed) failed->push_back(static_cast<int>(i));
            } else {
                throw;
            }
        }
    }
    if (!keypoints.empty() && ok == 0) {
        fail(Err::EmptyDescriptorSet, "no keypoint produced a descriptor");
    }
    return out;
}

std::vector<std::vector<int>> rank_matches(const ModelDescriptors& queries,
                                           const ModelDescriptors& targets) {
    if (targets.empty()) fail(Err::InvalidInput, "rank_matches needs at least one target");
    std::vector<int> live_targets;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t].size() > 0) live_targets.push_back(static_cast<int>(t));
    }

    std::vector<std::vector<int>> rankings(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (queries[q].size() == 0) continue;
        std::vector<std::pair<double, int>> scored;
        scored.reserve(live_targets.size());
        for (int t : live_targets) {
            scored.emplace_back((queries[q] - targets[t]).norm(), t);
        }
        std::sort(scored.begin(), scored.end());
        rankings[q].reserve(scored.size());
        for (const auto& [d, t] : scored) rankings[q].push_back(t);
    }
    return rankings;
}

std::vector<std::pair<int, int>> decide_matches(const ModelDescriptors& queries,
                                                const ModelDescriptors& targets,
                                                const EvalConfig& cfg) {
    std::vector<std::pair<int, int>> matches;
    if (cfg.match_rule == MatchRule::nndr) {
        // nndr_match works on dense lists; map in and out of live indices
        std::vector<int> qmap, tmap;
        std::vector<Eigen::VectorXd> qs, ts;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            if (queries[i].size() > 0) {
                qmap.push_back(static_cast<int>(i));
                qs.push_back(queries[i]);
            }
        }
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (targets[i].size() > 0) {
                tmap.push_back(static_cast<int>(i));
                ts.push_back(targets[i]);
            }
        }
        if (ts.size() < 2) return matches;
        for (const auto& m : baseline::nndr_match(qs, ts, cfg.nndr_ratio)) {
            matches.emplace_back(qmap[m.query_index], tmap[m.target_index]);
        }
        return matches;
    }

    // mutual nearest neighbor; ties toward the lower index on both sides
    auto nearest = [](const Eigen::VectorXd& probe, const ModelDescriptors& pool) {
        double best = std::numeric_limits<double>::infinity();
        int arg = -1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].size() == 0) continue;
            double d = (probe - pool[i]).norm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(i);
            }
        }
        return arg;
    };
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (queries[q].size() == 0) continue;
        int t = nearest(queries[q], targets);
        if (t < 0) continue;
        if (nearest(targets[t], queries) == static_cast<int>(q)) {
            matches.emplace_back(static_cast<int>(q), t);
        }
    }
    return matches;
}

namespace {

bool is_correct(const PairInstance& inst, const EvalConfig& cfg, int gt_target, int candidate) {
    if (candidate == gt_target) return true;
    if (cfg.symmetry != SymmetryMode::symmetric) return false;
    int g = sym_group_of(inst.sym_target, gt_target);
    return g >= 0 && sym_group_of(inst.sym_target, candidate) == g;
}

}  // namespace

std::vector<double> cmc_curve(const std::vector<PairInstance>& instances, const EvalConfig& cfg) {
    cfg.validate();
    std::vector<double> curve(cfg.k, 0.0);
    std::size_t used = 0;
    for (const PairInstance& inst : instances) {
        std::vector<double> local(cfg.k, 0.0);
        std::size_t counted = 0;
        for (const auto& [q, t] : inst.gt_pairs) {
            if (q < 0 || static_cast<std::size_t>(q) >= inst.rankings.size()) continue;
            const std::vector<int>& ranked = inst.rankings[q];
            if (ranked.empty()) continue;
            ++counted;
            int best_rank = -1;
            for (std::size_t r = 0; r < ranked.size(); ++r) {
                if (is_correct(inst, cfg, t, ranked[r])) {
                    best_rank = static_cast<int>(r) + 1;  // 1-indexed, inclusive
                    break;
                }
            }
            if (best_rank > 0) {
                for (int r = best_rank; r <= cfg.k; ++r) local[r - 1] += 1.0;
            }
        }
        if (counted == 0) continue;
        for (int r = 0; r < cfg.k; ++r) curve[r] += local[r] / static_cast<double>(counted);
        ++used;
    }
    if (used == 0) fail(Err::InvalidInput, "no ground-truth correspondences to evaluate");
    for (double& v : curve) v /= static_cast<double>(used);
    return curve;
}

double correspondence_accuracy(const std::vector<PairInstance>& instances,
                               const EvalConfig& cfg) {
    cfg.validate();
    double sum = 0.0;
    std::size_t used = 0;
    for (const PairInstance& inst : instances) {
        std::size_t counted = 0;
        std::size_t hits = 0;
        for (const auto& [q, t] : inst.gt_pairs) {
            if (q < 0 || static_cast<std::size_t>(q) >= inst.rankings.size()) continue;
            const std::vector<int>& ranked = inst.rankings[q];
            if (ranked.empty()) continue;
            ++counted;
            const int top = ranked.front();
            double dist;
            if (cfg.symmetry == SymmetryMode::symmetric && is_correct(inst, cfg, t, top)) {
                dist = 0.0;
            } else {
                if (!inst.target_positions[top] || !inst.target_positions[t]) continue;
                dist = (*inst.target_positions[top] - *inst.target_positions[t]).norm();
            }
            if (dist <= cfg.tau) ++hits;
        }
        if (counted == 0) continue;
        sum += static_cast<double>(hits) / static_cast<double>(counted);
        ++used;
    }
    if (used == 0) fail(Err::InvalidInput, "no ground-truth correspondences to evaluate");
    return sum / static_cast<double>(used);
}

PrecisionRecall precision_recall(const std::vector<PairInstance>& instances,
                                 const EvalConfig& cfg) {
    cfg.validate();
    std::size_t total_matches = 0;
    std::size_t correct = 0;
    std::size_t total_gt = 0;
    for (const PairInstance& inst : instances) {
        total_gt += inst.gt_pairs.size();
        for (const auto& [q, t] : inst.matches) {
            ++total_matches;
            for (const auto& [gq, gt] : inst.gt_pairs) {
                if (gq == q && is_correct(inst, cfg, gt, t)) {
                    ++correct;
                    break;
                }
            }
        }
    }
    PrecisionRecall pr;
    if (total_matches == 0) {
        pr.precision = 0.0;
        pr.zero_matches = true;
    } else {
        pr.precision = static_cast<double>(correct) / static_cast<double>(total_matches);
    }
    pr.recall = total_gt == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total_gt);
    return pr;
}

double bounding_box_diagonal(const PointCloud& cloud) {
    if (cloud.points.empty()) fail(Err::InvalidInput, "empty cloud has no bounding box");
    Vec3 lo = cloud.points.front();
    Vec3 hi = cloud.points.front();
    for (const Vec3& p : cloud.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double diag = (hi - lo).norm();
    return diag > 0.0 ? diag : 1.0;
}

std::vector<PairInstance> build_instances(const Corpus& corpus,
                                          const std::vector<ModelDescriptors>& descriptors,
                                          const EvalConfig& cfg, std::size_t* dropped) {
    if (descriptors.size() != corpus.models.size()) {
        fail(Err::InvalidInput, "descriptor sets do not cover every corpus model");
    }
    std::vector<PairInstance> instances;
    std::size_t dropped_count = 0;
    for (const CorrespondenceSet& cs : corpus.correspondences) {
        const int a = corpus.model_index(cs.model_a);
        const int b = corpus.model_index(cs.model_b);
        if (a < 0 || b < 0) fail(Err::InvalidInput, "correspondence references unknown model");
        const Model& ma = corpus.models[a];
        const Model& mb = corpus.models[b];

        PairInstance inst;
        inst.sym_query = cs.sym_a;
        inst.sym_target = cs.sym_b;
        inst.rankings = rank_matches(descriptors[a], descriptors[b]);
        inst.matches = decide_matches(descriptors[a], descriptors[b], cfg);

        const double diag_b = bounding_box_diagonal(mb.cloud);
        inst.target_positions.resize(mb.keypoints.size());
        for (std::size_t i = 0; i < mb.keypoints.size(); ++i) {
            if (descriptors[b][i].size() > 0) {
                inst.target_positions[i] = mb.cloud.points[mb.keypoints[i]] / diag_b;
            }
        }
        for (const auto& [ia, ib] : cs.pairs) {
            const bool have_a = ia >= 0 && static_cast<std::size_t>(ia) < descriptors[a].size() &&
                                descriptors[a][ia].size() > 0;
            const bool have_b = ib >= 0 && static_cast<std::size_t>(ib) < descriptors[b].size() &&
                                descriptors[b][ib].size() > 0;
            if (have_a && have_b) {
                inst.gt_pairs.emplace_back(ia, ib);
            } else {
                ++dropped_count;
            }
        }
        instances.push_back(std::move(inst));
    }
    if (dropped) *dropped = dropped_count;
    return instances;
}

EvalReport evaluate(const Corpus& corpus, const std::vector<ModelDescriptors>& descriptors,
                    const EvalConfig& cfg) {
    cfg.validate();
    EvalReport report;
    std::vector<PairInstance> instances = build_instances(corpus, descriptors, cfg,
                                                          &report.dropped_pairs);
    report.cmc = cmc_curve(instances, cfg);
    report.corr_accuracy = correspondence_accuracy(instances, cfg);
    PrecisionRecall pr = precision_recall(instances, cfg);
    report.precision = pr.precision;
    report.recall = pr.recall;
    report.zero_matches = pr.zero_matches;
    return report;
}

std::string format_report_csv(const EvalReport& report) {
    std::string out;
    char line[128];
    for (std::size_t r = 0; r < report.cmc.size(); ++r) {
        std::snprintf(line, sizeof(line), "%zu,%.9g\n", r + 1, report.cmc[r]);
        out += line;
    }
    std::snprintf(line, sizeof(line), "summary,%.9g,%.9g,%.9g\n", report.precision, report.recall,
                  report.corr_accuracy);
    out += line;
    return out;
}

std::string format_report_text(const EvalReport& symmetric, const EvalReport& non_symmetric) {
    std::string out;
    char line[160];
    const std::size_t k = symmetric.cmc.size();
    std::snprintf(line, sizeof(line), "%-24s %12s %12s\n", "metric", "symmetric", "no-symmetry");
    out += line;
    auto row = [&](const char* name, double a, double b) {
        std::snprintf(line, sizeof(line), "%-24s %12.4f %12.4f\n", name, a, b);
        out += line;
    };
    row(("cmc@" + std::to_string(k)).c_str(), symmetric.cmc.empty() ? 0.0 : symmetric.cmc.back(),
        non_symmetric.cmc.empty() ? 0.0 : non_symmetric.cmc.back());
    row("corr-accuracy", symmetric.corr_accuracy, non_symmetric.corr_accuracy);
    row("precision", symmetric.precision, non_symmetric.precision);
    row("recall", symmetric.recall, non_symmetric.recall);
    if (symmetric.zero_matches || non_symmetric.zero_matches) {
        out += "note: no matches were emitted; precision reported as 0\n";
    }
    if (symmetric.dropped_pairs > 0) {
        std::snprintf(line, sizeof(line),
                      "note: %zu ground-truth pairs lacked descriptors and were dropped\n",
                      symmetric.dropped_pairs);
        out += line;
    }
    return out;
}

}  // namespace dp3d::eval
