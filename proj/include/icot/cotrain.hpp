#pragma once

// Iterative co-training: class-balanced incremental sampling, pseudo-label
// exchange (cross / cyclic / agreement), weighted prediction fusion, the APR
// diversity measure and the ZSL / GZSL co-training loops.

#include "icot/basemodels.hpp"
#include "icot/datamodel.hpp"
#include "icot/metrics.hpp"
#include "icot/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

// ---------------------------------------------------------------- sampling

/// Candidate pool rows with the pseudo label each carries.
struct PoolLabels {
    std::vector<std::size_t> rows;
    std::vector<ClassId> labels;

    [[nodiscard]] std::size_t size() const { return rows.size(); }

    static PoolLabels all_rows(std::span<const ClassId> labels) {
        PoolLabels out;
        out.rows.resize(labels.size());
        std::iota(out.rows.begin(), out.rows.end(), std::size_t{0});
        out.labels.assign(labels.begin(), labels.end());
        return out;
    }

    /// Entries whose label satisfies `keep`.
    template <class Pred>
    [[nodiscard]] PoolLabels filtered(Pred keep) const {
        PoolLabels out;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (keep(labels[i])) {
                out.rows.push_back(rows[i]);
                out.labels.push_back(labels[i]);
            }
        }
        return out;
    }
};

enum class SelectionMode { Incremental, OneOff };

/// floor(M t / T).
inline std::size_t selection_budget(std::size_t m, std::size_t t, std::size_t total_iters) {
    if (total_iters < 1 || t < 1 || t > total_iters) {
        throw std::invalid_argument("selection_budget: need 1 <= t <= T (t=" + std::to_string(t) +
                                    ", T=" + std::to_string(total_iters) + ")");
    }
    return m * t / total_iters;
}

/// Draws floor(M t / T) rows, an equal share per present pseudo class, uniformly
/// with replacement inside each class. The remainder goes one each to the
/// lowest-id classes. M is the candidate count.
inline PseudoLabeledSet incremental_select(const PoolLabels& candidates, std::size_t t, std::size_t total_iters,
                                           std::uint64_t seed) {
    if (candidates.rows.size() != candidates.labels.size()) {
        throw std::invalid_argument("incremental_select: rows/labels length mismatch");
    }
    PseudoLabeledSet out;
    out.iteration = static_cast<int>(t);
    const std::size_t budget = selection_budget(candidates.size(), t, total_iters);
    if (budget == 0) return out;

    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < candidates.size(); ++i) by_class[candidates.labels[i]].push_back(candidates.rows[i]);
    const std::size_t present = by_class.size();
    const std::size_t base = budget / present;
    std::size_t remainder = budget % present;

    Rng rng(seed);
    out.rows.reserve(budget);
    out.classes.reserve(budget);
    for (const auto& [cls, rows] : by_class) {
        const std::size_t quota = base + (remainder > 0 ? 1 : 0);
        if (remainder > 0) --remainder;
        std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
        for (std::size_t i = 0; i < quota; ++i) {
            out.rows.push_back(rows[pick(rng)]);
            out.classes.push_back(cls);
        }
    }
    return out;
}

/// Convenience form over every pool row.
inline PseudoLabeledSet incremental_select(std::span<const ClassId> pseudo_labels, const UnlabeledPool& pool,
                                           std::size_t t, std::size_t total_iters, std::uint64_t seed) {
    if (pseudo_labels.size() != pool.size()) {
        throw std::invalid_argument("incremental_select: one pseudo label per pool row required");
    }
    if (pool.size() == 0) throw std::invalid_argument("incremental_select: empty pool");
    return incremental_select(PoolLabels::all_rows(pseudo_labels), t, total_iters, seed);
}

// ---------------------------------------------------------------- exchange

enum class ExchangeVariant { Cross, Cyclic, Agreement };

struct ExchangePolicy {
    ExchangeVariant variant = ExchangeVariant::Cross;
    /// Cyclic order: cycle[j] feeds cycle[j+1], last feeds first. Empty means 0..k-1.
    std::vector<std::size_t> cycle;

    static ExchangePolicy cross() { return {}; }
    static ExchangePolicy cyclic(std::vector<std::size_t> order = {}) {
        return {ExchangeVariant::Cyclic, std::move(order)};
    }
    static ExchangePolicy agreement() { return {ExchangeVariant::Agreement, {}}; }

    void validate(std::size_t learners) const {
        if (variant == ExchangeVariant::Cross && learners != 2) {
            throw std::invalid_argument("exchange: cross policy needs exactly 2 learners, got " +
                                        std::to_string(learners));
        }
        if (variant != ExchangeVariant::Cross && learners < 3) {
            throw std::invalid_argument("exchange: cyclic/agreement policies need >= 3 learners, got " +
                                        std::to_string(learners));
        }
        if (variant == ExchangeVariant::Cyclic && !cycle.empty()) {
            std::vector<std::size_t> sorted(cycle);
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t i = 0; i < sorted.size(); ++i) {
                if (sorted.size() != learners || sorted[i] != i) {
                    throw std::invalid_argument("exchange: cycle must be a permutation of 0..k-1");
                }
            }
        }
    }

    /// For each receiving learner, the learner whose pseudo labels it gets
    /// (cross and cyclic only).
    [[nodiscard]] std::vector<std::size_t> sources(std::size_t learners) const {
        validate(learners);
        std::vector<std::size_t> src(learners);
        if (variant == ExchangeVariant::Cross) {
            src = {1, 0};
        } else if (variant == ExchangeVariant::Cyclic) {
            std::vector<std::size_t> order(cycle);
            if (order.empty()) {
                order.resize(learners);
                std::iota(order.begin(), order.end(), std::size_t{0});
            }
            for (std::size_t j = 0; j < learners; ++j) src[order[j]] = order[(j + learners - 1) % learners];
        } else {
            throw std::logic_error("exchange: agreement has no single source learner");
        }
        return src;
    }
};

inline std::string to_string(ExchangeVariant v) {
    switch (v) {
        case ExchangeVariant::Cross: return "cross";
        case ExchangeVariant::Cyclic: return "cyclic";
        case ExchangeVariant::Agreement: return "agreement";
    }
    return "?";
}

inline ExchangeVariant parse_exchange_variant(const std::string& s) {
    if (s == "cross") return ExchangeVariant::Cross;
    if (s == "cyclic") return ExchangeVariant::Cyclic;
    if (s == "agreement") return ExchangeVariant::Agreement;
    throw std::invalid_argument("unknown exchange policy \"" + s + "\" (expected cross|cyclic|agreement)");
}

/// Reassigns already-selected sets: learner i receives its source's set.
inline std::vector<PseudoLabeledSet> exchange(const std::vector<PseudoLabeledSet>& sets, const ExchangePolicy& policy) {
    const auto src = policy.sources(sets.size());
    std::vector<PseudoLabeledSet> out;
    out.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) out.push_back(sets[src[i]]);
    return out;
}

/// Candidate pseudo labels each learner will sample from. Cross/cyclic hand
/// over the source learner's labels on every row; agreement keeps rows where
/// all other learners predict the same class, carrying that class.
inline std::vector<PoolLabels> exchange_candidates(const std::vector<std::vector<ClassId>>& labels,
                                                   const ExchangePolicy& policy) {
    const std::size_t k = labels.size();
    policy.validate(k);
    for (const auto& l : labels) {
        if (l.size() != labels.front().size()) throw std::invalid_argument("exchange: label vectors differ in length");
    }
    std::vector<PoolLabels> out(k);
    if (policy.variant != ExchangeVariant::Agreement) {
        const auto src = policy.sources(k);
        for (std::size_t i = 0; i < k; ++i) out[i] = PoolLabels::all_rows(labels[src[i]]);
        return out;
    }
    const std::size_t m = labels.front().size();
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t r = 0; r < m; ++r) {
            std::optional<ClassId> agreed;
            bool same = true;
            for (std::size_t j = 0; j < k && same; ++j) {
                if (j == i) continue;
                if (!agreed) {
                    agreed = labels[j][r];
                } else if (*agreed != labels[j][r]) {
                    same = false;
                }
            }
            if (same && agreed) {
                out[i].rows.push_back(r);
                out[i].labels.push_back(*agreed);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- fusion

/// Convex combination weights, one per learner.
struct FusionWeights {
    std::vector<double> weights;

    /// alpha * p_first + (1 - alpha) * p_second.
    static FusionWeights alpha(double a) {
        if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("FusionWeights: alpha must lie in [0, 1]");
        return {{a, 1.0 - a}};
    }
    static FusionWeights uniform(std::size_t k) { return {std::vector<double>(k, 1.0 / static_cast<double>(k))}; }
};

/// Weighted-sum probabilities; weights are normalized to sum to one.
inline Predictions fuse_probabilities(const std::vector<Predictions>& preds, const FusionWeights& fusion) {
    if (preds.empty()) throw std::invalid_argument("fuse_predictions: no predictions");
    std::vector<double> w = fusion.weights.empty() ? FusionWeights::uniform(preds.size()).weights : fusion.weights;
    if (w.size() != preds.size()) {
        throw std::invalid_argument("fuse_predictions: " + std::to_string(w.size()) + " weights for " +
                                    std::to_string(preds.size()) + " learners");
    }
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("fuse_predictions: weights must be >= 0");
        total += x;
    }
    if (!(total > 0.0)) throw std::invalid_argument("fuse_predictions: weights sum to zero");
    Predictions out{preds.front().classes, Matrix::Zero(preds.front().probs.rows(), preds.front().probs.cols())};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].classes != out.classes) throw std::invalid_argument("fuse_predictions: mismatched class lists");
        if (preds[i].probs.rows() != out.probs.rows()) throw std::invalid_argument("fuse_predictions: row count mismatch");
        out.probs += (w[i] / total) * preds[i].probs;
    }
    return out;
}

/// Argmax of the weighted sum; ties go to the lowest class id.
inline std::vector<ClassId> fuse_predictions(const std::vector<Predictions>& preds, const FusionWeights& fusion) {
    return fuse_probabilities(preds, fusion).argmax();
}

// ---------------------------------------------------------------- APR

/// Mean over true classes (in `classes`, with >= 1 row) of the fraction of
/// rows where the two prediction vectors differ.
inline double apr(std::span<const ClassId> preds_a, std::span<const ClassId> preds_b, std::span<const ClassId> truths,
                  std::span<const ClassId> classes) {
    if (classes.empty()) throw std::invalid_argument("apr: empty class list");
    if (preds_a.size() != truths.size() || preds_b.size() != truths.size()) {
        throw std::invalid_argument("apr: prediction/truth length mismatch");
    }
    std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // differing, total
    for (ClassId c : classes) tally.emplace(c, std::pair<std::size_t, std::size_t>{0, 0});
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto it = tally.find(truths[i]);
        if (it == tally.end()) continue;
        ++it->second.second;
        if (preds_a[i] != preds_b[i]) ++it->second.first;
    }
    double sum = 0.0;
    std::size_t populated = 0;
    for (const auto& [c, dt] : tally) {
        if (dt.second == 0) continue;
        sum += static_cast<double>(dt.first) / static_cast<double>(dt.second);
        ++populated;
    }
    return populated == 0 ? 0.0 : sum / static_cast<double>(populated);
}

/// Mean of apr(X, A) and apr(X, B).
inline double apr_vs_pair(std::span<const ClassId> preds_x, std::span<const ClassId> preds_a,
                          std::span<const ClassId> preds_b, std::span<const ClassId> truths,
                          std::span<const ClassId> classes) {
    return 0.5 * (apr(preds_x, preds_a, truths, classes) + apr(preds_x, preds_b, truths, classes));
}

// ---------------------------------------------------------------- engine

struct CotrainOptions {
    std::size_t iterations = 8;  // T
    ExchangePolicy policy{};
    FusionWeights fusion = FusionWeights::alpha(0.5);
    std::uint64_t seed = 0;
    SelectionMode mode = SelectionMode::Incremental;
    bool warm_start = false;
    std::size_t threads = 1;
};

/// Ground truth on the pool, used only for reporting.
struct PoolTruth {
    std::vector<ClassId> labels;
};

struct IterationRecord {
    int t = 0;
    std::vector<std::string> tags;
    std::vector<std::size_t> train_sizes;
    std::vector<std::size_t> pseudo_sizes;
    std::size_t predicted_seen = 0;
    std::size_t predicted_unseen = 0;
    std::optional<std::vector<double>> learner_acc;  // unseen ACC per learner
    std::optional<double> fused_acc;                 // unseen ACC of the fused prediction
    std::optional<double> fused_seen_acc;            // GZSL only
    std::optional<double> apr_value;                 // mean pairwise APR

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j{{"t", t},
                         {"learners", tags},
                         {"train_set_size", train_sizes},
                         {"pseudo_set_size", pseudo_sizes},
                         {"predicted_seen", predicted_seen},
                         {"predicted_unseen", predicted_unseen}};
        j["unseen_acc"] = learner_acc ? nlohmann::json(*learner_acc) : nlohmann::json(nullptr);
        j["fused_unseen_acc"] = fused_acc ? nlohmann::json(*fused_acc) : nlohmann::json(nullptr);
        if (fused_seen_acc) j["fused_seen_acc"] = *fused_seen_acc;
        j["apr"] = apr_value ? nlohmann::json(*apr_value) : nlohmann::json(nullptr);
        return j;
    }

    static IterationRecord from_json(const nlohmann::json& j) {
        auto opt = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        IterationRecord r;
        r.t = j.at("t").get<int>();
        r.tags = j.at("learners").get<std::vector<std::string>>();
        r.train_sizes = j.at("train_set_size").get<std::vector<std::size_t>>();
        r.pseudo_sizes = j.at("pseudo_set_size").get<std::vector<std::size_t>>();
        r.predicted_seen = j.at("predicted_seen").get<std::size_t>();
        r.predicted_unseen = j.at("predicted_unseen").get<std::size_t>();
        if (!j.at("unseen_acc").is_null()) r.learner_acc = j.at("unseen_acc").get<std::vector<double>>();
        r.fused_acc = opt("fused_unseen_acc");
        r.fused_seen_acc = opt("fused_seen_acc");
        r.apr_value = opt("apr");
        return r;
    }
};

struct CotrainResult {
    std::vector<ClassId> labels;  // fused final labels, one per pool row
    Predictions fused;
    std::vector<Predictions> final_predictions;  // P_{i,T}
    std::vector<Predictions> initial_predictions;  // seen-only (inductive) predictions
    std::vector<LearnerPtr> learners;
    std::vector<IterationRecord> history;
};

namespace cotrain_detail {

/// Runs fn(i) for i in [0, n) with at most `threads` concurrent workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    for (std::size_t start = 0; start < n; start += threads) {
        std::vector<std::future<void>> jobs;
        for (std::size_t i = start; i < std::min(n, start + threads); ++i) {
            jobs.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
        }
        for (auto& j : jobs) j.get();
    }
}

struct Task {
    std::vector<ClassId> targets;  // prediction class space
    std::set<ClassId> eligible;    // pseudo labels that may be selected
};

inline IterationRecord make_record(int t, std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                   const std::vector<PseudoLabeledSet>& sets, const std::vector<Predictions>& preds,
                                   const FusionWeights& fusion, const ClassSpace& space, const PoolTruth* truth) {
    IterationRecord rec;
    rec.t = t;
    for (std::size_t i = 0; i < learners.size(); ++i) {
        rec.tags.push_back(learners[i].tag);
        rec.train_sizes.push_back(seen.size() + sets[i].size());
        rec.pseudo_sizes.push_back(sets[i].size());
    }
    const auto fused = fuse_predictions(preds, fusion);
    for (ClassId c : fused) (space.is_unseen(c) ? rec.predicted_unseen : rec.predicted_seen) += 1;
    if (truth == nullptr) return rec;

    std::vector<std::size_t> unseen_rows;
    std::vector<std::size_t> seen_rows;
    for (std::size_t r = 0; r < truth->labels.size(); ++r) {
        (space.is_unseen(truth->labels[r]) ? unseen_rows : seen_rows).push_back(r);
    }
    auto pick = [](const std::vector<ClassId>& v, const std::vector<std::size_t>& rows) {
        std::vector<ClassId> out;
        out.reserve(rows.size());
        for (std::size_t r : rows) out.push_back(v[r]);
        return out;
    };
    const auto truth_u = pick(truth->labels, unseen_rows);
    std::vector<std::vector<ClassId>> hard;
    std::vector<double> accs;
    for (const auto& p : preds) {
        hard.push_back(p.argmax());
        accs.push_back(per_class_acc(pick(hard.back(), unseen_rows), truth_u, space.unseen).mean);
    }
    rec.learner_acc = accs;
    rec.fused_acc = per_class_acc(pick(fused, unseen_rows), truth_u, space.unseen).mean;
    if (!seen_rows.empty()) {
        rec.fused_seen_acc = per_class_acc(pick(fused, seen_rows), pick(truth->labels, seen_rows), space.seen).mean;
    }
    if (hard.size() >= 2 && !unseen_rows.empty()) {
        double total = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < hard.size(); ++i) {
            for (std::size_t j = i + 1; j < hard.size(); ++j) {
                total += apr(pick(hard[i], unseen_rows), pick(hard[j], unseen_rows), truth_u, space.unseen);
                ++pairs;
            }
        }
        rec.apr_value = total / static_cast<double>(pairs);
    }
    return rec;
}

/// Builds each learner's pseudo-labeled set for iteration `t` from the
/// current per-learner hard labels.
inline std::vector<PseudoLabeledSet> select_sets(std::span<const LearnerSpec> learners,
                                                 const std::vector<std::vector<ClassId>>& labels,
                                                 const ExchangePolicy& policy, const Task& task, std::size_t t,
                                                 const CotrainOptions& opt) {
    std::vector<PoolLabels> candidates;
    if (learners.size() == 1) {
        candidates.push_back(PoolLabels::all_rows(labels.front()));
    } else {
        candidates = exchange_candidates(labels, policy);
    }
    const std::size_t t_eff = opt.mode == SelectionMode::OneOff ? opt.iterations : t;
    std::vector<PseudoLabeledSet> sets;
    for (std::size_t i = 0; i < learners.size(); ++i) {
        const PoolLabels eligible = candidates[i].filtered([&](ClassId c) { return task.eligible.count(c) > 0; });
        PseudoLabeledSet s = incremental_select(eligible, t_eff, opt.iterations,
                                                derive_seed(opt.seed, "select/" + learners[i].tag, t));
        s.source = learners[i].tag;
        s.iteration = static_cast<int>(t);
        sets.push_back(std::move(s));
    }
    return sets;
}

inline CotrainResult run(std::span<const LearnerSpec> learners, const LabeledDataset& seen, const UnlabeledPool& pool,
                         const SemanticTable& semantics, const ClassSpace& space, const Task& task,
                         const CotrainOptions& opt, const PoolTruth* truth) {
    if (learners.empty()) throw std::invalid_argument("co-training: no learners");
    if (learners.size() > 1) opt.policy.validate(learners.size());
    if (opt.iterations < 1) throw std::invalid_argument("co-training: T must be >= 1");
    if (pool.size() == 0) throw std::invalid_argument("co-training: empty pool");
    if (seen.size() == 0) throw std::invalid_argument("co-training: empty seen set");
    if (truth != nullptr && truth->labels.size() != pool.size()) {
        throw std::invalid_argument("co-training: truth length differs from pool size");
    }
    const std::size_t k = learners.size();
    const std::size_t T = opt.iterations;

    std::vector<LearnerPtr> models(k);
    std::vector<Predictions> preds(k);
    auto train_all = [&](std::size_t t, const std::vector<PseudoLabeledSet>* sets) {
        std::vector<LearnerPtr> previous = models;
        parallel_for(k, opt.threads, [&](std::size_t i) {
            const LabeledDataset data = sets == nullptr ? seen : merge_train_set(seen, (*sets)[i], pool);
            const TrainRequest req{data, semantics, task.targets, derive_seed(opt.seed, "train/" + learners[i].tag, t),
                                   opt.warm_start ? previous[i].get() : nullptr};
            try {
                models[i] = learners[i].train(req);
                preds[i] = predict(*models[i], pool.features, task.targets);
            } catch (const std::exception& e) {
                throw std::runtime_error("co-training iteration " + std::to_string(t) + ", learner " +
                                         learners[i].tag + ": " + e.what());
            }
        });
    };
    auto hard_labels = [&] {
        std::vector<std::vector<ClassId>> out;
        for (const auto& p : preds) out.push_back(p.argmax());
        return out;
    };

    CotrainResult result;
    train_all(0, nullptr);
    result.initial_predictions = preds;
    std::vector<PseudoLabeledSet> sets = select_sets(learners, hard_labels(), opt.policy, task, 1, opt);
    for (std::size_t t = 1; t <= T; ++t) {
        train_all(t, &sets);
        result.history.push_back(
            make_record(static_cast<int>(t), learners, seen, sets, preds, opt.fusion, space, truth));
        if (t < T) sets = select_sets(learners, hard_labels(), opt.policy, task, std::min(t + 1, T), opt);
    }
    result.fused = fuse_probabilities(preds, opt.fusion);
    result.labels = result.fused.argmax();
    result.final_predictions = preds;
    result.learners = models;
    return result;
}

}  // namespace cotrain_detail

/// Co-training over an unseen-only pool; predictions and pseudo labels span Y^U.
inline CotrainResult icot_zsl_run(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                  const UnlabeledPool& pool, const SemanticTable& semantics, const ClassSpace& space,
                                  const CotrainOptions& options, const PoolTruth* truth = nullptr) {
    if (learners.size() < 2) throw std::invalid_argument("icot_zsl_run: need at least 2 learners");
    cotrain_detail::Task task{space.unseen, {space.unseen.begin(), space.unseen.end()}};
    return cotrain_detail::run(learners, seen, pool, semantics, space, task, options, truth);
}

/// Co-training over a compound pool; predictions span Y and only rows
/// pseudo-labeled as unseen are eligible for selection (M = their count).
inline CotrainResult icot_gzsl_run(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                   const UnlabeledPool& compound_pool, const SemanticTable& semantics,
                                   const ClassSpace& space, const CotrainOptions& options,
                                   const PoolTruth* truth = nullptr) {
    if (learners.size() < 2) throw std::invalid_argument("icot_gzsl_run: need at least 2 learners");
    cotrain_detail::Task task{space.all(), {space.unseen.begin(), space.unseen.end()}};
    return cotrain_detail::run(learners, seen, compound_pool, semantics, space, task, options, truth);
}

/// Single-learner self-training with the same schedule (baseline for ablations).
inline CotrainResult self_train_run(const LearnerSpec& learner, const LabeledDataset& seen, const UnlabeledPool& pool,
                                    const SemanticTable& semantics, const ClassSpace& space,
                                    const CotrainOptions& options, const PoolTruth* truth = nullptr) {
    cotrain_detail::Task task{space.unseen, {space.unseen.begin(), space.unseen.end()}};
    CotrainOptions opt = options;
    opt.fusion = FusionWeights::uniform(1);
    return cotrain_detail::run(std::span<const LearnerSpec>(&learner, 1), seen, pool, semantics, space, task, opt,
                               truth);
}

/// Trains every learner on seen data only and predicts the pool over Y^U.
inline std::vector<Predictions> inductive_predictions(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                                      const UnlabeledPool& pool, const SemanticTable& semantics,
                                                      const ClassSpace& space, std::uint64_t seed) {
    std::vector<Predictions> out;
    for (const auto& l : learners) {
        const TrainRequest req{seen, semantics, space.unseen, derive_seed(seed, "train/" + l.tag, 0), nullptr};
        out.push_back(predict(*l.train(req), pool.features, space.unseen));
    }
    return out;
}

}  // namespace icot
