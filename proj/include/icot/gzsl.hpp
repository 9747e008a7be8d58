#pragma once

// GZSL pipelines: plain ICoT-GZSL plus the two-stage variants that first gate
// the compound test pool into likely-unseen and remaining rows.

#include "icot/cotrain.hpp"
#include "icot/io.hpp"
#include "icot/log.hpp"
#include "icot/metrics.hpp"
#include "icot/oodgate.hpp"

#include <nlohmann/json.hpp>

#include <future>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

enum class Route : std::uint8_t { GatedUnseen, Remaining };

inline std::string to_string(Route r) { return r == Route::GatedUnseen ? "gated-unseen" : "remaining"; }

struct GzslPrediction {
    std::vector<ClassId> labels;  // one per compound row, over Y
    std::vector<Route> routes;

    [[nodiscard]] std::size_t gated() const {
        return static_cast<std::size_t>(std::count(routes.begin(), routes.end(), Route::GatedUnseen));
    }

    [[nodiscard]] std::string to_csv() const {
        std::string out = "row_index,predicted_class,route\n";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            out += std::to_string(i) + "," + std::to_string(labels[i]) + "," + to_string(routes[i]) + "\n";
        }
        return out;
    }
};

struct GzslScores {
    double unseen = 0.0;  // U
    double seen = 0.0;    // S
    double h = 0.0;

    [[nodiscard]] nlohmann::json to_json() const { return {{"U", unseen}, {"S", seen}, {"H", h}}; }
};

/// U over true-unseen rows, S over true-seen rows, both against labels over Y.
inline GzslScores evaluate_gzsl(std::span<const ClassId> preds, std::span<const ClassId> truths,
                                const ClassSpace& space) {
    if (preds.size() != truths.size()) throw std::invalid_argument("evaluate_gzsl: length mismatch");
    std::vector<ClassId> pu, tu, ps, ts;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (space.is_unseen(truths[i])) {
            pu.push_back(preds[i]);
            tu.push_back(truths[i]);
        } else {
            ps.push_back(preds[i]);
            ts.push_back(truths[i]);
        }
    }
    GzslScores s;
    s.unseen = per_class_acc(pu, tu, space.unseen).mean;
    s.seen = per_class_acc(ps, ts, space.seen).mean;
    s.h = harmonic_mean(s.seen, s.unseen);
    return s;
}

struct GzslConfig {
    CotrainOptions cotrain;
    OodConfig ood;
    double gate_fnr = 0.05;
    double holdout_fraction = 0.2;    // seen-train rows reserved for gate calibration
    bool gzsl_on_all_rows = false;    // setting 2: train ICoT-GZSL on every compound row
};

namespace gzsl_detail {

/// Per-class split of `seen` into fit and calibration parts.
inline std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& seen, double fraction,
                                                               std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must lie in (0, 1)");
    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < seen.size(); ++i) by_class[seen.labels[i]].push_back(i);
    Rng rng = make_rng(seed, "gzsl/holdout");
    std::vector<std::size_t> fit, held;
    for (auto& [c, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        auto n_held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size())));
        if (rows.size() > 1) n_held = std::clamp<std::size_t>(n_held, 1, rows.size() - 1);
        else n_held = 0;
        held.insert(held.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_held));
        fit.insert(fit.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_held), rows.end());
    }
    std::sort(fit.begin(), fit.end());
    std::sort(held.begin(), held.end());
    auto take = [&](const std::vector<std::size_t>& idx) {
        std::vector<ClassId> labels;
        for (std::size_t i : idx) labels.push_back(seen.labels[i]);
        return LabeledDataset::seen_real(gather_rows(seen.features, idx), std::move(labels));
    };
    if (held.empty()) return {seen, seen};
    return {take(fit), take(held)};
}

/// Rows whose score exceeds the threshold calibrated on held-out seen rows.
inline std::vector<Route> gate_rows(const OodGate& gate, const Matrix& held_out_seen, const Matrix& pool,
                                    double fnr) {
    const auto calib = gate.score(held_out_seen);
    const double theta = calibrate_threshold(calib, fnr);
    const auto scores = gate.score(pool);
    std::vector<Route> routes(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) routes[i] = scores[i] > theta ? Route::GatedUnseen : Route::Remaining;
    return routes;
}

inline std::vector<std::size_t> rows_with(const std::vector<Route>& routes, Route r) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < routes.size(); ++i) {
        if (routes[i] == r) out.push_back(i);
    }
    return out;
}

inline std::vector<ClassId> pick(const std::vector<ClassId>& v, std::span<const std::size_t> rows) {
    std::vector<ClassId> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(v.at(r));
    return out;
}

/// Fused prediction of already-trained learners over `classes`.
inline std::vector<ClassId> fused_labels(const CotrainResult& run, const Matrix& x, std::span<const ClassId> classes,
                                         const FusionWeights& fusion) {
    std::vector<Predictions> preds;
    for (const auto& l : run.learners) preds.push_back(predict(*l, x, classes));
    return fuse_predictions(preds, fusion);
}

template <class A, class B>
void run_branches(std::size_t threads, A&& first, B&& second) {
    if (threads > 1) {
        auto f = std::async(std::launch::async, std::forward<A>(first));
        second();
        f.get();
    } else {
        first();
        second();
    }
}

}  // namespace gzsl_detail

/// Setting 1: the test-unseen pool is available separately. The detector is
/// trained with the real unseen pool as its unseen term; gated compound rows
/// take labels from ICoT-ZSL trained on that pool, the rest from a seen-class
/// softmax classifier.
inline GzslPrediction two_stage_ood_run(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                        const UnlabeledPool& test_unseen_pool, const UnlabeledPool& compound_pool,
                                        const SemanticTable& semantics, const ClassSpace& space,
                                        const GzslConfig& config) {
    const std::uint64_t seed = config.cotrain.seed;
    auto [fit, held] = gzsl_detail::holdout_split(seen, config.holdout_fraction, seed);
    SimulatedUnseenSet real{std::vector<std::size_t>(test_unseen_pool.size()), "real-unseen"};
    std::iota(real.rows.begin(), real.rows.end(), std::size_t{0});
    OodGate gate{OodMethod::Semantic,
                 train_ood_detector(fit, real, test_unseen_pool, derive_seed(seed, "ood/detector", 1), config.ood),
                 real.size(), false};

    GzslPrediction out;
    out.routes = gzsl_detail::gate_rows(gate, held.features, compound_pool.features, config.gate_fnr);
    out.labels.assign(compound_pool.size(), 0);
    const auto gated = gzsl_detail::rows_with(out.routes, Route::GatedUnseen);
    const auto remaining = gzsl_detail::rows_with(out.routes, Route::Remaining);
    if (gated.empty()) warn("two_stage_ood_run: no rows gated as unseen; routing every row to the seen classifier");

    gzsl_detail::run_branches(
        config.cotrain.threads,
        [&] {
            if (gated.empty()) return;
            const CotrainResult zsl = icot_zsl_run(learners, seen, test_unseen_pool, semantics, space, config.cotrain);
            const auto labels = gzsl_detail::fused_labels(zsl, gather_rows(compound_pool.features, gated),
                                                          space.unseen, config.cotrain.fusion);
            for (std::size_t i = 0; i < gated.size(); ++i) out.labels[gated[i]] = labels[i];
        },
        [&] {
            if (remaining.empty()) return;
            const OodDetector clf = train_base_detector(seen, derive_seed(seed, "gzsl/seen-classifier", 0), config.ood);
            const auto labels = clf.predict(gather_rows(compound_pool.features, remaining));
            for (std::size_t i = 0; i < remaining.size(); ++i) out.labels[remaining[i]] = labels[i];
        });
    return out;
}

/// Setting 2: only the compound pool is available. Semantic-OOD gates it;
/// gated rows go to ICoT-ZSL over Y^U and remaining rows to ICoT-GZSL over Y.
inline GzslPrediction two_stage_sod_run(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                        const UnlabeledPool& compound_pool, const SemanticTable& semantics,
                                        const ClassSpace& space, const GzslConfig& config) {
    const std::uint64_t seed = config.cotrain.seed;
    GzslPrediction out;
    out.labels.assign(compound_pool.size(), 0);
    out.routes.assign(compound_pool.size(), Route::Remaining);

    auto [fit, held] = gzsl_detail::holdout_split(seen, config.holdout_fraction, seed);
    const auto sim = select_simulated_semantic(fit, compound_pool, semantics, space,
                                               derive_seed(seed, "ood/semantic", 0), config.ood);
    if (sim.size() > 0) {
        const OodGate gate{OodMethod::Semantic,
                           train_ood_detector(fit, sim, compound_pool, derive_seed(seed, "ood/detector", 0), config.ood),
                           sim.size(), false};
        out.routes = gzsl_detail::gate_rows(gate, held.features, compound_pool.features, config.gate_fnr);
    }
    const auto gated = gzsl_detail::rows_with(out.routes, Route::GatedUnseen);
    const auto remaining = gzsl_detail::rows_with(out.routes, Route::Remaining);

    gzsl_detail::run_branches(
        config.cotrain.threads,
        [&] {
            if (gated.empty()) return;
            const auto r = icot_zsl_run(learners, seen, compound_pool.subset(gated), semantics, space, config.cotrain);
            for (std::size_t i = 0; i < gated.size(); ++i) out.labels[gated[i]] = r.labels[i];
        },
        [&] {
            if (remaining.empty()) return;
            if (config.gzsl_on_all_rows) {
                const auto r = icot_gzsl_run(learners, seen, compound_pool, semantics, space, config.cotrain);
                for (std::size_t row : remaining) out.labels[row] = r.labels[row];
            } else {
                const auto r =
                    icot_gzsl_run(learners, seen, compound_pool.subset(remaining), semantics, space, config.cotrain);
                for (std::size_t i = 0; i < remaining.size(); ++i) out.labels[remaining[i]] = r.labels[i];
            }
        });
    return out;
}

/// Plain ICoT-GZSL wrapped as a prediction with every row `Remaining`.
inline GzslPrediction plain_gzsl_run(std::span<const LearnerSpec> learners, const LabeledDataset& seen,
                                     const UnlabeledPool& compound_pool, const SemanticTable& semantics,
                                     const ClassSpace& space, const GzslConfig& config,
                                     const PoolTruth* truth = nullptr, std::vector<IterationRecord>* history = nullptr) {
    auto r = icot_gzsl_run(learners, seen, compound_pool, semantics, space, config.cotrain, truth);
    if (history != nullptr) *history = std::move(r.history);
    return {std::move(r.labels), std::vector<Route>(compound_pool.size(), Route::Remaining)};
}

}  // namespace icot
