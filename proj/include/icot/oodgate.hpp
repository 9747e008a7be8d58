#pragma once

// Seen/unseen gate: the entropy-scored OOD detector trained with a KL-to-uniform
// term on simulated unseen rows, the two ways of simulating those rows
// (semantic-guided and lowest-confidence), the max-softmax baseline and
// TNR@FNR evaluation.

#include "icot/datamodel.hpp"
#include "icot/io.hpp"
#include "icot/log.hpp"
#include "icot/nn.hpp"
#include "icot/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

struct OodConfig {
    int epochs = 50;
    double lr = 1e-3;
    std::size_t batch = 256;
    std::size_t hidden = 1600;
    double margin = 0.0;  // Semantic-OOD: required p(best unseen) - p(best seen)
};

/// Softmax classifier over the seen classes; its output entropy is the OOD score.
class OodDetector {
  public:
    OodDetector(DenseNet net, std::vector<ClassId> seen) : net_(std::move(net)), seen_(std::move(seen)) {
        if (net_.outputs() != seen_.size()) throw std::invalid_argument("OodDetector: output width != |seen classes|");
    }

    [[nodiscard]] const DenseNet& net() const { return net_; }
    [[nodiscard]] const std::vector<ClassId>& classes() const { return seen_; }
    [[nodiscard]] Matrix probs(const Matrix& x) const { return softmax_rows(net_.forward(x)); }

    [[nodiscard]] std::vector<ClassId> predict(const Matrix& x) const {
        const Matrix p = probs(x);
        std::vector<ClassId> out(static_cast<std::size_t>(p.rows()));
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            Eigen::Index best = 0;
            p.row(r).maxCoeff(&best);
            out[static_cast<std::size_t>(r)] = seen_[static_cast<std::size_t>(best)];
        }
        return out;
    }

  private:
    DenseNet net_;
    std::vector<ClassId> seen_;
};

/// Shannon entropy of each softmax row; higher = more OOD.
inline std::vector<double> ood_score(const OodDetector& detector, const Matrix& x) {
    const Matrix p = detector.probs(x);
    std::vector<double> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = entropy(p.row(r).transpose());
    return out;
}

/// 1 - max softmax probability per row; higher = more OOD.
inline std::vector<double> max_softmax_score(const Matrix& probs) {
    std::vector<double> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) out[static_cast<std::size_t>(r)] = 1.0 - probs.row(r).maxCoeff();
    return out;
}

inline std::vector<double> max_softmax_score(const OodDetector& detector, const Matrix& x) {
    return max_softmax_score(detector.probs(x));
}

namespace ood_detail {

inline std::vector<std::size_t> seen_positions(const LabeledDataset& seen, std::vector<ClassId>& classes) {
    classes = seen.classes();
    std::vector<std::size_t> pos(seen.size());
    for (std::size_t i = 0; i < seen.size(); ++i) {
        pos[i] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), seen.labels[i]) -
                                          classes.begin());
    }
    return pos;
}

}  // namespace ood_detail

/// Cross-entropy on a seen batch plus KL(softmax || uniform) on a simulated
/// unseen batch, weighted 1:1. Either batch may be empty.
inline double detector_loss(const DenseNet& net, std::span<const Matrix> params, const Matrix& x_seen,
                            std::span<const std::size_t> targets, const Matrix& x_sim, std::vector<Matrix>* grads) {
    double loss = 0.0;
    if (grads != nullptr) {
        grads->clear();
        for (const auto& p : params) grads->push_back(Matrix::Zero(p.rows(), p.cols()));
    }
    auto accumulate = [&](const Matrix& x, auto&& head) {
        DenseNet::Cache cache;
        const Matrix logits = net.forward_with(params, x, grads != nullptr ? &cache : nullptr);
        Matrix d_logits;
        loss += head(logits, d_logits);
        if (grads != nullptr) {
            const auto g = net.backward_with(params, cache, d_logits);
            for (std::size_t t = 0; t < g.size(); ++t) (*grads)[t] += g[t];
        }
    };
    if (x_seen.rows() > 0) {
        accumulate(x_seen, [&](const Matrix& l, Matrix& d) { return softmax_xent(l, targets, d); });
    }
    if (x_sim.rows() > 0) {
        accumulate(x_sim, [](const Matrix& l, Matrix& d) { return softmax_kl_uniform(l, d); });
    }
    return loss;
}

/// Cross-entropy of softmax(<F(x), e_y>) over the class attribute rows `attrs`.
inline double semantic_loss(const DenseNet& net, std::span<const Matrix> params, const Matrix& x,
                            std::span<const std::size_t> targets, const Matrix& attrs, std::vector<Matrix>* grads) {
    DenseNet::Cache cache;
    const Matrix emb = net.forward_with(params, x, grads != nullptr ? &cache : nullptr);
    const Matrix logits = emb * attrs.transpose();
    Matrix d_logits;
    const double loss = softmax_xent(logits, targets, d_logits);
    if (grads != nullptr) *grads = net.backward_with(params, cache, d_logits * attrs);
    return loss;
}

/// Plain cross-entropy detector over the seen classes.
inline OodDetector train_base_detector(const LabeledDataset& seen, std::uint64_t seed, const OodConfig& config = {}) {
    if (seen.size() == 0) throw std::invalid_argument("train_base_detector: empty seen set");
    std::vector<ClassId> classes;
    const auto pos = ood_detail::seen_positions(seen, classes);
    Rng rng(seed);
    DenseNet net(static_cast<std::size_t>(seen.features.cols()), config.hidden, classes.size(), rng);
    const Matrix empty(0, seen.features.cols());
    train_minibatch(net.params(), seen.size(), {config.epochs, config.batch, config.lr}, rng,
                    [&](std::span<const std::size_t> batch) {
                        std::vector<std::size_t> t(batch.size());
                        for (std::size_t i = 0; i < batch.size(); ++i) t[i] = pos[batch[i]];
                        BatchResult r;
                        r.loss = detector_loss(net, net.params(), gather_rows(seen.features, batch), t, empty,
                                               &r.grads);
                        return r;
                    });
    return {std::move(net), std::move(classes)};
}

/// Pool rows treated as unseen when training the detector.
struct SimulatedUnseenSet {
    std::vector<std::size_t> rows;  // sorted, unique pool indices
    std::string method;

    [[nodiscard]] std::size_t size() const { return rows.size(); }
};

/// Trains a seen-class embedding network with dot-product logits against
/// seen attributes, then keeps pool rows whose argmax over all classes is unseen.
inline SimulatedUnseenSet select_simulated_semantic(const LabeledDataset& seen, const UnlabeledPool& pool,
                                                    const SemanticTable& semantics, const ClassSpace& space,
                                                    std::uint64_t seed, const OodConfig& config = {}) {
    if (seen.size() == 0) throw std::invalid_argument("select_simulated_semantic: empty seen set");
    for (ClassId c : space.all()) {
        if (!semantics.has(c)) {
            throw std::invalid_argument("select_simulated_semantic: missing semantic vector for class " +
                                        std::to_string(c));
        }
    }
    std::vector<ClassId> classes;
    const auto pos = ood_detail::seen_positions(seen, classes);
    const Matrix seen_attrs = semantics.rows(classes);
    Rng rng(seed);
    DenseNet net(static_cast<std::size_t>(seen.features.cols()), config.hidden, semantics.dim(), rng);
    train_minibatch(net.params(), seen.size(), {config.epochs, config.batch, config.lr}, rng,
                    [&](std::span<const std::size_t> batch) {
                        std::vector<std::size_t> t(batch.size());
                        for (std::size_t i = 0; i < batch.size(); ++i) t[i] = pos[batch[i]];
                        BatchResult r;
                        r.loss = semantic_loss(net, net.params(), gather_rows(seen.features, batch), t, seen_attrs,
                                               &r.grads);
                        return r;
                    });

    SimulatedUnseenSet out{{}, "semantic"};
    if (pool.size() == 0) return out;
    const std::vector<ClassId> all = space.all();
    const Matrix p = softmax_rows(net.forward(pool.features) * semantics.rows(all).transpose());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double best_seen = -1.0;
        double best_unseen = -1.0;
        for (std::size_t j = 0; j < all.size(); ++j) {
            double& slot = space.is_unseen(all[j]) ? best_unseen : best_seen;
            slot = std::max(slot, p(r, static_cast<Eigen::Index>(j)));
        }
        if (best_unseen - best_seen > config.margin) out.rows.push_back(static_cast<std::size_t>(r));
    }
    return out;
}

/// The L pool rows with the lowest max-softmax confidence; ties by row index.
inline SimulatedUnseenSet select_simulated_iter(const OodDetector& detector, const UnlabeledPool& pool, std::size_t l) {
    if (l < 1 || l > pool.size()) {
        throw std::invalid_argument("select_simulated_iter: L=" + std::to_string(l) + " outside [1, " +
                                    std::to_string(pool.size()) + "]");
    }
    const Matrix p = detector.probs(pool.features);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return p.row(static_cast<Eigen::Index>(a)).maxCoeff() < p.row(static_cast<Eigen::Index>(b)).maxCoeff();
    });
    order.resize(l);
    std::sort(order.begin(), order.end());
    return {std::move(order), "iter"};
}

/// Default Iter-OOD L: 30% of the pool, at least one row.
inline std::size_t default_iter_l(std::size_t pool_size) { return std::max<std::size_t>(1, pool_size * 3 / 10); }

/// Seen batches drive the epoch; each is paired with an equally sized batch
/// drawn cyclically from a shuffled order of the simulated rows.
inline OodDetector train_ood_detector(const LabeledDataset& seen, const SimulatedUnseenSet& simulated,
                                      const UnlabeledPool& pool, std::uint64_t seed, const OodConfig& config = {}) {
    if (simulated.size() == 0) {
        throw std::invalid_argument(
            "train_ood_detector: empty simulated unseen set; fall back to the max-softmax baseline");
    }
    if (seen.size() == 0) throw std::invalid_argument("train_ood_detector: empty seen set");
    for (std::size_t r : simulated.rows) {
        if (r >= pool.size()) throw std::out_of_range("train_ood_detector: simulated row outside the pool");
    }
    std::vector<ClassId> classes;
    const auto pos = ood_detail::seen_positions(seen, classes);
    const Matrix sim = gather_rows(pool.features, simulated.rows);
    Rng rng(seed);
    DenseNet net(static_cast<std::size_t>(seen.features.cols()), config.hidden, classes.size(), rng);
    Rng sim_rng = make_rng(seed, "ood/simulated");
    std::vector<std::size_t> sim_order(simulated.size());
    std::iota(sim_order.begin(), sim_order.end(), std::size_t{0});
    std::shuffle(sim_order.begin(), sim_order.end(), sim_rng);
    std::size_t cursor = 0;
    train_minibatch(net.params(), seen.size(), {config.epochs, config.batch, config.lr}, rng,
                    [&](std::span<const std::size_t> batch) {
                        std::vector<std::size_t> t(batch.size());
                        for (std::size_t i = 0; i < batch.size(); ++i) t[i] = pos[batch[i]];
                        std::vector<std::size_t> sb(batch.size());
                        for (auto& s : sb) {
                            if (cursor == sim_order.size()) {
                                std::shuffle(sim_order.begin(), sim_order.end(), sim_rng);
                                cursor = 0;
                            }
                            s = sim_order[cursor++];
                        }
                        BatchResult r;
                        r.loss = detector_loss(net, net.params(), gather_rows(seen.features, batch), t,
                                               gather_rows(sim, sb), &r.grads);
                        return r;
                    });
    OodDetector det(std::move(net), std::move(classes));
    const auto h_sim = ood_score(det, sim);
    const auto h_seen = ood_score(det, seen.features);
    const double gap = std::accumulate(h_sim.begin(), h_sim.end(), 0.0) / static_cast<double>(h_sim.size()) -
                       std::accumulate(h_seen.begin(), h_seen.end(), 0.0) / static_cast<double>(h_seen.size());
    if (!(gap > 0.0)) {
        warn("train_ood_detector: simulated rows are not more uncertain than seen rows (entropy gap " +
             std::to_string(gap) + ")");
    }
    return det;
}

// ---------------------------------------------------------------- TNR@FNR

inline const std::vector<double>& default_fnr_grid() {
    static const std::vector<double> grid{0.01, 0.03, 0.05, 0.07, 0.09, 0.11, 0.13, 0.15};
    return grid;
}

/// Smallest seen score s such that at most a fraction f of seen scores exceed s.
inline double calibrate_threshold(std::span<const double> seen_scores, double f) {
    if (seen_scores.empty()) throw std::invalid_argument("calibrate_threshold: empty seen scores");
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("calibrate_threshold: FNR target must lie in (0, 1)");
    std::vector<double> s(seen_scores.begin(), seen_scores.end());
    std::sort(s.begin(), s.end());
    const auto n = s.size();
    const auto allowed = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
        const auto above = static_cast<std::size_t>(s.end() - std::upper_bound(s.begin(), s.end(), s[i]));
        if (above <= allowed) return s[i];
    }
    return s.back();
}

struct OodPoint {
    double fnr_target = 0.0;
    double threshold = 0.0;
    double tnr = 0.0;
};

struct OodCurve {
    std::vector<OodPoint> points;
    double average_tnr = 0.0;

    [[nodiscard]] std::string to_csv() const {
        std::string out = "fnr_target,threshold,tnr\n";
        for (const auto& p : points) {
            out += format_double(p.fnr_target) + "," + format_double(p.threshold) + "," + format_double(p.tnr) + "\n";
        }
        return out;
    }
};

inline OodCurve tnr_at_fnr(std::span<const double> scores_seen, std::span<const double> scores_unseen,
                           std::span<const double> fnr_targets) {
    if (scores_seen.empty() || scores_unseen.empty()) throw std::invalid_argument("tnr_at_fnr: empty score list");
    if (fnr_targets.empty()) throw std::invalid_argument("tnr_at_fnr: no FNR targets");
    for (std::size_t i = 1; i < fnr_targets.size(); ++i) {
        if (!(fnr_targets[i] > fnr_targets[i - 1])) {
            throw std::invalid_argument("tnr_at_fnr: FNR targets must be strictly increasing");
        }
    }
    OodCurve curve;
    for (double f : fnr_targets) {
        const double theta = calibrate_threshold(scores_seen, f);
        const auto hits = std::count_if(scores_unseen.begin(), scores_unseen.end(), [&](double s) { return s > theta; });
        curve.points.push_back({f, theta, static_cast<double>(hits) / static_cast<double>(scores_unseen.size())});
    }
    double total = 0.0;
    for (const auto& p : curve.points) total += p.tnr;
    curve.average_tnr = total / static_cast<double>(curve.points.size());
    return curve;
}

inline OodCurve tnr_at_fnr(std::span<const double> scores_seen, std::span<const double> scores_unseen) {
    return tnr_at_fnr(scores_seen, scores_unseen, default_fnr_grid());
}

// ---------------------------------------------------------------- methods

enum class OodMethod { Semantic, Iter, MaxSoftmax };

inline std::string to_string(OodMethod m) {
    switch (m) {
        case OodMethod::Semantic: return "semantic";
        case OodMethod::Iter: return "iter";
        case OodMethod::MaxSoftmax: return "max-softmax";
    }
    return "?";
}

inline OodMethod parse_ood_method(const std::string& s) {
    if (s == "semantic") return OodMethod::Semantic;
    if (s == "iter") return OodMethod::Iter;
    if (s == "max-softmax") return OodMethod::MaxSoftmax;
    throw std::invalid_argument("unknown OOD method \"" + s + "\" (expected semantic|iter|max-softmax)");
}

/// A trained gate plus how it was obtained. Scores use entropy except for the
/// max-softmax baseline.
struct OodGate {
    OodMethod method = OodMethod::Semantic;
    OodDetector detector;
    std::size_t simulated_size = 0;
    bool fallback = false;  // Semantic-OOD selected nothing; baseline detector used

    [[nodiscard]] std::vector<double> score(const Matrix& x) const {
        return method == OodMethod::MaxSoftmax || fallback ? max_softmax_score(detector, x) : ood_score(detector, x);
    }
};

/// Builds the gate for `method` from seen data and an unlabeled pool.
/// `iter_l` = 0 selects the default L.
inline OodGate fit_ood_gate(OodMethod method, const LabeledDataset& seen, const UnlabeledPool& pool,
                            const SemanticTable& semantics, const ClassSpace& space, std::uint64_t seed,
                            const OodConfig& config = {}, std::size_t iter_l = 0) {
    switch (method) {
        case OodMethod::MaxSoftmax:
            return {method, train_base_detector(seen, derive_seed(seed, "ood/base", 0), config), 0, false};
        case OodMethod::Iter: {
            OodDetector base = train_base_detector(seen, derive_seed(seed, "ood/base", 0), config);
            const auto sim = select_simulated_iter(base, pool, iter_l == 0 ? default_iter_l(pool.size()) : iter_l);
            return {method, train_ood_detector(seen, sim, pool, derive_seed(seed, "ood/detector", 0), config),
                    sim.size(), false};
        }
        case OodMethod::Semantic: {
            const auto sim =
                select_simulated_semantic(seen, pool, semantics, space, derive_seed(seed, "ood/semantic", 0), config);
            if (sim.size() == 0) {
                warn("Semantic-OOD selected no rows; using the max-softmax baseline detector");
                return {method, train_base_detector(seen, derive_seed(seed, "ood/base", 0), config), 0, true};
            }
            return {method, train_ood_detector(seen, sim, pool, derive_seed(seed, "ood/detector", 0), config),
                    sim.size(), false};
        }
    }
    throw std::logic_error("fit_ood_gate: unknown method");
}

inline nlohmann::json ood_summary(const OodGate& gate, const OodCurve& curve) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : curve.points) pts.push_back({{"fnr_target", p.fnr_target}, {"threshold", p.threshold}, {"tnr", p.tnr}});
    return {{"method", to_string(gate.method)},
            {"average_tnr", curve.average_tnr},
            {"simulated_unseen_size", gate.simulated_size},
            {"fallback_to_max_softmax", gate.fallback},
            {"curve", pts}};
}

}  // namespace icot
