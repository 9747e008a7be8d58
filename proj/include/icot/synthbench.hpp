#pragma once

// Seeded synthetic zero-shot benchmarks. Class attributes live in [0,1]^q;
// a hidden orthonormal map (optionally squashed by tanh) turns attributes
// into class means; samples are means plus isotropic Gaussian noise. Unseen
// attributes are jittered convex combinations of 2-3 seen ones, so transfer
// is possible but the squashing makes linear interpolation biased.

#include "icot/datamodel.hpp"
#include "icot/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

struct SynthSpec {
    std::size_t seen_classes = 10;
    std::size_t unseen_classes = 4;
    std::size_t attr_dim = 16;
    std::size_t feature_dim = 64;
    std::size_t train_per_class = 60;
    std::size_t test_per_seen_class = 30;
    std::size_t test_per_unseen_class = 30;
    double noise = 1.0;
    bool nonlinear = true;
    double sharing = 0.3;
    std::uint64_t seed = 1;

    bool operator==(const SynthSpec&) const = default;

    void validate() const {
        if (seen_classes < 1 || unseen_classes < 1 || attr_dim < 1 || feature_dim < 1 ||
            train_per_class < 1 || test_per_seen_class < 1 || test_per_unseen_class < 1) {
            throw std::invalid_argument("SynthSpec: all counts must be >= 1");
        }
        if (!(noise > 0.0) || !std::isfinite(noise)) {
            throw std::invalid_argument("SynthSpec: noise must be > 0");
        }
        if (feature_dim < attr_dim) {
            throw std::invalid_argument("SynthSpec: feature_dim must be >= attr_dim");
        }
        if (!(sharing >= 0.0 && sharing < 1.0)) {
            throw std::invalid_argument("SynthSpec: sharing must lie in [0, 1)");
        }
    }
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = {{"seen_classes", s.seen_classes},
         {"unseen_classes", s.unseen_classes},
         {"attr_dim", s.attr_dim},
         {"feature_dim", s.feature_dim},
         {"train_per_class", s.train_per_class},
         {"test_per_seen_class", s.test_per_seen_class},
         {"test_per_unseen_class", s.test_per_unseen_class},
         {"noise", s.noise},
         {"nonlinear", s.nonlinear},
         {"sharing", s.sharing},
         {"seed", s.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    static const std::array<const char*, 11> known{"seen_classes", "unseen_classes", "attr_dim", "feature_dim",
                                                   "train_per_class", "test_per_seen_class",
                                                   "test_per_unseen_class", "noise", "nonlinear", "sharing", "seed"};
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
            throw std::invalid_argument("SynthSpec: unknown key \"" + key + "\"");
        }
    }
    auto take = [&j](const char* key, auto& slot) {
        if (j.contains(key)) j.at(key).get_to(slot);
    };
    take("seen_classes", s.seen_classes);
    take("unseen_classes", s.unseen_classes);
    take("attr_dim", s.attr_dim);
    take("feature_dim", s.feature_dim);
    take("train_per_class", s.train_per_class);
    take("test_per_seen_class", s.test_per_seen_class);
    take("test_per_unseen_class", s.test_per_unseen_class);
    take("noise", s.noise);
    take("nonlinear", s.nonlinear);
    take("sharing", s.sharing);
    take("seed", s.seed);
}

struct SynthOutput {
    ZslData data;
    Matrix class_means;  // K x d ground truth, row = class id
};

namespace synth_detail {

inline constexpr double kUnseenJitter = 0.15;
// Pre-activation scale; at this gain tanh runs mostly saturated.
inline constexpr double kGain = 5.0;

inline Matrix hidden_map(std::size_t d, std::size_t q, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(q));
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q_thin = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    return q_thin;
}

}  // namespace synth_detail

/// Class ids: 0..S-1 seen, S..S+U-1 unseen. Rows are shuffled.
inline SynthOutput generate(const SynthSpec& spec) {
    spec.validate();
    const auto s = spec.seen_classes;
    const auto u = spec.unseen_classes;
    const auto k = s + u;
    const auto q = static_cast<Eigen::Index>(spec.attr_dim);
    const auto d = static_cast<Eigen::Index>(spec.feature_dim);

    Rng rng = make_rng(spec.seed, "synth/attributes");
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Matrix attrs(static_cast<Eigen::Index>(k), q);
    RowVector shared(q);
    for (Eigen::Index j = 0; j < q; ++j) shared[j] = unit(rng);
    for (std::size_t c = 0; c < s; ++c) {
        for (Eigen::Index j = 0; j < q; ++j) {
            attrs(static_cast<Eigen::Index>(c), j) = (1.0 - spec.sharing) * unit(rng) + spec.sharing * shared[j];
        }
    }
    std::uniform_real_distribution<double> jitter(-synth_detail::kUnseenJitter, synth_detail::kUnseenJitter);
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t c = s; c < k; ++c) {
        const std::size_t parents = std::min<std::size_t>(s, 2 + (unit(rng) < 0.5 ? 1 : 0));
        std::vector<std::size_t> ids(s);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::shuffle(ids.begin(), ids.end(), rng);
        std::vector<double> w(parents);
        for (auto& x : w) x = expo(rng);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        RowVector a = RowVector::Zero(q);
        for (std::size_t p = 0; p < parents; ++p) {
            a += (w[p] / total) * attrs.row(static_cast<Eigen::Index>(ids[p]));
        }
        for (Eigen::Index j = 0; j < q; ++j) a[j] = std::clamp(a[j] + jitter(rng), 0.0, 1.0);
        attrs.row(static_cast<Eigen::Index>(c)) = a;
    }

    Rng map_rng = make_rng(spec.seed, "synth/map");
    const Matrix g = synth_detail::hidden_map(spec.feature_dim, spec.attr_dim, map_rng);
    const double scale = synth_detail::kGain * std::sqrt(static_cast<double>(d));
    Matrix means = ((attrs.array() - 0.5).matrix() * g.transpose()) * scale;
    if (spec.nonlinear) {
        means = means.array().tanh().matrix();
    } else {
        means /= synth_detail::kGain;
    }

    struct RowPlan {
        ClassId label;
        int part;  // 0 train, 1 test-seen, 2 test-unseen
    };
    std::vector<RowPlan> plan;
    for (std::size_t c = 0; c < s; ++c) {
        for (std::size_t i = 0; i < spec.train_per_class; ++i) plan.push_back({static_cast<ClassId>(c), 0});
        for (std::size_t i = 0; i < spec.test_per_seen_class; ++i) plan.push_back({static_cast<ClassId>(c), 1});
    }
    for (std::size_t c = s; c < k; ++c) {
        for (std::size_t i = 0; i < spec.test_per_unseen_class; ++i) plan.push_back({static_cast<ClassId>(c), 2});
    }
    Rng order_rng = make_rng(spec.seed, "synth/order");
    std::shuffle(plan.begin(), plan.end(), order_rng);

    Rng noise_rng = make_rng(spec.seed, "synth/noise");
    std::normal_distribution<double> normal(0.0, spec.noise);
    SynthOutput out;
    ZslData& data = out.data;
    data.features.resize(static_cast<Eigen::Index>(plan.size()), d);
    data.labels.reserve(plan.size());
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        for (Eigen::Index j = 0; j < d; ++j) {
            // Stored at f32 precision so files round-trip exactly.
            data.features(row, j) =
                static_cast<double>(static_cast<float>(means(plan[r].label, j) + normal(noise_rng)));
        }
        data.labels.push_back(plan[r].label);
        (plan[r].part == 0 ? data.split.train_idx
                           : plan[r].part == 1 ? data.split.test_seen_idx : data.split.test_unseen_idx)
            .push_back(r);
    }
    data.split.name = "synthetic";
    for (std::size_t c = 0; c < s; ++c) data.space.seen.push_back(static_cast<ClassId>(c));
    for (std::size_t c = s; c < k; ++c) data.space.unseen.push_back(static_cast<ClassId>(c));
    data.semantics = SemanticTable(std::move(attrs));
    for (std::size_t c = 0; c < k; ++c) {
        data.names[static_cast<ClassId>(c)] = (c < s ? "seen_" : "unseen_") + std::to_string(c);
    }
    out.class_means = std::move(means);
    return out;
}

/// Noise levels the benchmark calibration sweeps over.
inline constexpr std::array<double, 8> kNoiseGrid{1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4};

/// Frozen benchmark used by the acceptance suite.
inline SynthSpec reference_benchmark() {
    SynthSpec s;
    s.seen_classes = 10;
    s.unseen_classes = 4;
    s.attr_dim = 16;
    s.feature_dim = 64;
    s.train_per_class = 60;
    s.test_per_seen_class = 30;
    s.test_per_unseen_class = 30;
    s.noise = 2.0;
    s.nonlinear = true;
    s.sharing = 0.3;
    s.seed = 1;
    return s;
}

}  // namespace icot
