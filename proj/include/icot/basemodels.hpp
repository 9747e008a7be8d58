#pragma once

// Base zero-shot learners behind one contract:
//   PrototypeModel   attributes -> visual prototype MLP, distance softmax
//   GenerativeModel  ridge attribute->mean map, Gaussian feature synthesis,
//                    softmax classifier on synthetic + real rows
//   CompatModel      closed-form bilinear compatibility x^T V e_y
// Learners are immutable once trained. New architectures plug in through
// LearnerSpec (a tag plus a trainer callable).

#include "icot/datamodel.hpp"
#include "icot/io.hpp"
#include "icot/log.hpp"
#include "icot/nn.hpp"
#include "icot/numeric.hpp"
#include "icot/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace icot {

/// Class-probability rows over an explicit class list.
struct Predictions {
    std::vector<ClassId> classes;
    Matrix probs;

    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(probs.rows()); }

    /// Most probable class per row; ties go to the lowest class id.
    [[nodiscard]] std::vector<ClassId> argmax() const {
        std::vector<ClassId> out(rows());
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < probs.cols(); ++c) {
                const double v = probs(r, c);
                const double b = probs(r, best);
                if (v > b || (v == b && classes[static_cast<std::size_t>(c)] < classes[static_cast<std::size_t>(best)])) {
                    best = c;
                }
            }
            out[static_cast<std::size_t>(r)] = classes[static_cast<std::size_t>(best)];
        }
        return out;
    }

    /// Probabilities restricted to `subset` and renormalized per row.
    [[nodiscard]] Predictions restricted(std::span<const ClassId> subset) const {
        Predictions out{{subset.begin(), subset.end()}, Matrix(probs.rows(), static_cast<Eigen::Index>(subset.size()))};
        for (std::size_t j = 0; j < subset.size(); ++j) {
            const auto it = std::find(classes.begin(), classes.end(), subset[j]);
            if (it == classes.end()) {
                throw std::invalid_argument("Predictions::restricted: class " + std::to_string(subset[j]) +
                                            " not predicted");
            }
            out.probs.col(static_cast<Eigen::Index>(j)) = probs.col(it - classes.begin());
        }
        for (Eigen::Index r = 0; r < out.probs.rows(); ++r) {
            const double s = out.probs.row(r).sum();
            if (s > 0.0) {
                out.probs.row(r) /= s;
            } else {
                out.probs.row(r).setConstant(1.0 / static_cast<double>(subset.size()));
            }
        }
        return out;
    }
};

struct Checkpoint {
    nlohmann::json header;
    std::vector<Matrix> tensors;
};

class BaseLearner {
  public:
    virtual ~BaseLearner() = default;
    [[nodiscard]] virtual std::string architecture() const = 0;
    /// One probability row per feature row, over `classes` in the given order.
    [[nodiscard]] virtual Predictions predict_proba(const Matrix& x, std::span<const ClassId> classes) const = 0;
    [[nodiscard]] virtual Checkpoint checkpoint() const = 0;
};

using LearnerPtr = std::shared_ptr<const BaseLearner>;

struct TrainRequest {
    const LabeledDataset& data;
    const SemanticTable& semantics;
    std::span<const ClassId> targets;  // classes the learner will be asked to predict
    std::uint64_t seed = 0;
    const BaseLearner* previous = nullptr;  // warm-start source, may be ignored
};

using Trainer = std::function<LearnerPtr(const TrainRequest&)>;

struct LearnerSpec {
    std::string tag;
    Trainer train;
};

/// Uniform prediction entry point.
inline Predictions predict(const BaseLearner& learner, const Matrix& x, std::span<const ClassId> classes) {
    if (classes.empty()) {
        throw std::invalid_argument("predict: empty class list");
    }
    return learner.predict_proba(x, classes);
}

namespace model_detail {

inline void require_classes(std::span<const ClassId> classes, const char* who) {
    if (classes.empty()) throw std::invalid_argument(std::string(who) + ": empty class list");
}

inline void require_semantics(const SemanticTable& sem, std::span<const ClassId> classes, const char* who) {
    for (ClassId c : classes) {
        if (!sem.has(c)) {
            throw std::invalid_argument(std::string(who) + ": class " + std::to_string(c) + " has no semantic vector");
        }
    }
}

inline Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double n = out.row(r).norm();
        if (n > 0.0) out.row(r) /= n;
    }
    return out;
}

/// Index of each label within `classes`; throws for labels outside it.
inline std::vector<std::size_t> class_positions(std::span<const ClassId> labels, std::span<const ClassId> classes) {
    std::map<ClassId, std::size_t> pos;
    for (std::size_t i = 0; i < classes.size(); ++i) pos[classes[i]] = i;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (ClassId l : labels) {
        const auto it = pos.find(l);
        if (it == pos.end()) throw std::invalid_argument("label " + std::to_string(l) + " outside class list");
        out.push_back(it->second);
    }
    return out;
}

inline nlohmann::json shapes_of(const std::vector<Matrix>& tensors) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& t : tensors) s.push_back({t.rows(), t.cols()});
    return s;
}

}  // namespace model_detail

// ---------------------------------------------------------------- Model A

struct PrototypeConfig {
    std::size_t hidden = 1600;
    int epochs = 5;
    double lr = 1e-3;
    std::size_t batch = 128;
    double temperature = 1.0;  // <= 0: fit as twice the per-dimension residual variance
    double l2 = 0.0;
    bool normalize = false;
};

/// Mean squared sample-to-prototype distance plus an L2 penalty on weights.
/// `class_index[i]` picks the attribute row of sample i.
inline double prototype_loss(const DenseNet& net, std::span<const Matrix> params, const Matrix& x,
                             std::span<const std::size_t> class_index, const Matrix& attrs, double l2,
                             std::vector<Matrix>* grads) {
    DenseNet::Cache cache;
    const Matrix protos = net.forward_with(params, attrs, grads != nullptr ? &cache : nullptr);
    const double inv = 1.0 / static_cast<double>(x.rows());
    Matrix d_protos = Matrix::Zero(protos.rows(), protos.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto c = static_cast<Eigen::Index>(class_index[static_cast<std::size_t>(i)]);
        const RowVector diff = protos.row(c) - x.row(i);
        loss += diff.squaredNorm();
        d_protos.row(c) += 2.0 * inv * diff;
    }
    loss *= inv;
    if (l2 > 0.0) {
        for (std::size_t t = 0; t < params.size(); t += 2) loss += l2 * params[t].squaredNorm();
    }
    if (grads != nullptr) {
        *grads = net.backward_with(params, cache, d_protos);
        if (l2 > 0.0) {
            for (std::size_t t = 0; t < params.size(); t += 2) (*grads)[t] += 2.0 * l2 * params[t];
        }
    }
    return loss;
}

class PrototypeModel final : public BaseLearner {
  public:
    PrototypeModel(DenseNet net, SemanticTable semantics, PrototypeConfig config, std::uint64_t seed,
                   std::vector<double> epoch_losses = {})
        : net_(std::move(net)), semantics_(std::move(semantics)), config_(config), seed_(seed),
          epoch_losses_(std::move(epoch_losses)) {
        if (!(config_.temperature > 0.0)) throw std::invalid_argument("PrototypeModel: temperature must be > 0");
    }

    [[nodiscard]] std::string architecture() const override { return "prototype"; }
    [[nodiscard]] const DenseNet& net() const { return net_; }
    [[nodiscard]] const PrototypeConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<double>& epoch_losses() const { return epoch_losses_; }

    [[nodiscard]] Matrix prototypes(std::span<const ClassId> classes) const {
        model_detail::require_semantics(semantics_, classes, "PrototypeModel");
        return net_.forward(semantics_.rows(classes));
    }

    /// p(y|x) = softmax_y(-||x - proto_y||^2 / temperature).
    [[nodiscard]] Predictions predict_proba(const Matrix& x, std::span<const ClassId> classes) const override {
        model_detail::require_classes(classes, "predict_prototype");
        const Matrix protos = prototypes(classes);
        const Matrix feats = config_.normalize ? model_detail::l2_normalize_rows(x) : x;
        Matrix logits(feats.rows(), protos.rows());
        for (Eigen::Index r = 0; r < feats.rows(); ++r) {
            for (Eigen::Index c = 0; c < protos.rows(); ++c) {
                logits(r, c) = -(feats.row(r) - protos.row(c)).squaredNorm() / config_.temperature;
            }
        }
        return {{classes.begin(), classes.end()}, softmax_rows(logits)};
    }

    [[nodiscard]] Checkpoint checkpoint() const override {
        Checkpoint ck;
        ck.tensors = net_.params();
        ck.tensors.push_back(semantics_.matrix());
        ck.header = {{"architecture", architecture()},
                     {"seed", seed_},
                     {"shapes", model_detail::shapes_of(ck.tensors)},
                     {"hyperparameters",
                      {{"hidden", config_.hidden},
                       {"epochs", config_.epochs},
                       {"lr", config_.lr},
                       {"batch", config_.batch},
                       {"temperature", config_.temperature},
                       {"l2", config_.l2},
                       {"normalize", config_.normalize}}},
                     {"inputs", net_.inputs()},
                     {"outputs", net_.outputs()}};
        return ck;
    }

  private:
    DenseNet net_;
    SemanticTable semantics_;
    PrototypeConfig config_;
    std::uint64_t seed_;
    std::vector<double> epoch_losses_;
};

/// Trains the prototype predictor on rows whose label is in `classes`.
inline PrototypeModel train_prototype(const LabeledDataset& data, const SemanticTable& semantics,
                                      std::span<const ClassId> classes, std::uint64_t seed,
                                      const PrototypeConfig& config, const PrototypeModel* warm = nullptr) {
    model_detail::require_classes(classes, "train_prototype");
    model_detail::require_semantics(semantics, classes, "train_prototype");
    std::vector<std::size_t> rows;
    std::vector<std::size_t> class_index;
    std::vector<std::size_t> counts(classes.size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto it = std::find(classes.begin(), classes.end(), data.labels[i]);
        if (it == classes.end()) continue;
        rows.push_back(i);
        class_index.push_back(static_cast<std::size_t>(it - classes.begin()));
        ++counts[class_index.back()];
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (counts[c] == 0) {
            throw std::invalid_argument("train_prototype: class " + std::to_string(classes[c]) + " has no training rows");
        }
    }
    Matrix x = gather_rows(data.features, rows);
    if (config.normalize) x = model_detail::l2_normalize_rows(x);
    const Matrix attrs = semantics.rows(classes);

    Rng rng(seed);
    DenseNet net(semantics.dim(), config.hidden, static_cast<std::size_t>(data.features.cols()), rng);
    if (warm != nullptr && warm->net().inputs() == net.inputs() && warm->net().hidden() == net.hidden() &&
        warm->net().outputs() == net.outputs()) {
        net = warm->net();
    }
    const TrainSchedule schedule{config.epochs, config.batch, config.lr};
    auto losses = train_minibatch(net.params(), rows.size(), schedule, rng, [&](std::span<const std::size_t> batch) {
        const Matrix xb = gather_rows(x, batch);
        std::vector<std::size_t> idx(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) idx[i] = class_index[batch[i]];
        BatchResult r;
        r.loss = prototype_loss(net, net.params(), xb, idx, attrs, config.l2, &r.grads);
        return r;
    });
    PrototypeConfig fitted = config;
    if (!(fitted.temperature > 0.0)) {
        const Matrix protos = net.forward(attrs);
        double sq = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sq += (x.row(static_cast<Eigen::Index>(i)) - protos.row(static_cast<Eigen::Index>(class_index[i]))).squaredNorm();
        }
        fitted.temperature = std::max(2.0 * sq / static_cast<double>(x.size()), 1e-6);
    }
    return PrototypeModel(std::move(net), semantics, fitted, seed, std::move(losses));
}

inline LearnerSpec prototype_learner(std::string tag, PrototypeConfig config) {
    return {std::move(tag), [config](const TrainRequest& req) -> LearnerPtr {
                const auto classes = req.data.classes();
                return std::make_shared<PrototypeModel>(train_prototype(
                    req.data, req.semantics, classes, req.seed, config,
                    dynamic_cast<const PrototypeModel*>(req.previous)));
            }};
}

// ---------------------------------------------------------------- Model B

struct GenerativeConfig {
    double lambda = 0.1;
    std::size_t n_syn = 200;
    int epochs = 30;
    double lr = 1e-3;
    std::size_t batch = 256;
    bool normalize = false;
};

class GenerativeModel final : public BaseLearner {
  public:
    GenerativeModel(Matrix map, RowVector variance, std::vector<ClassId> targets, DenseNet classifier,
                    SemanticTable semantics, GenerativeConfig config, std::uint64_t seed)
        : map_(std::move(map)), variance_(std::move(variance)), targets_(std::move(targets)),
          classifier_(std::move(classifier)), semantics_(std::move(semantics)), config_(config), seed_(seed) {
        if ((variance_.array() <= 0.0).any()) throw std::invalid_argument("GenerativeModel: variance must be > 0");
    }

    [[nodiscard]] std::string architecture() const override { return "generative"; }
    [[nodiscard]] const Matrix& map() const { return map_; }
    [[nodiscard]] const RowVector& variance() const { return variance_; }
    [[nodiscard]] const std::vector<ClassId>& targets() const { return targets_; }
    [[nodiscard]] const DenseNet& classifier() const { return classifier_; }

    /// Predicted class mean e_y W for each class.
    [[nodiscard]] Matrix class_means(std::span<const ClassId> classes) const {
        model_detail::require_semantics(semantics_, classes, "GenerativeModel");
        return semantics_.rows(classes) * map_;
    }

    /// `per_class` draws from N(e_y W, diag(variance)) for each class, class-major.
    [[nodiscard]] Matrix synthesize(std::span<const ClassId> classes, std::size_t per_class, Rng& rng) const {
        const Matrix means = class_means(classes);
        const RowVector sd = variance_.cwiseSqrt();
        std::normal_distribution<double> normal(0.0, 1.0);
        Matrix out(static_cast<Eigen::Index>(classes.size() * per_class), map_.cols());
        Eigen::Index row = 0;
        for (Eigen::Index c = 0; c < means.rows(); ++c) {
            for (std::size_t i = 0; i < per_class; ++i, ++row) {
                for (Eigen::Index j = 0; j < out.cols(); ++j) out(row, j) = means(c, j) + sd[j] * normal(rng);
            }
        }
        return out;
    }

    /// Classifier softmax restricted to `classes` (each must be a trained target).
    [[nodiscard]] Predictions predict_proba(const Matrix& x, std::span<const ClassId> classes) const override {
        model_detail::require_classes(classes, "predict_generative");
        const std::vector<std::size_t> cols = model_detail::class_positions(classes, targets_);
        const Matrix feats = config_.normalize ? model_detail::l2_normalize_rows(x) : x;
        const Matrix logits = classifier_.forward(feats);
        Matrix sub(logits.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) {
            sub.col(static_cast<Eigen::Index>(j)) = logits.col(static_cast<Eigen::Index>(cols[j]));
        }
        return {{classes.begin(), classes.end()}, softmax_rows(sub)};
    }

    [[nodiscard]] Checkpoint checkpoint() const override {
        Checkpoint ck;
        ck.tensors = {map_, Matrix(variance_)};
        for (const auto& p : classifier_.params()) ck.tensors.push_back(p);
        ck.tensors.push_back(semantics_.matrix());
        ck.header = {{"architecture", architecture()},
                     {"seed", seed_},
                     {"shapes", model_detail::shapes_of(ck.tensors)},
                     {"targets", targets_},
                     {"hyperparameters",
                      {{"lambda", config_.lambda},
                       {"n_syn", config_.n_syn},
                       {"epochs", config_.epochs},
                       {"lr", config_.lr},
                       {"batch", config_.batch},
                       {"normalize", config_.normalize}}}};
        return ck;
    }

  private:
    Matrix map_;
    RowVector variance_;
    std::vector<ClassId> targets_;
    DenseNet classifier_;
    SemanticTable semantics_;
    GenerativeConfig config_;
    std::uint64_t seed_;
};

inline constexpr double kVarianceFloor = 1e-6;

/// Fits the attribute->mean map on every labeled class, then trains a softmax
/// classifier over `targets` on synthetic draws plus the real rows of those classes.
inline GenerativeModel train_generative(const LabeledDataset& data, const SemanticTable& semantics,
                                        std::span<const ClassId> targets, std::uint64_t seed,
                                        const GenerativeConfig& config, const GenerativeModel* warm = nullptr) {
    model_detail::require_classes(targets, "train_generative");
    model_detail::require_semantics(semantics, targets, "train_generative");
    if (config.n_syn < 1) throw std::invalid_argument("train_generative: n_syn must be >= 1");
    const std::vector<ClassId> train_classes = data.classes();
    model_detail::require_semantics(semantics, train_classes, "train_generative");
    const Matrix x = config.normalize ? model_detail::l2_normalize_rows(data.features) : data.features;
    const auto d = x.cols();
    const auto k = static_cast<Eigen::Index>(train_classes.size());

    const std::vector<std::size_t> pos = model_detail::class_positions(data.labels, train_classes);
    Matrix means = Matrix::Zero(k, d);
    std::vector<double> counts(train_classes.size(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        means.row(static_cast<Eigen::Index>(pos[i])) += x.row(static_cast<Eigen::Index>(i));
        counts[pos[i]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) means.row(c) /= counts[static_cast<std::size_t>(c)];
    if (static_cast<Eigen::Index>(data.size()) <= k) {
        throw std::invalid_argument("train_generative: need at least one class with >= 2 samples for covariance");
    }

    RowVector variance = RowVector::Zero(d);
    for (std::size_t i = 0; i < data.size(); ++i) {
        variance += (x.row(static_cast<Eigen::Index>(i)) - means.row(static_cast<Eigen::Index>(pos[i]))).array().square().matrix();
    }
    variance /= static_cast<double>(static_cast<Eigen::Index>(data.size()) - k);
    if ((variance.array() < kVarianceFloor).all()) {
        warn("train_generative: residual covariance degenerate, using floor " + std::to_string(kVarianceFloor));
    }
    variance = variance.cwiseMax(kVarianceFloor);

    Matrix map = ridge_fit(semantics.rows(train_classes), means, config.lambda);

    Rng rng(seed);
    DenseNet classifier(static_cast<std::size_t>(d), 0, targets.size(), rng);
    if (warm != nullptr && warm->classifier().inputs() == classifier.inputs() &&
        warm->classifier().outputs() == classifier.outputs() && warm->targets() == std::vector<ClassId>(targets.begin(), targets.end())) {
        classifier = warm->classifier();
    }
    GenerativeModel model(std::move(map), variance, {targets.begin(), targets.end()}, classifier, semantics, config,
                          seed);

    Matrix synthetic = model.synthesize(targets, config.n_syn, rng);
    std::vector<std::size_t> y;
    y.reserve(static_cast<std::size_t>(synthetic.rows()));
    for (std::size_t c = 0; c < targets.size(); ++c) y.insert(y.end(), config.n_syn, c);
    std::vector<std::size_t> real_rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto it = std::find(targets.begin(), targets.end(), data.labels[i]);
        if (it != targets.end()) {
            real_rows.push_back(i);
            y.push_back(static_cast<std::size_t>(it - targets.begin()));
        }
    }
    Matrix train_x(synthetic.rows() + static_cast<Eigen::Index>(real_rows.size()), d);
    train_x.topRows(synthetic.rows()) = synthetic;
    train_x.bottomRows(static_cast<Eigen::Index>(real_rows.size())) = gather_rows(x, real_rows);

    const TrainSchedule schedule{config.epochs, config.batch, config.lr};
    train_minibatch(classifier.params(), y.size(), schedule, rng, [&](std::span<const std::size_t> batch) {
        DenseNet::Cache cache;
        const Matrix logits = classifier.forward(gather_rows(train_x, batch), &cache);
        std::vector<std::size_t> t(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) t[i] = y[batch[i]];
        Matrix d_logits;
        BatchResult r;
        r.loss = softmax_xent(logits, t, d_logits);
        r.grads = classifier.backward(cache, d_logits);
        return r;
    });
    return GenerativeModel(model.map(), std::move(variance), {targets.begin(), targets.end()}, std::move(classifier),
                           semantics, config, seed);
}

inline LearnerSpec generative_learner(std::string tag, GenerativeConfig config) {
    return {std::move(tag), [config](const TrainRequest& req) -> LearnerPtr {
                return std::make_shared<GenerativeModel>(train_generative(
                    req.data, req.semantics, req.targets, req.seed, config,
                    dynamic_cast<const GenerativeModel*>(req.previous)));
            }};
}

// ---------------------------------------------------------------- Model C

struct CompatConfig {
    double lambda = 1.0;
    bool normalize = false;
};

class CompatModel final : public BaseLearner {
  public:
    CompatModel(Matrix v, SemanticTable semantics, CompatConfig config)
        : v_(std::move(v)), semantics_(std::move(semantics)), config_(config) {}

    [[nodiscard]] std::string architecture() const override { return "compat"; }
    [[nodiscard]] const Matrix& v() const { return v_; }

    [[nodiscard]] Matrix scores(const Matrix& x, std::span<const ClassId> classes) const {
        model_detail::require_semantics(semantics_, classes, "CompatModel");
        const Matrix feats = config_.normalize ? model_detail::l2_normalize_rows(x) : x;
        return feats * v_ * semantics_.rows(classes).transpose();
    }

    [[nodiscard]] Predictions predict_proba(const Matrix& x, std::span<const ClassId> classes) const override {
        model_detail::require_classes(classes, "predict_compat");
        return {{classes.begin(), classes.end()}, softmax_rows(scores(x, classes))};
    }

    [[nodiscard]] Checkpoint checkpoint() const override {
        Checkpoint ck;
        ck.tensors = {v_, semantics_.matrix()};
        ck.header = {{"architecture", architecture()},
                     {"seed", 0},
                     {"shapes", model_detail::shapes_of(ck.tensors)},
                     {"hyperparameters", {{"lambda", config_.lambda}, {"normalize", config_.normalize}}}};
        return ck;
    }

  private:
    Matrix v_;
    SemanticTable semantics_;
    CompatConfig config_;
};

/// Closed-form minimizer of ||X V E^T - T||^2 + lambda ||V||^2 where T is the
/// one-hot target matrix over `classes` and E their attribute rows. The
/// stationarity condition X^T X V E^T E + lambda V = X^T T E is solved in the
/// joint eigenbasis of the two Gram matrices.
inline CompatModel train_compat(const LabeledDataset& data, const SemanticTable& semantics,
                                std::span<const ClassId> classes, const CompatConfig& config) {
    model_detail::require_classes(classes, "train_compat");
    model_detail::require_semantics(semantics, classes, "train_compat");
    if (!(config.lambda >= 0.0)) throw std::invalid_argument("train_compat: lambda must be >= 0");
    std::vector<std::size_t> rows;
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::find(classes.begin(), classes.end(), data.labels[i]) != classes.end()) {
            rows.push_back(i);
            labels.push_back(data.labels[i]);
        }
    }
    if (rows.empty()) throw std::invalid_argument("train_compat: no rows in the requested classes");
    Matrix x = gather_rows(data.features, rows);
    if (config.normalize) x = model_detail::l2_normalize_rows(x);
    const Matrix e = semantics.rows(classes);
    const auto pos = model_detail::class_positions(labels, classes);
    Matrix t = Matrix::Zero(x.rows(), e.rows());
    for (std::size_t i = 0; i < pos.size(); ++i) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pos[i])) = 1.0;

    const Eigen::MatrixXd a = x.transpose() * x;
    const Eigen::MatrixXd b = e.transpose() * e;
    const Eigen::MatrixXd c = x.transpose() * t * e;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b);
    const Eigen::MatrixXd& p = ea.eigenvectors();
    const Eigen::MatrixXd& q = eb.eigenvectors();
    Eigen::MatrixXd rhs = p.transpose() * c * q;
    const double scale = std::max(1.0, ea.eigenvalues().cwiseAbs().maxCoeff() * eb.eigenvalues().cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < rhs.rows(); ++i) {
        for (Eigen::Index j = 0; j < rhs.cols(); ++j) {
            const double denom = ea.eigenvalues()[i] * eb.eigenvalues()[j] + config.lambda;
            if (std::abs(denom) <= 1e-12 * scale) {
                throw std::domain_error("train_compat: singular system at lambda = " + std::to_string(config.lambda) +
                                        " (feature or attribute Gram matrix is rank deficient)");
            }
            rhs(i, j) /= denom;
        }
    }
    Matrix v = p * rhs * q.transpose();
    return CompatModel(std::move(v), semantics, config);
}

inline LearnerSpec compat_learner(std::string tag, CompatConfig config) {
    return {std::move(tag), [config](const TrainRequest& req) -> LearnerPtr {
                const auto classes = req.data.classes();
                return std::make_shared<CompatModel>(train_compat(req.data, req.semantics, classes, config));
            }};
}

// ---------------------------------------------------------------- checkpoints

/// Writes `<stem>.json` (header) and `<stem>.bin` (all tensors, flattened, as a
/// one-row feature file).
inline void save_checkpoint(const BaseLearner& learner, const std::filesystem::path& stem) {
    const Checkpoint ck = learner.checkpoint();
    Eigen::Index total = 0;
    for (const auto& t : ck.tensors) total += t.size();
    Matrix blob(1, total);
    Eigen::Index at = 0;
    for (const auto& t : ck.tensors) {
        std::copy(t.data(), t.data() + t.size(), blob.data() + at);
        at += t.size();
    }
    write_features(std::filesystem::path(stem.string() + ".bin"), blob);
    std::ofstream os(stem.string() + ".json");
    os << ck.header.dump(2) << '\n';
}

inline LearnerPtr load_checkpoint(const std::filesystem::path& stem) {
    std::ifstream is(stem.string() + ".json");
    if (!is) throw DatasetError(stem.string() + ".json: cannot open");
    const auto header = nlohmann::json::parse(is);
    const Matrix blob = read_features(std::filesystem::path(stem.string() + ".bin"));
    std::vector<Matrix> tensors;
    Eigen::Index at = 0;
    for (const auto& shape : header.at("shapes")) {
        const auto r = shape.at(0).get<Eigen::Index>();
        const auto c = shape.at(1).get<Eigen::Index>();
        if (at + r * c > blob.size()) throw DatasetError(stem.string() + ".bin: blob shorter than header shapes");
        Matrix t(r, c);
        std::copy(blob.data() + at, blob.data() + at + r * c, t.data());
        at += r * c;
        tensors.push_back(std::move(t));
    }
    const auto arch = header.at("architecture").get<std::string>();
    const auto& hp = header.at("hyperparameters");
    const auto seed = header.at("seed").get<std::uint64_t>();
    if (arch == "prototype") {
        PrototypeConfig cfg;
        cfg.hidden = hp.at("hidden").get<std::size_t>();
        cfg.epochs = hp.at("epochs").get<int>();
        cfg.lr = hp.at("lr").get<double>();
        cfg.batch = hp.at("batch").get<std::size_t>();
        cfg.temperature = hp.at("temperature").get<double>();
        cfg.l2 = hp.at("l2").get<double>();
        cfg.normalize = hp.at("normalize").get<bool>();
        SemanticTable sem(tensors.back());
        tensors.pop_back();
        DenseNet net(header.at("inputs").get<std::size_t>(), cfg.hidden, header.at("outputs").get<std::size_t>(),
                     std::move(tensors));
        return std::make_shared<PrototypeModel>(std::move(net), std::move(sem), cfg, seed);
    }
    if (arch == "generative") {
        GenerativeConfig cfg;
        cfg.lambda = hp.at("lambda").get<double>();
        cfg.n_syn = hp.at("n_syn").get<std::size_t>();
        cfg.epochs = hp.at("epochs").get<int>();
        cfg.lr = hp.at("lr").get<double>();
        cfg.batch = hp.at("batch").get<std::size_t>();
        cfg.normalize = hp.at("normalize").get<bool>();
        const auto targets = header.at("targets").get<std::vector<ClassId>>();
        SemanticTable sem(tensors.back());
        const Matrix map = tensors[0];
        const RowVector variance = tensors[1].row(0);
        DenseNet classifier(static_cast<std::size_t>(map.cols()), 0, targets.size(), {tensors[2], tensors[3]});
        return std::make_shared<GenerativeModel>(map, variance, targets, std::move(classifier), std::move(sem), cfg,
                                                 seed);
    }
    if (arch == "compat") {
        CompatConfig cfg;
        cfg.lambda = hp.at("lambda").get<double>();
        cfg.normalize = hp.at("normalize").get<bool>();
        return std::make_shared<CompatModel>(tensors[0], SemanticTable(tensors[1]), cfg);
    }
    throw DatasetError(stem.string() + ".json: unknown architecture \"" + arch + "\"");
}

}  // namespace icot
