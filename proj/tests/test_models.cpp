#include "icot/basemodels.hpp"
#include "icot/cotrain.hpp"
#include "icot/experiment.hpp"
#include "icot/metrics.hpp"
#include "icot/selftest.hpp"
#include "icot/synthbench.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace icot;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

const SynthOutput& reference() {
    static const SynthOutput gen = generate(reference_benchmark());
    return gen;
}

SynthOutput quiet_toy() {
    SynthSpec s;
    s.seen_classes = 5;
    s.unseen_classes = 2;
    s.attr_dim = 8;
    s.feature_dim = 16;
    s.train_per_class = 30;
    s.test_per_seen_class = 10;
    s.test_per_unseen_class = 20;
    s.noise = 0.05;
    s.seed = 4;
    return generate(s);
}

double unseen_acc(const BaseLearner& m, const ZslData& d) {
    return per_class_acc(predict(m, d.unseen_pool().features, d.space.unseen).argmax(), d.unseen_truth(),
                         d.space.unseen)
        .mean;
}

void expect_rows_sum_to_one(const Predictions& p) {
    for (Eigen::Index r = 0; r < p.probs.rows(); ++r) EXPECT_NEAR(p.probs.row(r).sum(), 1.0, 1e-9);
}

}  // namespace

TEST(Prototype, GradientCheck) { EXPECT_LE(worst_grad_error("prototype", 10), 1e-4); }

TEST(Prototype, DegenerateSingleClassFit) {
    const RowVector v = RowVector::LinSpaced(4, -1.0, 2.0);
    Matrix x(32, 4);
    for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) = v;
    const auto data = LabeledDataset::seen_real(x, std::vector<ClassId>(32, 0));
    const SemanticTable sem(Matrix::Constant(1, 3, 0.5));
    PrototypeConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 400;
    cfg.lr = 1e-2;
    cfg.batch = 32;
    const std::vector<ClassId> classes{0};
    const auto m = train_prototype(data, sem, classes, 1, cfg);
    EXPECT_LE(m.epoch_losses().back(), 1e-3);
    EXPECT_LE((m.prototypes(classes).row(0) - v).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Prototype, SmoothedLossNonIncreasing) {
    const auto& d = reference().data;
    PrototypeConfig cfg;
    cfg.epochs = 30;
    const auto m = train_prototype(d.train_set(), d.semantics, d.space.seen, 3, cfg);
    const auto& l = m.epoch_losses();
    ASSERT_EQ(l.size(), 30U);
    auto window = [&](std::size_t end) {
        double s = 0.0;
        for (std::size_t i = end - 5; i < end; ++i) s += l[i];
        return s / 5.0;
    };
    for (std::size_t e = 10; e <= l.size(); e += 5) EXPECT_LE(window(e), window(e - 5) + 1e-9);
}

TEST(Prototype, HandComputedSoftmaxAndTemperatureInvariantArgmax) {
    Rng rng(2);
    const SemanticTable sem(randn(3, 4, rng));
    DenseNet net(4, 5, 2, rng);
    const std::vector<ClassId> classes{0, 1, 2};
    const Matrix x = randn(6, 2, rng);
    std::vector<ClassId> first;
    for (double tau : {0.1, 1.0, 10.0}) {
        PrototypeConfig cfg;
        cfg.temperature = tau;
        const PrototypeModel m(net, sem, cfg, 0);
        const Matrix protos = net.forward(sem.rows(classes));
        const auto p = m.predict_proba(x, classes);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            double z = 0.0;
            std::vector<double> e(3);
            for (int c = 0; c < 3; ++c) {
                e[c] = std::exp(-(x.row(r) - protos.row(c)).squaredNorm() / tau);
                z += e[c];
            }
            for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.probs(r, c), e[c] / z, 1e-12);
        }
        if (first.empty()) first = p.argmax();
        EXPECT_EQ(p.argmax(), first) << "tau " << tau;
    }
}

TEST(Prototype, EquidistantAndDominantRows) {
    Matrix w1 = Matrix::Identity(2, 2);
    DenseNet net(2, 0, 2, std::vector<Matrix>{w1, Matrix::Zero(1, 2)});
    Matrix attrs(2, 2);
    attrs << 1, 0, -1, 0;
    const PrototypeModel m(net, SemanticTable(attrs), PrototypeConfig{}, 0);
    const std::vector<ClassId> classes{0, 1};
    Matrix x(2, 2);
    x << 0, 3, 2, 0;
    const auto p = m.predict_proba(x, classes);
    EXPECT_NEAR(p.probs(0, 0), 0.5, 1e-12);
    EXPECT_GE(p.probs(1, 0), 0.99);
    const std::vector<ClassId> one{1};
    EXPECT_DOUBLE_EQ(predict(m, x, one).probs(0, 0), 1.0);
    EXPECT_THROW(predict(m, x, {}), std::invalid_argument);
}

TEST(Prototype, AutoTemperatureIsPositive) {
    const auto& d = reference().data;
    PrototypeConfig cfg;
    cfg.temperature = 0.0;
    const auto m = train_prototype(d.train_set(), d.semantics, d.space.seen, 1, cfg);
    EXPECT_GT(m.config().temperature, 0.0);
}

TEST(Prototype, MissingClassRowsRejected) {
    const auto data = LabeledDataset::seen_real(Matrix::Ones(2, 3), {0, 0});
    const SemanticTable sem(Matrix::Ones(2, 2));
    const std::vector<ClassId> classes{0, 1};
    EXPECT_THROW(train_prototype(data, sem, classes, 0, {}), std::invalid_argument);
    const std::vector<ClassId> missing{5};
    EXPECT_THROW(train_prototype(data, sem, missing, 0, {}), std::invalid_argument);
}

TEST(Generative, OneHotAttributesReproduceMeans) {
    Matrix x(6, 2);
    x << 1, 2, 3, 4, 10, 0, 12, 2, -5, 5, -7, 3;
    const auto data = LabeledDataset::seen_real(x, {0, 0, 1, 1, 2, 2});
    const SemanticTable sem(Matrix::Identity(3, 3));
    GenerativeConfig cfg;
    cfg.lambda = 0.0;
    cfg.epochs = 1;
    const std::vector<ClassId> classes{0, 1, 2};
    const auto m = train_generative(data, sem, classes, 1, cfg);
    Matrix expect(3, 2);
    expect << 2, 3, 11, 1, -6, 4;
    EXPECT_LE((m.class_means(classes) - expect).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(m.variance().minCoeff(), 0.0);
}

TEST(Generative, DeterministicSynthesisAndDegenerateWarning) {
    const auto& d = reference().data;
    GenerativeConfig cfg;
    cfg.epochs = 2;
    const auto a = train_generative(d.train_set(), d.semantics, d.space.unseen, 5, cfg);
    const auto b = train_generative(d.train_set(), d.semantics, d.space.unseen, 5, cfg);
    Rng r1(9), r2(9);
    EXPECT_EQ(a.synthesize(d.space.unseen, 10, r1), b.synthesize(d.space.unseen, 10, r2));
    EXPECT_EQ(a.classifier().params()[0], b.classifier().params()[0]);

    int warnings = 0;
    auto prev = set_warning_sink([&](const std::string&) { ++warnings; });
    const auto same = LabeledDataset::seen_real(Matrix::Ones(4, 2), {0, 0, 1, 1});
    const std::vector<ClassId> cls{0, 1};
    const auto m = train_generative(same, SemanticTable(Matrix::Identity(2, 2)), cls, 0, cfg);
    set_warning_sink(prev);
    EXPECT_EQ(warnings, 1);
    EXPECT_DOUBLE_EQ(m.variance().minCoeff(), kVarianceFloor);
}

TEST(Generative, MoreSyntheticSamplesDoNotHurtOnQuietData) {
    const auto gen = quiet_toy();
    const auto& d = gen.data;
    GenerativeConfig small, large;
    small.n_syn = 50;
    large.n_syn = 500;
    small.lr = large.lr = 1e-2;
    const double a = unseen_acc(train_generative(d.train_set(), d.semantics, d.space.unseen, 1, small), d);
    const double b = unseen_acc(train_generative(d.train_set(), d.semantics, d.space.unseen, 1, large), d);
    EXPECT_GE(b, a - 1.0);
}

TEST(Compat, MatchesKroneckerNormalEquations) {
    Rng rng(12);
    const Matrix x = randn(20, 4, rng);
    const SemanticTable sem(randn(4, 3, rng));
    std::vector<ClassId> labels(20);
    for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<ClassId>(i % 4);
    const auto data = LabeledDataset::seen_real(x, labels);
    const std::vector<ClassId> classes{0, 1, 2, 3};
    const double lambda = 0.7;
    const auto m = train_compat(data, sem, classes, {lambda, false});

    const Matrix e = sem.rows(classes);
    Matrix t = Matrix::Zero(20, 4);
    for (std::size_t i = 0; i < 20; ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    // vec(A V B) = (B^T kron A) vec(V), column-major vec.
    const Eigen::MatrixXd a = x.transpose() * x;
    const Eigen::MatrixXd b = e.transpose() * e;
    const Eigen::MatrixXd c = x.transpose() * t * e;
    Eigen::MatrixXd k(12, 12);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) k.block(4 * i, 4 * j, 4, 4) = b(j, i) * a;
    }
    k += lambda * Eigen::MatrixXd::Identity(12, 12);
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(c.data(), 12);
    const Eigen::VectorXd v = k.fullPivLu().solve(rhs);
    const Eigen::MatrixXd expect = Eigen::Map<const Eigen::MatrixXd>(v.data(), 4, 3);
    EXPECT_LE((Eigen::MatrixXd(m.v()) - expect).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Compat, LimitsOfLambda) {
    Matrix x = Matrix::Identity(3, 3);
    const SemanticTable sem(Matrix::Identity(3, 3));
    const auto data = LabeledDataset::seen_real(x, {0, 1, 2});
    const std::vector<ClassId> classes{0, 1, 2};
    const auto exact = train_compat(data, sem, classes, {1e-9, false});
    EXPECT_LE((exact.scores(x, classes) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
    const auto flat = train_compat(data, sem, classes, {1e9, false});
    const auto p = flat.predict_proba(x, classes);
    EXPECT_LE((p.probs.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-6);

    const auto rank_deficient = LabeledDataset::seen_real(Matrix::Ones(3, 3), {0, 1, 2});
    EXPECT_THROW(train_compat(rank_deficient, sem, classes, {0.0, false}), std::domain_error);
}

TEST(Learners, ProbabilitiesSumToOneAndReproducible) {
    const auto& d = reference().data;
    const auto seen = d.train_set();
    const auto pool = d.unseen_pool();
    for (const auto& entry : benchmark_learners()) {
        const auto spec = make_learner(entry);
        const auto a = spec.train({seen, d.semantics, d.space.unseen, 3, nullptr});
        const auto b = spec.train({seen, d.semantics, d.space.unseen, 3, nullptr});
        const auto pa = predict(*a, pool.features, d.space.unseen);
        expect_rows_sum_to_one(pa);
        EXPECT_EQ(pa.probs, predict(*b, pool.features, d.space.unseen).probs) << entry.tag;
    }
    const auto c = compat_learner("C", {}).train({seen, d.semantics, d.space.unseen, 3, nullptr});
    expect_rows_sum_to_one(predict(*c, pool.features, d.space.unseen));
}

TEST(Learners, InductiveBandsOnReference) {
    const auto& d = reference().data;
    const auto seen = d.train_set();
    const auto learners = benchmark_learners();
    const double a = unseen_acc(*make_learner(learners[0]).train({seen, d.semantics, d.space.unseen, 1, nullptr}), d);
    const double b = unseen_acc(*make_learner(learners[1]).train({seen, d.semantics, d.space.unseen, 1, nullptr}), d);
    EXPECT_GE(a, 55.0);
    EXPECT_LE(a, 80.0);
    EXPECT_GE(b, 45.0);
    EXPECT_LE(b, 85.0);
}

TEST(Learners, RestrictedVersusDirectPredictionOverUnseen) {
    Matrix w1 = Matrix::Identity(2, 2);
    DenseNet net(2, 0, 2, std::vector<Matrix>{w1, Matrix::Zero(1, 2)});
    Matrix attrs(3, 2);
    attrs << 0, 0, 2, 0, 0, 2;
    const PrototypeModel m(net, SemanticTable(attrs), PrototypeConfig{}, 0);
    const std::vector<ClassId> all{0, 1, 2};
    const std::vector<ClassId> unseen{1, 2};
    Matrix x(1, 2);
    x << 0.9, 0.6;
    const auto over_y = predict(m, x, all);
    const auto direct = predict(m, x, unseen);
    const auto restricted = over_y.restricted(unseen);
    EXPECT_EQ(over_y.argmax()[0], 0U);
    EXPECT_EQ(direct.argmax()[0], 1U);
    EXPECT_LE((restricted.probs - direct.probs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Checkpoint, RoundTripsAllArchitectures) {
    const auto gen = quiet_toy();
    const auto& d = gen.data;
    const auto seen = d.train_set();
    const auto dir = std::filesystem::temp_directory_path() / "icot_test_ckpt";
    std::filesystem::create_directories(dir);
    const std::vector<LearnerSpec> specs{prototype_learner("A", {.hidden = 32}), generative_learner("B", {}),
                                         compat_learner("C", {})};
    for (const auto& s : specs) {
        const auto m = s.train({seen, d.semantics, d.space.unseen, 1, nullptr});
        save_checkpoint(*m, dir / s.tag);
        const auto back = load_checkpoint(dir / s.tag);
        EXPECT_EQ(back->architecture(), m->architecture());
        const auto p = predict(*m, d.unseen_pool().features, d.space.unseen);
        const auto q = predict(*back, d.unseen_pool().features, d.space.unseen);
        EXPECT_EQ(p.argmax(), q.argmax()) << s.tag;
        EXPECT_LE((p.probs - q.probs).cwiseAbs().maxCoeff(), 1e-3) << s.tag;
    }
}
