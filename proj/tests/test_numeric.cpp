#include "icot/metrics.hpp"
#include "icot/nn.hpp"
#include "icot/numeric.hpp"
#include "icot/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

using namespace icot;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Plain Gaussian elimination with partial pivoting on an augmented system.
std::vector<std::vector<double>> gauss_solve(std::vector<std::vector<double>> a, std::vector<std::vector<double>> b) {
    const std::size_t n = a.size();
    const std::size_t k = b[0].size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            for (std::size_t c = 0; c < k; ++c) b[r][c] -= f * b[col][c];
        }
    }
    std::vector<std::vector<double>> x(n, std::vector<double>(k, 0.0));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t c = 0; c < k; ++c) {
            double s = b[i][c];
            for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j][c];
            x[i][c] = s / a[i][i];
        }
    }
    return x;
}

}  // namespace

TEST(Softmax, Examples) {
    const Vector a = softmax(vec({0, 0}));
    EXPECT_DOUBLE_EQ(a[0], 0.5);
    EXPECT_DOUBLE_EQ(a[1], 0.5);
    const Vector b = softmax(vec({0, std::log(3.0)}));
    EXPECT_NEAR(b[0], 0.25, 1e-15);
    EXPECT_NEAR(b[1], 0.75, 1e-15);
    const Vector c = softmax(vec({1000, 1000}));
    EXPECT_DOUBLE_EQ(c[0], 0.5);
    EXPECT_THROW(softmax(Vector()), std::invalid_argument);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
    Rng rng(11);
    std::uniform_real_distribution<double> shift(-50, 50);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector v = 5.0 * randn(7, 1, rng).col(0);
        const double c = shift(rng);
        const Vector p = softmax(v);
        const Vector q = softmax((v.array() + c).matrix());
        EXPECT_NEAR(p.sum(), 1.0, 1e-9);
        EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(p.minCoeff(), 0.0);
    }
}

TEST(CrossEntropy, Examples) {
    EXPECT_DOUBLE_EQ(cross_entropy(vec({1, 0}), 0), 0.0);
    EXPECT_NEAR(cross_entropy(vec({0.5, 0.5}), 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(cross_entropy(vec({0.2, 0.8}), 0), -std::log(0.2), 1e-15);
    EXPECT_NEAR(cross_entropy(vec({1, 0}), 1), -std::log(1e-12), 1e-9);
    EXPECT_THROW(cross_entropy(vec({0.5, 0.5}), 2), std::out_of_range);
}

TEST(KlToUniform, Examples) {
    Vector one_hot = Vector::Zero(10);
    one_hot[0] = 1.0;
    EXPECT_NEAR(kl_to_uniform(one_hot), std::log(10.0), 1e-12);
    EXPECT_NEAR(kl_to_uniform(Vector::Constant(6, 1.0 / 6.0)), 0.0, 1e-12);
    EXPECT_NEAR(kl_to_uniform(vec({0.7, 0.3})), 0.7 * std::log(1.4) + 0.3 * std::log(0.6), 1e-12);
    EXPECT_NEAR(kl_to_uniform(vec({0.7, 0.3})), 0.0823, 1e-4);
    EXPECT_THROW(kl_to_uniform(Vector()), std::invalid_argument);
}

TEST(KlToUniform, NonNegativeZeroOnlyAtUniform) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector p = softmax(randn(5, 1, rng).col(0));
        EXPECT_GT(kl_to_uniform(p), 0.0);
    }
}

TEST(Entropy, TwoPoint) {
    EXPECT_NEAR(entropy(vec({0.7, 0.3})), 0.6109, 1e-4);
    EXPECT_NEAR(entropy(Vector::Constant(4, 0.25)), std::log(4.0), 1e-12);
    EXPECT_DOUBLE_EQ(entropy(vec({1, 0, 0})), 0.0);
}

TEST(Ridge, IdentityAndZero) {
    Rng rng(5);
    const Matrix y = randn(4, 3, rng);
    const Matrix w = ridge_fit(Matrix::Identity(4, 4), y, 0.0);
    EXPECT_LE((w - y).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix x = randn(6, 3, rng);
    EXPECT_LE(ridge_fit(x, Matrix::Zero(6, 2), 0.3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ridge, MatchesGaussianElimination) {
    Rng rng(9);
    const Matrix x = randn(5, 3, rng);
    const Matrix y = randn(5, 2, rng);
    const double lambda = 0.1;
    std::vector<std::vector<double>> a(3, std::vector<double>(3, 0.0)), b(3, std::vector<double>(2, 0.0));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int n = 0; n < 5; ++n) a[i][j] += x(n, i) * x(n, j);
        }
        a[i][i] += lambda;
        for (int c = 0; c < 2; ++c) {
            for (int n = 0; n < 5; ++n) b[i][c] += x(n, i) * y(n, c);
        }
    }
    const auto expect = gauss_solve(a, b);
    const Matrix w = ridge_fit(x, y, lambda);
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 2; ++c) EXPECT_NEAR(w(i, c), expect[i][c], 1e-10);
    }
}

TEST(Ridge, StationarityProperty) {
    Rng rng(21);
    std::uniform_real_distribution<double> lam(1e-3, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix x = randn(12, 4, rng);
        const Matrix y = randn(12, 3, rng);
        const double l = lam(rng);
        const Matrix w = ridge_fit(x, y, l);
        const double scale = std::max(1.0, (x.transpose() * y).cwiseAbs().maxCoeff());
        EXPECT_LE((x.transpose() * (x * w - y) + l * w).cwiseAbs().maxCoeff(), 1e-6 * scale);
    }
}

TEST(Ridge, SingularAtZeroLambda) {
    Matrix x(3, 2);
    x << 1, 2, 2, 4, 3, 6;
    try {
        (void)ridge_fit(x, Matrix::Ones(3, 1), 0.0);
        FAIL() << "expected a singular-system error";
    } catch (const std::domain_error& e) {
        EXPECT_NE(std::string(e.what()).find("singular"), std::string::npos);
    }
    EXPECT_THROW(ridge_fit(x, Matrix::Ones(2, 1), 0.1), std::invalid_argument);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    Rng rng(1);
    std::vector<Matrix> p{randn(3, 2, rng)};
    const Matrix before = p[0];
    AdamState s(p, {});
    std::vector<Matrix> g{Matrix::Zero(3, 2)};
    for (int i = 0; i < 5; ++i) adam_step(p, g, s);
    EXPECT_EQ(p[0], before);
    EXPECT_EQ(s.step(), 5);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
    std::vector<Matrix> p{Matrix::Constant(1, 1, 2.0)};
    AdamState s(p, {.lr = 0.01});
    std::vector<Matrix> g{Matrix::Constant(1, 1, -3.7)};
    adam_step(p, g, s);
    EXPECT_NEAR(p[0](0, 0) - 2.0, 0.01, 1e-8);
}

TEST(Adam, ThreeStepsOnSquareMatchHandRecurrence) {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double w = 1.5, m = 0.0, v = 0.0;
    std::vector<Matrix> p{Matrix::Constant(1, 1, w)};
    AdamState s(p, {.lr = lr});
    for (int t = 1; t <= 3; ++t) {
        const double g = 2.0 * w;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w -= lr * mh / (std::sqrt(vh) + eps);
        std::vector<Matrix> grad{Matrix::Constant(1, 1, 2.0 * p[0](0, 0))};
        adam_step(p, grad, s);
        EXPECT_NEAR(p[0](0, 0), w, 1e-14) << "step " << t;
    }
}

TEST(Adam, ShapeMismatchThrows) {
    std::vector<Matrix> p{Matrix::Zero(2, 2)};
    AdamState s(p, {});
    std::vector<Matrix> g{Matrix::Zero(2, 3)};
    EXPECT_THROW(adam_step(p, g, s), std::invalid_argument);
    EXPECT_EQ(s.step(), 0);
}

TEST(GradCheck, QuadraticIsExact) {
    Rng rng(2);
    std::vector<Matrix> p{randn(3, 3, rng)};
    const Matrix a = randn(3, 3, rng);
    auto loss = [&](std::span<const Matrix> q) { return (q[0] - a).squaredNorm(); };
    std::vector<Matrix> g{2.0 * (p[0] - a)};
    EXPECT_LE(grad_check(loss, p, g), 1e-7);
}

TEST(GradCheck, FlagsWrongGradientAndNonFiniteLoss) {
    std::vector<Matrix> p{Matrix::Constant(1, 2, 1.0)};
    auto loss = [](std::span<const Matrix> q) { return q[0].squaredNorm(); };
    std::vector<Matrix> wrong{Matrix::Constant(1, 2, 1.0)};
    EXPECT_GT(grad_check(loss, p, wrong), 0.1);
    auto bad = [](std::span<const Matrix>) { return std::nan(""); };
    EXPECT_THROW(grad_check(bad, p, wrong), std::domain_error);
}

TEST(DenseNet, ShapesAndGradient) {
    Rng rng(4);
    DenseNet net(5, 8, 3, rng);
    const Matrix x = randn(6, 5, rng);
    EXPECT_EQ(net.forward(x).rows(), 6);
    EXPECT_EQ(net.forward(x).cols(), 3);
    for (auto& p : net.params()) p = randn(p.rows(), p.cols(), rng);
    const std::vector<std::size_t> t{0, 1, 2, 0, 1, 2};
    auto loss = [&](std::span<const Matrix> q) {
        Matrix d;
        return softmax_xent(net.forward_with(q, x), t, d);
    };
    DenseNet::Cache cache;
    Matrix d;
    softmax_xent(net.forward_with(net.params(), x, &cache), t, d);
    EXPECT_LE(grad_check(loss, net.params(), net.backward(cache, d)), 1e-4);
    EXPECT_THROW(net.forward(randn(2, 4, rng)), std::invalid_argument);
}

TEST(TrainMinibatch, DivergenceGuard) {
    std::vector<Matrix> p{Matrix::Zero(1, 1)};
    Rng rng(0);
    int calls = 0;
    auto step = [&](std::span<const std::size_t>) {
        BatchResult r;
        r.loss = ++calls < 3 ? 1.0 : 100.0;
        r.grads = {Matrix::Zero(1, 1)};
        return r;
    };
    EXPECT_THROW(train_minibatch(p, 4, {5, 4, 1e-3}, rng, step), std::runtime_error);
}

TEST(PerClassAcc, PerClassWeighting) {
    std::vector<ClassId> truth(100), preds(100);
    for (int i = 0; i < 100; ++i) {
        truth[i] = i < 10 ? 0 : 1;
        preds[i] = 0;
    }
    const std::vector<ClassId> classes{0, 1};
    const auto acc = per_class_acc(preds, truth, classes);
    EXPECT_DOUBLE_EQ(acc.mean, 50.0);
    EXPECT_DOUBLE_EQ(per_class_acc(truth, truth, classes).mean, 100.0);
}

TEST(PerClassAcc, AbsentClassExcludedAndUnknownRejected) {
    const std::vector<ClassId> classes{0, 1, 2};
    const std::vector<ClassId> truth{0, 0, 1};
    const std::vector<ClassId> preds{0, 1, 1};
    const auto acc = per_class_acc(preds, truth, classes);
    EXPECT_EQ(acc.per_class.count(2), 0U);
    EXPECT_DOUBLE_EQ(acc.mean, 75.0);
    const std::vector<ClassId> bad{5};
    EXPECT_THROW(per_class_acc(bad, bad, classes), std::invalid_argument);
}

TEST(PerClassAcc, MatchesTallyOracleAndDuplicationInvariant) {
    Rng rng(17);
    std::uniform_int_distribution<ClassId> cls(0, 4);
    const std::vector<ClassId> classes{0, 1, 2, 3, 4};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ClassId> t(37), p(37);
        for (auto& x : t) x = cls(rng);
        for (auto& x : p) x = cls(rng);
        std::map<ClassId, int> hit, tot;
        for (std::size_t i = 0; i < t.size(); ++i) {
            ++tot[t[i]];
            if (t[i] == p[i]) ++hit[t[i]];
        }
        double sum = 0.0;
        for (const auto& [c, n] : tot) sum += 100.0 * hit[c] / n;
        EXPECT_NEAR(per_class_acc(p, t, classes).mean, sum / static_cast<double>(tot.size()), 1e-12);

        std::vector<ClassId> t3, p3;
        for (int rep = 0; rep < 3; ++rep) {
            t3.insert(t3.end(), t.begin(), t.end());
            p3.insert(p3.end(), p.begin(), p.end());
        }
        EXPECT_NEAR(per_class_acc(p3, t3, classes).mean, per_class_acc(p, t, classes).mean, 1e-12);
    }
}

TEST(HarmonicMean, TableValuesAndRecomputation) {
    EXPECT_NEAR(harmonic_mean(81.8, 84.8), 83.3, 0.05);
    EXPECT_EQ(harmonic_mean(74.6, 74.6), 74.6);
    EXPECT_EQ(harmonic_mean(50.0, 0.0), 0.0);
    EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const double s = u(rng), un = u(rng);
        EXPECT_NEAR(harmonic_mean(s, un), 2.0 * s * un / (s + un), 1e-9);
    }
}

TEST(DeriveSeed, StableAndDistinct) {
    EXPECT_EQ(derive_seed(1, "train/A", 2), derive_seed(1, "train/A", 2));
    EXPECT_NE(derive_seed(1, "train/A", 2), derive_seed(1, "train/B", 2));
    EXPECT_NE(derive_seed(1, "train/A", 2), derive_seed(1, "train/A", 3));
    EXPECT_NE(derive_seed(1, "train/A", 2), derive_seed(2, "train/A", 2));
}
