#pragma once

// Built-in gradient checks and metric oracles behind `icot_cli selftest`.

#include "icot/basemodels.hpp"
#include "icot/cotrain.hpp"
#include "icot/metrics.hpp"
#include "icot/oodgate.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace icot {

struct SelfCheck {
    std::string name;
    bool ok = false;
    std::string detail;
};

namespace selftest_detail {

inline Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

/// Net with every tensor (biases included) drawn at random so no ReLU sits at a kink.
inline DenseNet random_net(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    DenseNet net(in, hidden, out, rng);
    for (auto& p : net.params()) p = 0.5 * gaussian(p.rows(), p.cols(), rng);
    return net;
}

inline std::vector<std::size_t> random_targets(std::size_t n, std::size_t k, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, k - 1);
    std::vector<std::size_t> t(n);
    for (auto& x : t) x = d(rng);
    return t;
}

inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace selftest_detail

/// Worst relative gradient error over `inits` random initializations of the
/// prototype, OOD-detector and semantic losses.
inline double worst_grad_error(const std::string& which, int inits, std::uint64_t seed = 7) {
    using namespace selftest_detail;
    double worst = 0.0;
    for (int i = 0; i < inits; ++i) {
        Rng rng = make_rng(seed, which, static_cast<std::uint64_t>(i));
        if (which == "prototype") {
            const Matrix attrs = gaussian(4, 5, rng);
            const Matrix x = gaussian(9, 6, rng);
            const auto cls = random_targets(9, 4, rng);
            const DenseNet net = random_net(5, 7, 6, rng);
            std::vector<Matrix> g;
            prototype_loss(net, net.params(), x, cls, attrs, 1e-3, &g);
            worst = std::max(worst, grad_check([&](std::span<const Matrix> p) {
                                        return prototype_loss(net, p, x, cls, attrs, 1e-3, nullptr);
                                    },
                                    net.params(), g));
        } else if (which == "detector") {
            const Matrix xs = gaussian(8, 6, rng);
            const Matrix xu = gaussian(5, 6, rng);
            const auto t = random_targets(8, 4, rng);
            const DenseNet net = random_net(6, 7, 4, rng);
            std::vector<Matrix> g;
            detector_loss(net, net.params(), xs, t, xu, &g);
            worst = std::max(worst, grad_check([&](std::span<const Matrix> p) {
                                        return detector_loss(net, p, xs, t, xu, nullptr);
                                    },
                                    net.params(), g));
        } else if (which == "semantic") {
            const Matrix x = gaussian(8, 6, rng);
            const Matrix attrs = gaussian(4, 5, rng);
            const auto t = random_targets(8, 4, rng);
            const DenseNet net = random_net(6, 7, 5, rng);
            std::vector<Matrix> g;
            semantic_loss(net, net.params(), x, t, attrs, &g);
            worst = std::max(worst, grad_check([&](std::span<const Matrix> p) {
                                        return semantic_loss(net, p, x, t, attrs, nullptr);
                                    },
                                    net.params(), g));
        } else {
            throw std::invalid_argument("worst_grad_error: unknown loss " + which);
        }
    }
    return worst;
}

inline std::vector<SelfCheck> run_selftest() {
    using namespace selftest_detail;
    std::vector<SelfCheck> out;
    auto check = [&out](std::string name, bool ok, std::string detail) {
        out.push_back({std::move(name), ok, std::move(detail)});
    };

    for (const char* loss : {"prototype", "detector", "semantic"}) {
        const double e = worst_grad_error(loss, 10);
        check(std::string("grad_check ") + loss, e <= 1e-4, "max rel err " + num(e));
    }

    Vector one_hot = Vector::Zero(10);
    one_hot[3] = 1.0;
    const double kl = kl_to_uniform(one_hot);
    check("kl_to_uniform one-hot K=10", std::abs(kl - std::log(10.0)) <= 1e-9, num(kl));
    const double klu = kl_to_uniform(Vector::Constant(7, 1.0 / 7.0));
    check("kl_to_uniform uniform", std::abs(klu) <= 1e-12, num(klu));

    Vector p(2);
    p << 0.7, 0.3;
    const double h = entropy(p);
    check("entropy [0.7,0.3]", std::abs(h - (-0.7 * std::log(0.7) - 0.3 * std::log(0.3))) <= 1e-12, num(h));

    Vector l(2);
    l << 0.0, std::log(3.0);
    const Vector s = softmax(l);
    check("softmax [0, ln 3]", std::abs(s[0] - 0.25) <= 1e-12 && std::abs(s[1] - 0.75) <= 1e-12,
          num(s[0]) + "," + num(s[1]));

    const double hm = harmonic_mean(81.8, 84.8);
    check("harmonic_mean(84.8, 81.8)", std::abs(hm - 83.3) <= 0.05, num(hm));

    bool budget_ok = true;
    for (std::size_t m = 1; m <= 50; ++m) {
        for (std::size_t t_total = 1; t_total <= 10; ++t_total) {
            for (std::size_t t = 1; t <= t_total; ++t) {
                std::vector<ClassId> labels(m);
                for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<ClassId>(i % 3);
                const auto sel = incremental_select(PoolLabels::all_rows(labels), t, t_total, m * 131 + t);
                budget_ok = budget_ok && sel.size() == m * t / t_total;
            }
        }
    }
    check("incremental_select sizes", budget_ok, "M 1..50, T 1..10");

    const std::vector<double> seen{1, 2, 3, 4};
    const std::vector<double> unseen{2.5, 3.5, 4.5, 5.5};
    const std::vector<double> f{0.25};
    const auto curve = tnr_at_fnr(seen, unseen, f);
    check("tnr_at_fnr worked example", curve.points[0].threshold == 3.0 && curve.points[0].tnr == 0.75,
          "theta " + num(curve.points[0].threshold) + " tnr " + num(curve.points[0].tnr));

    Rng rng = make_rng(7, "selftest/ridge");
    const Matrix x = gaussian(20, 5, rng);
    const Matrix y = gaussian(20, 3, rng);
    const Matrix w = ridge_fit(x, y, 0.5);
    const double resid = (x.transpose() * (x * w - y) + 0.5 * w).cwiseAbs().maxCoeff();
    check("ridge_fit stationarity", resid <= 1e-9, num(resid));
    return out;
}

}  // namespace icot
