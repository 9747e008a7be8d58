#pragma once

// Dense numerical substrate: matrices, softmax-family losses, ridge solver,
// Adam and a central-difference gradient checker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kLogFloor = 1e-12;

/// Throws unless every entry of `m` is finite.
inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw std::domain_error(std::string(what) + ": non-finite entry");
    }
}

/// Max-shifted softmax of a single logit vector.
inline Vector softmax(const Vector& logits) {
    if (logits.size() == 0) {
        throw std::invalid_argument("softmax: empty logit vector");
    }
    const double shift = logits.maxCoeff();
    Vector out = (logits.array() - shift).exp().matrix();
    out /= out.sum();
    return out;
}

/// Row-wise softmax; every output row is a probability vector.
inline Matrix softmax_rows(const Matrix& logits) {
    if (logits.cols() == 0) {
        throw std::invalid_argument("softmax_rows: zero columns");
    }
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double shift = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - shift).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

/// -ln p[label] with p[label] floored at 1e-12.
inline double cross_entropy(const Vector& p, std::size_t label) {
    if (label >= static_cast<std::size_t>(p.size())) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(p.size()) + " classes");
    }
    return -std::log(std::max(p[static_cast<Eigen::Index>(label)], kLogFloor));
}

/// KL(p || uniform) = sum_i p_i ln(p_i K), with 0 ln 0 = 0.
inline double kl_to_uniform(const Vector& p) {
    const auto k = p.size();
    if (k == 0) {
        throw std::invalid_argument("kl_to_uniform: empty distribution");
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (p[i] > 0.0) {
            kl += p[i] * std::log(p[i] * static_cast<double>(k));
        }
    }
    return std::max(kl, 0.0);
}

/// Shannon entropy in nats, 0 ln 0 = 0.
inline double entropy(const Vector& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            h -= p[i] * std::log(p[i]);
        }
    }
    return h;
}

/// Solves (X^T X + lambda I) W = X^T Y.
///
/// With lambda == 0 the Gram matrix must be nonsingular; a rank-deficient
/// design is reported rather than silently regularized.
inline Matrix ridge_fit(const Matrix& x, const Matrix& y, double lambda) {
    if (x.rows() < 1) {
        throw std::invalid_argument("ridge_fit: need at least one row");
    }
    if (x.rows() != y.rows()) {
        throw std::invalid_argument("ridge_fit: X has " + std::to_string(x.rows()) +
                                    " rows but Y has " + std::to_string(y.rows()));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("ridge_fit: lambda must be finite and >= 0");
    }
    require_finite(x, "ridge_fit X");
    require_finite(y, "ridge_fit Y");

    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += lambda;
    const Eigen::MatrixXd rhs = x.transpose() * y;

    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
        qr.setThreshold(1e-12);
        if (qr.rank() < gram.rows()) {
            throw std::domain_error("ridge_fit: singular system, X^T X is rank " +
                                    std::to_string(qr.rank()) + " < " +
                                    std::to_string(gram.rows()) + " at lambda = 0");
        }
        return qr.solve(rhs);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw std::domain_error("ridge_fit: X^T X + lambda I is not positive definite");
    }
    return llt.solve(rhs);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators for a list of parameter tensors.
class AdamState {
  public:
    AdamState() = default;
    AdamState(std::span<const Matrix> params, AdamConfig config) : config_(config) {
        first_.reserve(params.size());
        second_.reserve(params.size());
        for (const auto& p : params) {
            first_.push_back(Matrix::Zero(p.rows(), p.cols()));
            second_.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }

    [[nodiscard]] long step() const { return step_; }
    [[nodiscard]] const AdamConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<Matrix>& first_moment() const { return first_; }
    [[nodiscard]] const std::vector<Matrix>& second_moment() const { return second_; }

    /// Bias-corrected Adam update applied in place.
    void apply(std::span<Matrix> params, std::span<const Matrix> grads) {
        if (params.size() != grads.size() || params.size() != first_.size()) {
            throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols() ||
                params[i].rows() != first_[i].rows() || params[i].cols() != first_[i].cols()) {
                throw std::invalid_argument("adam_step: shape mismatch at tensor " +
                                            std::to_string(i));
            }
        }
        ++step_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * grads[i];
            second_[i] = config_.beta2 * second_[i] +
                         (1.0 - config_.beta2) * grads[i].cwiseProduct(grads[i]);
            params[i].array() -= config_.lr * (first_[i].array() / c1) /
                                 ((second_[i].array() / c2).sqrt() + config_.eps);
        }
    }

  private:
    AdamConfig config_{};
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long step_ = 0;
};

/// Free-function form of AdamState::apply.
inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
    state.apply(params, grads);
}

using LossFn = std::function<double(std::span<const Matrix>)>;

/// Largest relative error |a - n| / max(1e-8, |a| + |n|) between an analytic
/// gradient and central differences of `loss` over every parameter entry.
inline double grad_check(const LossFn& loss, std::span<const Matrix> params,
                         std::span<const Matrix> analytic, double eps = 1e-5) {
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("grad_check: parameter/gradient count mismatch");
    }
    std::vector<Matrix> probe(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        if (probe[t].rows() != analytic[t].rows() || probe[t].cols() != analytic[t].cols()) {
            throw std::invalid_argument("grad_check: shape mismatch at tensor " +
                                        std::to_string(t));
        }
        for (Eigen::Index i = 0; i < probe[t].size(); ++i) {
            double& slot = probe[t].data()[i];
            const double saved = slot;
            slot = saved + eps;
            const double up = loss(probe);
            slot = saved - eps;
            const double down = loss(probe);
            slot = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw std::domain_error("grad_check: non-finite loss");
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[t].data()[i];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace icot
