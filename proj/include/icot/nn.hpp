#pragma once

// Fully connected network with at most one ReLU hidden layer, plus the
// mini-batch Adam loop shared by every iterative learner.

#include "icot/numeric.hpp"
#include "icot/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

/// input -> [ReLU hidden] -> output. hidden == 0 gives a plain affine map.
class DenseNet {
  public:
    struct Cache {
        Matrix input;
        Matrix hidden;  // post-activation
    };

    DenseNet() = default;

    DenseNet(std::size_t inputs, std::size_t hidden, std::size_t outputs, Rng& rng)
        : inputs_(inputs), hidden_(hidden), outputs_(outputs) {
        if (inputs == 0 || outputs == 0) {
            throw std::invalid_argument("DenseNet: input and output widths must be >= 1");
        }
        if (hidden == 0) {
            params_.push_back(glorot(inputs, outputs, rng));
            params_.push_back(Matrix::Zero(1, static_cast<Eigen::Index>(outputs)));
        } else {
            params_.push_back(he(inputs, hidden, rng));
            params_.push_back(Matrix::Zero(1, static_cast<Eigen::Index>(hidden)));
            params_.push_back(glorot(hidden, outputs, rng));
            params_.push_back(Matrix::Zero(1, static_cast<Eigen::Index>(outputs)));
        }
    }

    DenseNet(std::size_t inputs, std::size_t hidden, std::size_t outputs, std::vector<Matrix> params)
        : inputs_(inputs), hidden_(hidden), outputs_(outputs), params_(std::move(params)) {
        if (params_.size() != (hidden_ == 0 ? 2U : 4U)) {
            throw std::invalid_argument("DenseNet: wrong parameter tensor count");
        }
    }

    [[nodiscard]] std::size_t inputs() const { return inputs_; }
    [[nodiscard]] std::size_t hidden() const { return hidden_; }
    [[nodiscard]] std::size_t outputs() const { return outputs_; }
    [[nodiscard]] std::vector<Matrix>& params() { return params_; }
    [[nodiscard]] const std::vector<Matrix>& params() const { return params_; }

    [[nodiscard]] Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
        return forward_with(params_, x, cache);
    }

    /// Forward pass with an explicit parameter list (used by gradient checks).
    [[nodiscard]] Matrix forward_with(std::span<const Matrix> p, const Matrix& x,
                                      Cache* cache = nullptr) const {
        if (static_cast<std::size_t>(x.cols()) != inputs_) {
            throw std::invalid_argument("DenseNet: expected " + std::to_string(inputs_) +
                                        " input columns, got " + std::to_string(x.cols()));
        }
        if (hidden_ == 0) {
            if (cache != nullptr) {
                cache->input = x;
            }
            return (x * p[0]).rowwise() + p[1].row(0);
        }
        Matrix h = ((x * p[0]).rowwise() + p[1].row(0)).cwiseMax(0.0);
        Matrix out = (h * p[2]).rowwise() + p[3].row(0);
        if (cache != nullptr) {
            cache->input = x;
            cache->hidden = std::move(h);
        }
        return out;
    }

    /// Gradients of a scalar loss given dLoss/dOutput for the cached batch.
    [[nodiscard]] std::vector<Matrix> backward(const Cache& cache, const Matrix& d_out) const {
        return backward_with(params_, cache, d_out);
    }

    [[nodiscard]] std::vector<Matrix> backward_with(std::span<const Matrix> p, const Cache& cache,
                                                    const Matrix& d_out) const {
        std::vector<Matrix> g;
        if (hidden_ == 0) {
            g.push_back(cache.input.transpose() * d_out);
            g.push_back(d_out.colwise().sum());
            return g;
        }
        Matrix d_hidden = d_out * p[2].transpose();
        d_hidden = d_hidden.cwiseProduct((cache.hidden.array() > 0.0).cast<double>().matrix());
        g.push_back(cache.input.transpose() * d_hidden);
        g.push_back(d_hidden.colwise().sum());
        g.push_back(cache.hidden.transpose() * d_out);
        g.push_back(d_out.colwise().sum());
        return g;
    }

  private:
    static Matrix uniform(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = dist(rng);
        }
        return m;
    }
    static Matrix he(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
    }
    static Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
    }

    std::size_t inputs_ = 0;
    std::size_t hidden_ = 0;
    std::size_t outputs_ = 0;
    std::vector<Matrix> params_;
};

struct TrainSchedule {
    int epochs = 30;
    std::size_t batch = 128;
    double lr = 1e-3;
};

/// Loss and gradients of one mini-batch.
struct BatchResult {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Rows of `x` selected by `rows`.
inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

/// Shuffled mini-batch Adam over `n` rows. `step(batch_rows)` returns the batch
/// loss and gradients for `params`. Returns the mean loss of every epoch.
///
/// Aborts when an epoch's mean loss exceeds 10x the first batch loss.
template <class StepFn>
std::vector<double> train_minibatch(std::vector<Matrix>& params, std::size_t n,
                                    const TrainSchedule& schedule, Rng& rng, StepFn&& step) {
    if (n == 0) {
        throw std::invalid_argument("train_minibatch: no training rows");
    }
    if (schedule.epochs < 0 || schedule.batch == 0) {
        throw std::invalid_argument("train_minibatch: epochs must be >= 0 and batch >= 1");
    }
    AdamState adam(params, AdamConfig{.lr = schedule.lr});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> epoch_losses;
    epoch_losses.reserve(static_cast<std::size_t>(schedule.epochs));
    double initial = -1.0;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += schedule.batch) {
            const std::size_t stop = std::min(n, start + schedule.batch);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            BatchResult r = step(rows);
            if (!std::isfinite(r.loss)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch));
            }
            if (initial < 0.0) {
                initial = r.loss;
            }
            adam.apply(params, r.grads);
            total += r.loss;
            ++batches;
        }
        const double mean = total / static_cast<double>(batches);
        epoch_losses.push_back(mean);
        if (initial > 0.0 && mean > 10.0 * initial) {
            throw std::runtime_error("training diverged: epoch " + std::to_string(epoch) +
                                     " loss " + std::to_string(mean) + " exceeds 10x initial " +
                                     std::to_string(initial));
        }
    }
    return epoch_losses;
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
inline double softmax_xent(const Matrix& logits, std::span<const std::size_t> targets, Matrix& d_logits) {
    const Matrix p = softmax_rows(logits);
    d_logits = p;
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(logits.rows());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]);
        loss -= std::log(std::max(p(r, t), kLogFloor));
        d_logits(r, t) -= 1.0;
    }
    d_logits *= inv;
    return loss * inv;
}

/// Mean KL(softmax(logits) || uniform) and its gradient with respect to the logits.
inline double softmax_kl_uniform(const Matrix& logits, Matrix& d_logits) {
    const Matrix p = softmax_rows(logits);
    d_logits.resize(p.rows(), p.cols());
    const double inv = 1.0 / static_cast<double>(logits.rows());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const Vector pr = p.row(r).transpose();
        loss += kl_to_uniform(pr);
        double neg_entropy = 0.0;
        for (Eigen::Index j = 0; j < pr.size(); ++j) {
            if (pr[j] > 0.0) {
                neg_entropy += pr[j] * std::log(pr[j]);
            }
        }
        for (Eigen::Index j = 0; j < pr.size(); ++j) {
            const double lp = pr[j] > 0.0 ? std::log(pr[j]) : 0.0;
            d_logits(r, j) = pr[j] * (lp - neg_entropy) * inv;
        }
    }
    return loss * inv;
}

}  // namespace icot
