#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "qpt/network.hpp"
#include "qpt/rng.hpp"

namespace qpt {

/// Mean squared error over every element of the batch, with its gradient.
inline std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape != target.shape)
        throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape_string() + " vs " +
                                    target.shape_string());
    const double n = static_cast<double>(pred.numel());
    Tensor grad(pred.shape);
    grad.data = pred.data - target.data;
    const double loss = grad.data.squaredNorm() / n;
    grad.data *= 2.0 / n;
    return {loss, std::move(grad)};
}

/// Adaptive moment estimation over a fixed parameter list.
class Adam {
  public:
    Adam(std::vector<Tensor*> params, std::vector<Tensor*> grads, double lr = 1e-3,
         double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : params_(std::move(params)), grads_(std::move(grads)), lr_(lr), beta1_(beta1),
          beta2_(beta2), epsilon_(epsilon) {
        if (params_.size() != grads_.size())
            throw std::invalid_argument("Adam: parameter/gradient list mismatch");
        for (Tensor* p : params_) {
            m_.emplace_back(Eigen::VectorXd::Zero(p->numel()));
            v_.emplace_back(Eigen::VectorXd::Zero(p->numel()));
        }
    }

    void set_learning_rate(double lr) { lr_ = lr; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            const Eigen::VectorXd& g = grads_[i]->data;
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
            params_[i]->data.array() -=
                lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + epsilon_);
        }
    }

  private:
    std::vector<Tensor*> params_, grads_;
    std::vector<Eigen::VectorXd> m_, v_;
    double lr_, beta1_, beta2_, epsilon_;
    long t_ = 0;
};

struct TrainOptions {
    int epochs = 20;
    Eigen::Index batch_size = 32;
    double learning_rate = 1e-3;
    double lr_decay = 1.0;  // multiplicative per-epoch factor
    int early_stop_patience = 5;
    uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> train_losses;
    std::vector<double> val_losses;
    int epochs_run = 0;
    double final_val_mse = 0.0;
};

struct TrainingError : std::runtime_error {
    int epoch;
    explicit TrainingError(int epoch_, const std::string& what_)
        : std::runtime_error(what_), epoch(epoch_) {}
};

inline double validation_loss(Network& net, const Tensor& val_x, const Tensor& val_y) {
    Tensor pred = net.predict(val_x);
    return mse_loss(pred, val_y).first;
}

/// Mini-batch back-propagation with Adam. The validation loss is evaluated at
/// every epoch; training stops early after `early_stop_patience` epochs with
/// no improvement. Deterministic given the seed (single worker).
inline TrainReport train(Network& net, const Tensor& train_x, const Tensor& train_y,
                         const Tensor& val_x, const Tensor& val_y, const TrainOptions& opts) {
    if (train_x.dim(0) != train_y.dim(0))
        throw std::invalid_argument("train: input/target count mismatch");
    Adam optimizer(net.parameters(), net.gradients(), opts.learning_rate);
    Rng rng = make_rng(opts.seed);
    const Eigen::Index n = train_x.dim(0);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    int stagnant = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        optimizer.set_learning_rate(opts.learning_rate * std::pow(opts.lr_decay, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
            const Eigen::Index stop = std::min(start + opts.batch_size, n);
            if (stop - start < 2 && n >= 2) continue;  // batchnorm needs >= 2 in training
            std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + stop);
            Tensor bx = train_x.gather_rows(idx);
            Tensor by = train_y.gather_rows(idx);
            net.zero_gradients();
            Tensor pred = net.forward(bx, true);
            auto [loss, grad] = mse_loss(pred, by);
            if (!std::isfinite(loss))
                throw TrainingError(epoch, "train: non-finite loss at epoch " +
                                               std::to_string(epoch));
            net.backward(grad);
            optimizer.step();
            loss_sum += loss * static_cast<double>(stop - start);
            seen += stop - start;
        }
        report.train_losses.push_back(loss_sum / static_cast<double>(seen));
        const double val = validation_loss(net, val_x, val_y);
        if (!std::isfinite(val))
            throw TrainingError(epoch, "train: non-finite validation loss at epoch " +
                                           std::to_string(epoch));
        report.val_losses.push_back(val);
        report.epochs_run = epoch + 1;
        if (val < best_val - 1e-15) {
            best_val = val;
            stagnant = 0;
        } else if (++stagnant >= opts.early_stop_patience) {
            break;
        }
    }
    report.final_val_mse = report.val_losses.empty() ? 0.0 : report.val_losses.back();
    return report;
}

}  // namespace qpt
