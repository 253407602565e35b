#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"
#include "fdia/neural/dae.hpp"

namespace fdia::neural {

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    int epochs = 15;
    int batch_size = 128;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 1;
    double clip_norm = 5.0;  // <= 0 disables clipping
    int patience = 0;        // epochs without validation improvement before stopping; 0 disables

    void validate() const {
        if (epochs < 1) throw ValidationError("epochs must be at least 1");
        if (batch_size < 1) throw ValidationError("batch size must be positive");
        if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    }
};

struct EpochStats {
    int epoch;
    double train_rmse;
    double val_rmse;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
};

inline double global_norm(const DaeParams& g) {
    double sq = 0.0;
    for_each_tensor(g, [&](std::string_view, const auto& t) { sq += t.squaredNorm(); });
    return std::sqrt(sq);
}

/// Rescales the gradient so its global L2 norm is at most `max_norm`.
inline void clip_gradients(DaeParams& g, double max_norm) {
    if (!(max_norm > 0.0)) return;
    const double norm = global_norm(g);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for_each_tensor(g, [&](std::string_view, auto& t) { t *= s; });
    }
}

class Optimizer {
  public:
    Optimizer(const DaeConfig& cfg, OptimizerKind kind, double lr)
        : kind_(kind), lr_(lr), m_(DaeParams::zeros(cfg)), v_(DaeParams::zeros(cfg)) {}

    void step(DaeParams& params, const DaeParams& grad) {
        if (kind_ == OptimizerKind::sgd) {
            for_each_tensor_pair(params, grad, [&](auto& p, const auto& g) { p -= lr_ * g; });
            return;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        const double step = lr_ * std::sqrt(c2) / c1;
        for_each_tensor_pair(m_, grad, [&](auto& m, const auto& g) { m = kBeta1 * m + (1.0 - kBeta1) * g; });
        for_each_tensor_pair(v_, grad,
                             [&](auto& v, const auto& g) { v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2(); });
        // Walk params, m and v together.
        auto update = [&](auto& p, const auto& m, const auto& v) {
            p.array() -= step * m.array() / (v.array().sqrt() + kEps);
        };
        update(params.enc1.w_in, m_.enc1.w_in, v_.enc1.w_in);
        update(params.enc1.w_rec, m_.enc1.w_rec, v_.enc1.w_rec);
        update(params.enc1.bias, m_.enc1.bias, v_.enc1.bias);
        update(params.enc2.w_in, m_.enc2.w_in, v_.enc2.w_in);
        update(params.enc2.w_rec, m_.enc2.w_rec, v_.enc2.w_rec);
        update(params.enc2.bias, m_.enc2.bias, v_.enc2.bias);
        update(params.dec1.w_in, m_.dec1.w_in, v_.dec1.w_in);
        update(params.dec1.w_rec, m_.dec1.w_rec, v_.dec1.w_rec);
        update(params.dec1.bias, m_.dec1.bias, v_.dec1.bias);
        update(params.head_w, m_.head_w, v_.head_w);
        update(params.head_b, m_.head_b, v_.head_b);
    }

  private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    OptimizerKind kind_;
    double lr_;
    long t_ = 0;
    DaeParams m_;
    DaeParams v_;
};

/// RMSE of the model over a (normalized) sample set, evaluated in chunks.
inline double evaluate_rmse(const DaeModel& model, const std::vector<dataset::WindowSample>& samples,
                            int chunk = 512) {
    if (samples.empty()) throw ValidationError("cannot evaluate on an empty set");
    double sum = 0.0;
    double count = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(chunk)) {
        idx.resize(std::min<std::size_t>(chunk, samples.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Sequence in = pack(samples, idx, false);
        const Sequence tg = pack(samples, idx, true);
        const Sequence out = forward(model, in);
        const double elems = static_cast<double>(tg.size() * tg.front().size());
        sum += mse(out, tg) * elems;
        count += elems;
    }
    return std::sqrt(sum / count);
}

/// Observer called after every epoch with the stats and the current model.
using EpochCallback = std::function<void(const EpochStats&, const DaeModel&, bool improved)>;

/// Mini-batch training on normalized windows. On return `model` holds the
/// best-validation weights; epoch numbers continue from `model.epochs_trained`.
inline TrainReport train(DaeModel& model, const std::vector<dataset::WindowSample>& train_set,
                         const std::vector<dataset::WindowSample>& val_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw ValidationError("training and validation sets must be non-empty");
    validate_config(model.config);

    std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(model.epochs_trained));
    Optimizer opt(model.config, cfg.optimizer, cfg.learning_rate);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    DaeModel best = model;
    int since_best = 0;
    const int first_epoch = model.epochs_trained + 1;
    for (int e = 0; e < cfg.epochs; ++e) {
        const int epoch = first_epoch + e;
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        double count = 0.0;
        std::vector<std::size_t> batch;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
            const Sequence in = pack(train_set, batch, false);
            const Sequence tg = pack(train_set, batch, true);
            BackwardResult br;
            try {
                br = backward(model, in, tg);
            } catch (const NumericalError& err) {
                throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                                     std::to_string(start) + ": " + err.what());
            }
            clip_gradients(br.grad, cfg.clip_norm);
            opt.step(model.params, br.grad);
            const double elems = static_cast<double>(tg.size() * tg.front().size());
            sum += br.mse * elems;
            count += elems;
        }
        model.epochs_trained = epoch;
        const EpochStats stats{epoch, std::sqrt(sum / count), evaluate_rmse(model, val_set)};
        if (!std::isfinite(stats.val_rmse)) {
            throw NumericalError("validation loss is not finite at epoch " + std::to_string(epoch));
        }
        report.epochs.push_back(stats);
        const bool improved = stats.val_rmse < report.best_val_rmse;
        if (improved) {
            report.best_val_rmse = stats.val_rmse;
            report.best_epoch = epoch;
            best = model;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (on_epoch) on_epoch(stats, model, improved);
        if (cfg.patience > 0 && since_best >= cfg.patience) {
            report.stopped_early = true;
            break;
        }
    }
    const int last_epoch = model.epochs_trained;
    model = std::move(best);
    model.epochs_trained = last_epoch;
    return report;
}

inline void write_report_csv(std::ostream& out, const TrainReport& report, bool header = true) {
    if (header) out << "epoch,train_rmse,val_rmse\n";
    out.precision(17);
    for (const auto& e : report.epochs) out << e.epoch << ',' << e.train_rmse << ',' << e.val_rmse << '\n';
}

}  // namespace fdia::neural
