#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fdia/dataset/normalizer.hpp"
#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"
#include "fdia/neural/lstm.hpp"

namespace fdia::neural {

struct DaeConfig {
    int window = 5;
    int n_states = 60;
    int enc1_units = 32;
    int enc2_units = 16;
    int dec1_units = 32;
    CellActivation activation = CellActivation::relu;
    int slack_index = 0;  // full-layout state coordinate pinned to zero

    friend bool operator==(const DaeConfig&, const DaeConfig&) = default;
};

/// Encoder LSTM -> encoder LSTM -> repeat of the final encoding -> decoder LSTM
/// -> per-timestep dense head. Used both for weights and for their gradients.
struct DaeParams {
    LstmLayer enc1;
    LstmLayer enc2;
    LstmLayer dec1;
    Matrix head_w;  // n_states x dec1_units
    Vector head_b;

    static DaeParams zeros(const DaeConfig& cfg) {
        return {LstmLayer::zeros(cfg.n_states, cfg.enc1_units), LstmLayer::zeros(cfg.enc1_units, cfg.enc2_units),
                LstmLayer::zeros(cfg.enc2_units, cfg.dec1_units), Matrix::Zero(cfg.n_states, cfg.dec1_units),
                Vector::Zero(cfg.n_states)};
    }
};

/// Calls f(name, tensor) for every parameter tensor in a fixed order. `tensor`
/// is an Eigen matrix or vector reference (const if `params` is const).
template <class Params, class F>
void for_each_tensor(Params& params, F&& f) {
    f(std::string_view("enc1.w_in"), params.enc1.w_in);
    f(std::string_view("enc1.w_rec"), params.enc1.w_rec);
    f(std::string_view("enc1.bias"), params.enc1.bias);
    f(std::string_view("enc2.w_in"), params.enc2.w_in);
    f(std::string_view("enc2.w_rec"), params.enc2.w_rec);
    f(std::string_view("enc2.bias"), params.enc2.bias);
    f(std::string_view("dec1.w_in"), params.dec1.w_in);
    f(std::string_view("dec1.w_rec"), params.dec1.w_rec);
    f(std::string_view("dec1.bias"), params.dec1.bias);
    f(std::string_view("head.w"), params.head_w);
    f(std::string_view("head.b"), params.head_b);
}

/// Same traversal over two parameter sets of identical shape.
template <class A, class B, class F>
void for_each_tensor_pair(A& a, B& b, F&& f) {
    f(a.enc1.w_in, b.enc1.w_in);
    f(a.enc1.w_rec, b.enc1.w_rec);
    f(a.enc1.bias, b.enc1.bias);
    f(a.enc2.w_in, b.enc2.w_in);
    f(a.enc2.w_rec, b.enc2.w_rec);
    f(a.enc2.bias, b.enc2.bias);
    f(a.dec1.w_in, b.dec1.w_in);
    f(a.dec1.w_rec, b.dec1.w_rec);
    f(a.dec1.bias, b.dec1.bias);
    f(a.head_w, b.head_w);
    f(a.head_b, b.head_b);
}

inline std::size_t parameter_count(const DaeParams& p) {
    std::size_t n = 0;
    for_each_tensor(p, [&](std::string_view, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

struct DaeModel {
    DaeConfig config;
    DaeParams params;
    dataset::Normalizer normalizer;
    int epochs_trained = 0;
};

inline void validate_config(const DaeConfig& cfg) {
    if (cfg.window < 2) throw ValidationError("window must be at least 2");
    if (cfg.n_states < 1 || cfg.enc1_units < 1 || cfg.enc2_units < 1 || cfg.dec1_units < 1) {
        throw ValidationError("layer sizes must be positive");
    }
}

/// Glorot-uniform weights, zero biases except the forget-gate slice set to 1.
inline DaeParams init_params(const DaeConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](Matrix& m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
    };
    DaeParams p = DaeParams::zeros(cfg);
    for (LstmLayer* layer : {&p.enc1, &p.enc2, &p.dec1}) {
        glorot(layer->w_in);
        glorot(layer->w_rec);
        layer->bias.segment(layer->units(), layer->units()).setOnes();
    }
    glorot(p.head_w);
    return p;
}

inline DaeModel make_model(const DaeConfig& cfg, dataset::Normalizer normalizer, std::uint64_t seed) {
    require_dim(normalizer.size() == cfg.n_states, "normalizer size must equal n_states");
    return {cfg, init_params(cfg, seed), std::move(normalizer), 0};
}

/// Every intermediate of one forward pass.
struct DaeTrace {
    LstmTrace enc1, enc2, dec1;
    Sequence repeated;
    Sequence outputs;
};

inline DaeTrace forward_trace(const DaeParams& p, CellActivation act, const Sequence& inputs) {
    require_dim(!inputs.empty(), "empty input sequence");
    require_dim(inputs.front().rows() == p.enc1.input_dim(), "input feature count does not match model");
    DaeTrace t;
    t.enc1 = lstm_forward(p.enc1, act, inputs);
    t.enc2 = lstm_forward(p.enc2, act, t.enc1.h);
    t.repeated.assign(inputs.size(), t.enc2.h.back());
    t.dec1 = lstm_forward(p.dec1, act, t.repeated);
    t.outputs.reserve(inputs.size());
    for (const auto& h : t.dec1.h) {
        Matrix y = p.head_w * h;
        y.colwise() += p.head_b;
        t.outputs.push_back(std::move(y));
    }
    return t;
}

/// Outputs for a normalized batch; the window length must match the model.
inline Sequence forward(const DaeModel& model, const Sequence& inputs) {
    require_dim(static_cast<int>(inputs.size()) == model.config.window, "window length does not match model");
    return forward_trace(model.params, model.config.activation, inputs).outputs;
}

inline double mse(const Sequence& outputs, const Sequence& targets) {
    require_dim(outputs.size() == targets.size(), "output/target length mismatch");
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t t = 0; t < outputs.size(); ++t) {
        require_dim(outputs[t].rows() == targets[t].rows() && outputs[t].cols() == targets[t].cols(),
                    "output/target shape mismatch");
        sum += (outputs[t] - targets[t]).squaredNorm();
        count += static_cast<double>(outputs[t].size());
    }
    if (count == 0.0) throw ValidationError("empty batch");
    return sum / count;
}

/// Root mean square error over every element of the batch.
inline double loss(const Sequence& outputs, const Sequence& targets) { return std::sqrt(mse(outputs, targets)); }

struct BackwardResult {
    DaeParams grad;
    double mse = 0.0;
};

/// Exact gradient of the mean squared error via backpropagation through time.
inline BackwardResult backward(const DaeModel& model, const Sequence& inputs, const Sequence& targets) {
    const auto& p = model.params;
    const auto act = model.config.activation;
    const DaeTrace t = forward_trace(p, act, inputs);
    BackwardResult out{DaeParams::zeros(model.config), mse(t.outputs, targets)};
    auto& g = out.grad;

    const auto steps = inputs.size();
    const double scale = 2.0 / static_cast<double>(steps * targets.front().size());
    Sequence d_dec(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const Matrix dy = scale * (t.outputs[k] - targets[k]);
        g.head_w.noalias() += dy * t.dec1.h[k].transpose();
        g.head_b += dy.rowwise().sum();
        d_dec[k].noalias() = p.head_w.transpose() * dy;
    }
    const Sequence d_rep = lstm_backward(p.dec1, act, t.dec1, d_dec, g.dec1);
    Sequence d_enc2(steps);
    d_enc2.back() = d_rep.front();
    for (std::size_t k = 1; k < steps; ++k) d_enc2.back() += d_rep[k];
    const Sequence d_enc1 = lstm_backward(p.enc2, act, t.enc2, d_enc2, g.enc2);
    lstm_backward(p.enc1, act, t.enc1, d_enc1, g.enc1);

    bool finite = std::isfinite(out.mse);
    for_each_tensor(g, [&](std::string_view, const auto& tensor) { finite = finite && tensor.allFinite(); });
    if (!finite) throw NumericalError("non-finite loss or gradient in backward pass");
    return out;
}

/// Packs windows into time-major batches: element t holds row t of every sample.
inline Sequence pack(const std::vector<dataset::WindowSample>& samples, const std::vector<std::size_t>& index,
                     bool targets) {
    require_dim(!index.empty(), "empty batch");
    const auto& first = samples[index.front()];
    const int w = first.window();
    const int n = first.state_count();
    Sequence seq(w, Matrix(n, static_cast<Eigen::Index>(index.size())));
    for (std::size_t b = 0; b < index.size(); ++b) {
        const auto& rows = targets ? samples[index[b]].target : samples[index[b]].inputs;
        require_dim(rows.rows() == w && rows.cols() == n, "inconsistent window shape in batch");
        for (int t = 0; t < w; ++t) seq[t].col(static_cast<Eigen::Index>(b)) = rows.row(t).transpose();
    }
    return seq;
}

/// Unpacks column `b` of a time-major batch into a (w x n) row matrix.
inline dataset::Rows unpack(const Sequence& seq, Eigen::Index b) {
    dataset::Rows rows(static_cast<Eigen::Index>(seq.size()), seq.front().rows());
    for (std::size_t t = 0; t < seq.size(); ++t) rows.row(static_cast<Eigen::Index>(t)) = seq[t].col(b).transpose();
    return rows;
}

}  // namespace fdia::neural
