#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fdia/error.hpp"

namespace fdia::neural {

/// Column-major activations: one column per batch element.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Time-major sequence; element t is (features x batch).
using Sequence = std::vector<Matrix>;

/// Nonlinearity applied to the cell state on the output path, h = o * act(c).
enum class CellActivation { relu, tanh };

/// LSTM weights. Gate blocks are stacked in the order input, forget, cell
/// candidate, output, each `units` rows tall.
struct LstmLayer {
    Matrix w_in;   // 4U x D
    Matrix w_rec;  // 4U x U
    Vector bias;   // 4U

    static LstmLayer zeros(int input_dim, int units) {
        return {Matrix::Zero(4 * units, input_dim), Matrix::Zero(4 * units, units), Vector::Zero(4 * units)};
    }

    int units() const noexcept { return static_cast<int>(w_rec.cols()); }
    int input_dim() const noexcept { return static_cast<int>(w_in.cols()); }
};

/// Activations cached for backpropagation through one timestep.
struct LstmStep {
    Matrix x, h_prev, c_prev;
    Matrix i, f, g, o;
    Matrix c, act;
};

struct LstmTrace {
    std::vector<LstmStep> steps;
    Sequence h;
};

namespace detail {

inline Matrix sigmoid(const Matrix& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

inline Matrix cell_activation(const Matrix& c, CellActivation act) {
    return act == CellActivation::relu ? Matrix(c.cwiseMax(0.0)) : Matrix(c.array().tanh().matrix());
}

inline Matrix cell_activation_grad(const LstmStep& s, CellActivation act) {
    if (act == CellActivation::relu) return (s.c.array() > 0.0).cast<double>().matrix();
    return (1.0 - s.act.array().square()).matrix();
}

}  // namespace detail

/// Runs the layer over a sequence starting from zero hidden and cell state.
inline LstmTrace lstm_forward(const LstmLayer& layer, CellActivation act, const Sequence& xs) {
    const int u = layer.units();
    LstmTrace trace;
    if (xs.empty()) return trace;
    const auto batch = xs.front().cols();
    Matrix h = Matrix::Zero(u, batch);
    Matrix c = Matrix::Zero(u, batch);
    trace.steps.reserve(xs.size());
    trace.h.reserve(xs.size());
    for (const auto& x : xs) {
        require_dim(x.rows() == layer.input_dim() && x.cols() == batch, "LSTM input shape mismatch");
        Matrix a = layer.w_in * x + layer.w_rec * h;
        a.colwise() += layer.bias;
        LstmStep s;
        s.x = x;
        s.h_prev = h;
        s.c_prev = c;
        s.i = detail::sigmoid(a.topRows(u));
        s.f = detail::sigmoid(a.middleRows(u, u));
        s.g = a.middleRows(2 * u, u).array().tanh().matrix();
        s.o = detail::sigmoid(a.bottomRows(u));
        s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
        s.act = detail::cell_activation(s.c, act);
        h = s.o.cwiseProduct(s.act);
        c = s.c;
        trace.h.push_back(h);
        trace.steps.push_back(std::move(s));
    }
    return trace;
}

/// Backpropagation through time. `dh[t]` is the loss gradient arriving at the
/// hidden output of step t (empty matrices count as zero). Parameter gradients
/// are accumulated into `grad`; the return value holds the input gradients.
inline Sequence lstm_backward(const LstmLayer& layer, CellActivation act, const LstmTrace& trace,
                              const Sequence& dh, LstmLayer& grad) {
    const int u = layer.units();
    const auto steps = trace.steps.size();
    require_dim(dh.size() == steps, "gradient sequence length mismatch");
    Sequence dx(steps);
    if (steps == 0) return dx;
    const auto batch = trace.steps.front().x.cols();
    Matrix dh_next = Matrix::Zero(u, batch);
    Matrix dc_next = Matrix::Zero(u, batch);
    Matrix da(4 * u, batch);
    for (std::size_t k = steps; k-- > 0;) {
        const auto& s = trace.steps[k];
        Matrix dh_total = dh_next;
        if (dh[k].size() != 0) dh_total += dh[k];
        const Matrix d_out = dh_total.cwiseProduct(s.act);
        const Matrix dc = dh_total.cwiseProduct(s.o).cwiseProduct(detail::cell_activation_grad(s, act)) + dc_next;
        da.topRows(u) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
        da.middleRows(u, u) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
        da.middleRows(2 * u, u) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
        da.bottomRows(u) = d_out.cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
        grad.w_in.noalias() += da * s.x.transpose();
        grad.w_rec.noalias() += da * s.h_prev.transpose();
        grad.bias += da.rowwise().sum();
        dx[k].noalias() = layer.w_in.transpose() * da;
        dh_next.noalias() = layer.w_rec.transpose() * da;
        dc_next = dc.cwiseProduct(s.f);
    }
    return dx;
}

}  // namespace fdia::neural
