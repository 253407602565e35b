#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/grid/network.hpp"
#include "fdia/neural/dae.hpp"

namespace fdia::pipeline {

using grid::StateVector;

/// Thrown when correction is requested before the queue holds w-1 states.
class BootstrapError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

/// The last w-1 trusted (normal or corrected) states, oldest first.
class StateQueue {
  public:
    explicit StateQueue(int capacity) : capacity_(capacity) {
        if (capacity < 1) throw ValidationError("queue capacity must be positive");
    }

    int capacity() const noexcept { return capacity_; }
    int size() const noexcept { return static_cast<int>(items_.size()); }
    bool full() const noexcept { return size() == capacity_; }
    const StateVector& operator[](int k) const { return items_.at(static_cast<std::size_t>(k)); }
    const StateVector& newest() const {
        if (items_.empty()) throw ValidationError("queue is empty");
        return items_.back();
    }

    void push(StateVector x) {
        if (!items_.empty()) require_dim(x.bus_count() == items_.front().bus_count(), "queue state dimension mismatch");
        items_.push_back(std::move(x));
        while (size() > capacity_) items_.pop_front();
    }

  private:
    int capacity_;
    std::deque<StateVector> items_;
};

/// Fills a fresh queue of capacity w-1 with the last w-1 of `states`.
inline StateQueue warm_up(int window, const std::vector<StateVector>& states) {
    if (window < 2) throw ValidationError("window must be at least 2");
    StateQueue q(window - 1);
    if (static_cast<int>(states.size()) < q.capacity()) {
        throw ValidationError("warm-up needs at least " + std::to_string(q.capacity()) + " states, got " +
                              std::to_string(states.size()));
    }
    for (auto it = states.end() - q.capacity(); it != states.end(); ++it) q.push(*it);
    return q;
}

struct IdentificationThresholds {
    double theta = 0.01;  // rad
    double v = 0.01;      // p.u.

    void validate() const {
        if (!(theta > 0.0) || !(v > 0.0)) throw ValidationError("identification thresholds must be positive");
    }
};

struct Identification {
    std::vector<int> flagged;  // full-layout coordinates, ascending
    Eigen::VectorXd deltas;    // |attacked - corrected| per coordinate
};

/// Flags angle coordinates whose delta exceeds `theta` and magnitude
/// coordinates whose delta exceeds `v`.
inline Identification identify(const StateVector& attacked, const StateVector& corrected,
                               const IdentificationThresholds& thresholds) {
    require_dim(attacked.bus_count() == corrected.bus_count(), "state dimension mismatch");
    const int n_bus = attacked.bus_count();
    Identification out;
    out.deltas = (attacked.to_flat() - corrected.to_flat()).cwiseAbs();
    for (int k = 0; k < 2 * n_bus; ++k) {
        const double limit = k < n_bus ? thresholds.theta : thresholds.v;
        if (out.deltas[k] > limit) out.flagged.push_back(k);
    }
    return out;
}

struct CorrectionOutcome {
    StateVector corrected;
    std::vector<int> flagged;
    Eigen::VectorXd deltas;
};

/// Runs the DAE over [queue, attacked] and returns the reconstructed last row.
/// The slack angle of the result is pinned to zero.
inline StateVector reconstruct(const neural::DaeModel& model, const StateQueue& queue, const StateVector& attacked) {
    const int w = model.config.window;
    const int n = model.config.n_states;
    require_dim(attacked.size() == n, "state dimension does not match model");
    if (!queue.full() || queue.capacity() != w - 1) {
        throw BootstrapError("state queue holds " + std::to_string(queue.size()) + " of " + std::to_string(w - 1) +
                             " states; warm it up with trusted states before correcting");
    }
    dataset::Rows rows(w, n);
    for (int t = 0; t + 1 < w; ++t) rows.row(t) = queue[t].to_flat().transpose();
    rows.row(w - 1) = attacked.to_flat().transpose();
    const dataset::Rows normed = model.normalizer.apply(rows);
    neural::Sequence in(w, neural::Matrix(n, 1));
    for (int t = 0; t < w; ++t) in[t].col(0) = normed.row(t).transpose();
    const neural::Sequence out = neural::forward(model, in);
    dataset::Rows last(1, n);
    last.row(0) = out.back().col(0).transpose();
    Eigen::VectorXd flat = model.normalizer.invert(last).row(0).transpose();
    if (!flat.allFinite()) throw NumericalError("model produced a non-finite correction");
    const int slack = model.config.slack_index;
    if (slack >= 0 && slack < n) flat[slack] = 0.0;
    return StateVector::from_flat(flat);
}

/// One step of the online loop: correct, identify, and feed the correction back.
inline CorrectionOutcome correct(const neural::DaeModel& model, StateQueue& queue, const StateVector& attacked,
                                 const IdentificationThresholds& thresholds = {}) {
    thresholds.validate();
    CorrectionOutcome out;
    out.corrected = reconstruct(model, queue, attacked);
    auto id = identify(attacked, out.corrected, thresholds);
    out.flagged = std::move(id.flagged);
    out.deltas = std::move(id.deltas);
    queue.push(out.corrected);
    return out;
}

}  // namespace fdia::pipeline
