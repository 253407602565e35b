#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <ostream>
#include <vector>

#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"
#include "fdia/neural/dae.hpp"
#include "fdia/pipeline/pipeline.hpp"

namespace fdia::app {

/// Last-row reconstruction of every test window, in physical state units.
struct Predictions {
    Eigen::MatrixXd actual;     // windows x n_states
    Eigen::MatrixXd attacked;
    Eigen::MatrixXd corrected;
    std::vector<std::vector<std::uint8_t>> masks;
};

/// Fixed-width histogram on [0, max]; values beyond max fall in the last bin so
/// that the counts always sum to the number of samples.
struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::size_t above_range = 0;  // how many of the last bin's entries exceed max

    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

inline Histogram make_histogram(const Eigen::Ref<const Eigen::ArrayXd>& values, int bins, double max) {
    if (bins < 1 || !(max > 0.0)) throw ValidationError("histogram needs bins >= 1 and max > 0");
    Histogram h;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = max * static_cast<double>(b) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        const double v = values[k];
        if (!std::isfinite(v) || v < 0.0) throw NumericalError("histogram value must be finite and non-negative");
        int b = static_cast<int>(std::floor(v / max * bins));
        if (v > max) ++h.above_range;
        h.counts[std::min(std::max(b, 0), bins - 1)]++;
    }
    return h;
}

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    double tpr() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
    double fpr() const { return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }
    double accuracy() const {
        const auto n = tp + fp + fn + tn;
        return n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
    }
};

struct EvalReport {
    std::size_t windows = 0;
    double overall_rmse = 0.0;   // corrected vs actual, last row
    double attacked_rmse = 0.0;  // attacked vs actual, last row
    Eigen::VectorXd per_state_rmse;
    Histogram histogram;
    std::vector<Confusion> per_state;
    Confusion identification;
    double window_rmse_normalized = 0.0;  // model loss over whole windows
    pipeline::IdentificationThresholds thresholds;
};

/// Runs the model over raw (un-normalized) windows and keeps the last row.
inline Predictions predict(const neural::DaeModel& model, const std::vector<dataset::WindowSample>& samples,
                           double* window_rmse_normalized = nullptr) {
    if (samples.empty()) throw ValidationError("no windows to evaluate");
    const int w = model.config.window;
    const int n = model.config.n_states;
    Predictions p;
    const auto count = static_cast<Eigen::Index>(samples.size());
    p.actual.resize(count, n);
    p.attacked.resize(count, n);
    p.corrected.resize(count, n);
    p.masks.reserve(samples.size());
    double se = 0.0;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        const std::size_t len = std::min(kChunk, samples.size() - start);
        std::vector<dataset::WindowSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                                 samples.begin() + static_cast<std::ptrdiff_t>(start + len));
        for (const auto& s : chunk) {
            if (s.window() != w || s.state_count() != n) {
                throw DimensionError("dataset windows are " + std::to_string(s.window()) + "x" +
                                     std::to_string(s.state_count()) + " but the model expects " + std::to_string(w) +
                                     "x" + std::to_string(n));
            }
        }
        dataset::normalize(chunk, model.normalizer);
        std::vector<std::size_t> idx(len);
        for (std::size_t b = 0; b < len; ++b) idx[b] = b;
        const auto in = neural::pack(chunk, idx, false);
        const auto tg = neural::pack(chunk, idx, true);
        const auto out = neural::forward(model, in);
        se += neural::mse(out, tg) * static_cast<double>(w * n * len);
        dataset::Rows last(static_cast<Eigen::Index>(len), n);
        last = out.back().transpose();
        const dataset::Rows phys = model.normalizer.invert(last);
        for (std::size_t b = 0; b < len; ++b) {
            const auto& s = samples[start + b];
            const auto r = static_cast<Eigen::Index>(start + b);
            p.actual.row(r) = s.target.row(w - 1);
            p.attacked.row(r) = s.inputs.row(w - 1);
            p.corrected.row(r) = phys.row(static_cast<Eigen::Index>(b));
            if (model.config.slack_index >= 0 && model.config.slack_index < n) {
                p.corrected(r, model.config.slack_index) = 0.0;
            }
            p.masks.push_back(s.attack_mask);
        }
    }
    if (!p.corrected.allFinite()) throw NumericalError("model produced non-finite corrections");
    if (window_rmse_normalized) {
        *window_rmse_normalized = std::sqrt(se / static_cast<double>(w * n) / static_cast<double>(samples.size()));
    }
    return p;
}

inline EvalReport evaluate(const Predictions& p, const pipeline::IdentificationThresholds& thresholds, int bins,
                           double hist_max) {
    thresholds.validate();
    const auto rows = p.actual.rows();
    const auto n = p.actual.cols();
    if (rows == 0) throw ValidationError("no predictions to evaluate");
    require_dim(p.corrected.rows() == rows && p.corrected.cols() == n && p.attacked.rows() == rows &&
                    p.attacked.cols() == n && static_cast<Eigen::Index>(p.masks.size()) == rows,
                "prediction shapes differ");
    EvalReport r;
    r.windows = static_cast<std::size_t>(rows);
    r.thresholds = thresholds;
    const Eigen::ArrayXXd err = (p.corrected - p.actual).array();
    r.overall_rmse = std::sqrt(err.square().mean());
    r.attacked_rmse = std::sqrt((p.attacked - p.actual).array().square().mean());
    r.per_state_rmse = err.square().colwise().mean().sqrt().transpose().matrix();
    const Eigen::ArrayXXd abs_err = err.abs();
    r.histogram = make_histogram(abs_err.reshaped(), bins, hist_max);
    r.per_state.assign(static_cast<std::size_t>(n), {});
    for (Eigen::Index k = 0; k < rows; ++k) {
        const auto id = pipeline::identify(grid::StateVector::from_flat(p.attacked.row(k).transpose()),
                                           grid::StateVector::from_flat(p.corrected.row(k).transpose()), thresholds);
        std::vector<bool> flagged(static_cast<std::size_t>(n), false);
        for (int f : id.flagged) flagged[static_cast<std::size_t>(f)] = true;
        for (Eigen::Index s = 0; s < n; ++s) {
            auto& c = r.per_state[static_cast<std::size_t>(s)];
            const bool attacked = p.masks[static_cast<std::size_t>(k)][static_cast<std::size_t>(s)] != 0;
            const bool f = flagged[static_cast<std::size_t>(s)];
            if (attacked && f) ++c.tp;
            else if (attacked) ++c.fn;
            else if (f) ++c.fp;
            else ++c.tn;
        }
    }
    for (const auto& c : r.per_state) r.identification += c;
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    using nlohmann::json;
    json per_state = json::array();
    for (std::size_t k = 0; k < r.per_state.size(); ++k) {
        const auto& c = r.per_state[k];
        per_state.push_back({{"state", k}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
    }
    return json{
        {"windows", r.windows},
        {"overall_rmse", r.overall_rmse},
        {"attacked_rmse", r.attacked_rmse},
        {"correction_ratio", r.attacked_rmse > 0.0 ? r.overall_rmse / r.attacked_rmse : 0.0},
        {"window_rmse_normalized", r.window_rmse_normalized},
        {"per_state_rmse", std::vector<double>(r.per_state_rmse.data(), r.per_state_rmse.data() + r.per_state_rmse.size())},
        {"max_state_rmse", r.per_state_rmse.maxCoeff()},
        {"histogram",
         {{"edges", r.histogram.edges}, {"counts", r.histogram.counts}, {"above_range", r.histogram.above_range}}},
        {"identification",
         {{"theta_thresh", r.thresholds.theta},
          {"v_thresh", r.thresholds.v},
          {"accuracy", r.identification.accuracy()},
          {"true_positive_rate", r.identification.tpr()},
          {"false_positive_rate", r.identification.fpr()},
          {"tp", r.identification.tp},
          {"fp", r.identification.fp},
          {"fn", r.identification.fn},
          {"tn", r.identification.tn},
          {"per_state", per_state}}},
    };
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
    out.precision(17);
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        out << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
    }
}

/// One line per (window, state) element with full-precision values.
inline void write_predictions_csv(std::ostream& out, const Predictions& p) {
    out.precision(17);
    out << "window,state,actual,attacked,corrected,attacked_flag\n";
    for (Eigen::Index k = 0; k < p.actual.rows(); ++k) {
        for (Eigen::Index s = 0; s < p.actual.cols(); ++s) {
            out << k << ',' << s << ',' << p.actual(k, s) << ',' << p.attacked(k, s) << ',' << p.corrected(k, s) << ','
                << static_cast<int>(p.masks[static_cast<std::size_t>(k)][static_cast<std::size_t>(s)]) << '\n';
        }
    }
}

}  // namespace fdia::app
