#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"

namespace fdia::dataset {

/// Per-coordinate z-score. Coordinates with (near) zero spread, such as the slack
/// angle and PV voltage magnitudes, keep std = 1 and are listed in `clamped`.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<int> clamped;

    int size() const noexcept { return static_cast<int>(mean.size()); }

    Rows apply(const Rows& rows) const {
        require_dim(rows.cols() == mean.size(), "normalizer dimension mismatch");
        return ((rows.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix();
    }

    Rows invert(const Rows& rows) const {
        require_dim(rows.cols() == mean.size(), "normalizer dimension mismatch");
        return ((rows.array().rowwise() * std.transpose().array()).rowwise() + mean.transpose().array()).matrix();
    }

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline constexpr double kMinStd = 1e-9;

/// Fits mean/std over every input row of the training windows.
inline Normalizer fit_normalizer(const std::vector<WindowSample>& train) {
    if (train.empty()) throw ValidationError("cannot fit a normalizer on an empty training set");
    const auto n = train.front().inputs.cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    std::size_t count = 0;
    for (const auto& s : train) {
        require_dim(s.inputs.cols() == n, "inconsistent state dimension");
        sum += s.inputs.colwise().sum().transpose();
        count += static_cast<std::size_t>(s.inputs.rows());
    }
    Normalizer norm;
    norm.mean = sum / static_cast<double>(count);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
    for (const auto& s : train) {
        sq += (s.inputs.rowwise() - norm.mean.transpose()).array().square().colwise().sum().matrix().transpose();
    }
    norm.std = (sq / static_cast<double>(count)).cwiseSqrt();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (!(norm.std[k] > kMinStd)) {
            norm.std[k] = 1.0;
            norm.clamped.push_back(static_cast<int>(k));
        }
    }
    return norm;
}

/// Normalizes inputs and targets of every sample in place.
inline void normalize(std::vector<WindowSample>& samples, const Normalizer& norm) {
    for (auto& s : samples) {
        s.inputs = norm.apply(s.inputs);
        s.target = norm.apply(s.target);
    }
}

}  // namespace fdia::dataset
