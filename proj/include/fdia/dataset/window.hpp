#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fdia/attack/attack.hpp"
#include "fdia/error.hpp"
#include "fdia/grid/network.hpp"

namespace fdia::dataset {

using grid::StateVector;
using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One training window: rows are timesteps, columns are state coordinates in
/// the full 2N layout. The first w-1 input rows are normal states (plus AWGN),
/// the last input row is the attacked state; `target` is the clean window.
struct WindowSample {
    Rows inputs;
    Rows target;
    std::vector<std::uint8_t> attack_mask;
    long hour = 0;       // timestamp of the first row
    long last_hour = 0;  // timestamp of the attacked row

    int window() const noexcept { return static_cast<int>(inputs.rows()); }
    int state_count() const noexcept { return static_cast<int>(inputs.cols()); }

    friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

struct WindowOptions {
    int window = 5;
    int stride = 1;
    double awgn_sigma = 0.002;  // state units (rad / p.u.)
    int slack_index = 0;        // full-layout index kept noise-free
};

struct SkippedWindow {
    std::size_t start;
    std::string reason;
};

struct WindowBuild {
    std::vector<WindowSample> samples;
    std::vector<SkippedWindow> skipped;
};

/// Adapts the stealthy attacker to the window builder's attacker signature
/// (state, rng) -> optional state offset.
inline auto window_attacker(const attack::StealthyAttacker& attacker) {
    return [&attacker](const StateVector& x, std::mt19937_64& rng) -> std::optional<Eigen::VectorXd> {
        auto hit = attacker(x, rng);
        if (!hit) return std::nullopt;
        return hit->record.spec.c;
    };
}

/// Builds one window per entry of `starts` (index of the window's first state).
/// The last row of every window is replaced by state + c from `attacker`; the
/// first w-1 rows get AWGN. Windows whose attack fails are skipped and reported.
template <class Attacker>
WindowBuild build_windows_at(const std::vector<StateVector>& states, const std::vector<long>& hours,
                             const std::vector<std::size_t>& starts, const WindowOptions& opts,
                             Attacker&& attacker, std::mt19937_64& rng) {
    const int w = opts.window;
    if (w < 2) throw ValidationError("window size must be at least 2");
    if (opts.awgn_sigma < 0.0) throw ValidationError("AWGN sigma must be non-negative");
    if (states.size() < static_cast<std::size_t>(w)) throw ValidationError("fewer states than the window size");
    if (!hours.empty() && hours.size() != states.size()) throw DimensionError("hours and states differ in length");

    const int n = states.front().size();
    std::normal_distribution<double> gauss(0.0, opts.awgn_sigma > 0.0 ? opts.awgn_sigma : 1.0);
    WindowBuild out;
    for (const std::size_t start : starts) {
        if (start + w > states.size()) throw ValidationError("window start out of range");
        Rows target(w, n);
        for (int t = 0; t < w; ++t) {
            require_dim(states[start + t].size() == n, "inconsistent state dimension");
            target.row(t) = states[start + t].to_flat().transpose();
        }
        const std::optional<Eigen::VectorXd> c = attacker(states[start + w - 1], rng);
        if (!c) {
            out.skipped.push_back({start, "attacker failed to find a stealthy attack"});
            continue;
        }
        require_dim(c->size() == n, "attack vector length mismatch");
        WindowSample s;
        s.inputs = target;
        for (int t = 0; t + 1 < w; ++t) {
            for (int k = 0; k < n; ++k) {
                if (opts.awgn_sigma > 0.0 && k != opts.slack_index) s.inputs(t, k) += gauss(rng);
            }
        }
        s.inputs.row(w - 1) += c->transpose();
        s.attack_mask.resize(n);
        for (int k = 0; k < n; ++k) s.attack_mask[k] = (*c)[k] != 0.0 ? 1 : 0;
        s.target = std::move(target);
        s.hour = hours.empty() ? static_cast<long>(start) : hours[start];
        s.last_hour = hours.empty() ? static_cast<long>(start + w - 1) : hours[start + w - 1];
        out.samples.push_back(std::move(s));
    }
    return out;
}

/// Slides a window of `opts.window` consecutive states over the trajectory with
/// step `opts.stride`.
template <class Attacker>
WindowBuild build_windows(const std::vector<StateVector>& states, const std::vector<long>& hours,
                          const WindowOptions& opts, Attacker&& attacker, std::mt19937_64& rng) {
    if (opts.window < 2) throw ValidationError("window size must be at least 2");
    if (opts.stride < 1) throw ValidationError("window stride must be positive");
    if (states.size() < static_cast<std::size_t>(opts.window)) throw ValidationError("fewer states than the window size");
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + opts.window <= states.size(); s += static_cast<std::size_t>(opts.stride)) {
        starts.push_back(s);
    }
    return build_windows_at(states, hours, starts, opts, std::forward<Attacker>(attacker), rng);
}

/// `count` window start indices spread evenly over [first, last_start], both
/// ends included. Consecutive starts differ by at least one.
inline std::vector<std::size_t> spread_starts(std::size_t first, std::size_t last_start, std::size_t count) {
    if (count == 0) return {};
    if (last_start < first || last_start - first + 1 < count) {
        throw ValidationError("not enough hours for " + std::to_string(count) + " windows");
    }
    std::vector<std::size_t> out(count);
    const double span = static_cast<double>(last_start - first);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = count == 1 ? first
                            : first + static_cast<std::size_t>(std::floor(span * static_cast<double>(k) /
                                                                          static_cast<double>(count - 1)));
    }
    return out;
}

struct Fractions {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

enum class BoundaryMode {
    contiguous,  // cut the ordered samples into blocks, keep everything
    purge,       // additionally drop windows sharing hours with an earlier block
};

struct DatasetSplit {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
    std::vector<WindowSample> test;
    Fractions fractions;
    std::size_t purged = 0;
};

inline void validate_fractions(const Fractions& f) {
    if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0)) throw ValidationError("split fractions must be positive");
    if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
}

/// Block sizes for `n` samples: validation and test sizes are rounded, train
/// takes the remainder.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const Fractions& f) {
    validate_fractions(f);
    const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val));
    const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.test));
    if (val + test >= n || val == 0 || test == 0) {
        throw ValidationError("too few samples (" + std::to_string(n) + ") for the requested split");
    }
    return {n - val - test, val, test};
}

/// Temporal split: train, validation and test are consecutive blocks in time order.
inline DatasetSplit split(std::vector<WindowSample> samples, const Fractions& fractions,
                          BoundaryMode mode = BoundaryMode::purge) {
    const auto sizes = split_sizes(samples.size(), fractions);
    std::stable_sort(samples.begin(), samples.end(),
                     [](const WindowSample& a, const WindowSample& b) { return a.hour < b.hour; });
    DatasetSplit out;
    out.fractions = fractions;
    auto first = std::make_move_iterator(samples.begin());
    out.train.assign(first, first + sizes[0]);
    out.val.assign(first + sizes[0], first + sizes[0] + sizes[1]);
    out.test.assign(first + sizes[0] + sizes[1], std::make_move_iterator(samples.end()));
    if (mode == BoundaryMode::purge) {
        auto last_hour = [](const std::vector<WindowSample>& block) {
            long h = std::numeric_limits<long>::min();
            for (const auto& s : block) h = std::max(h, s.last_hour);
            return h;
        };
        auto purge = [&](std::vector<WindowSample>& block, long boundary) {
            const auto before = block.size();
            std::erase_if(block, [boundary](const WindowSample& s) { return s.hour <= boundary; });
            out.purged += before - block.size();
        };
        const long train_end = last_hour(out.train);
        purge(out.val, train_end);
        purge(out.test, std::max(train_end, last_hour(out.val)));
        if (out.val.empty() || out.test.empty()) throw ValidationError("split left an empty block after purging");
    }
    return out;
}

struct BlockBuild {
    DatasetSplit split;
    std::vector<SkippedWindow> skipped;
};

/// Cuts the trajectory into train, validation and test hour blocks (sized in
/// proportion to the split sizes of `sample_count`) and spreads each block's
/// windows evenly inside it, so no window straddles a boundary.
template <class Attacker>
BlockBuild build_blocked_split(const std::vector<StateVector>& states, const std::vector<long>& hours,
                               std::size_t sample_count, const Fractions& fractions, const WindowOptions& opts,
                               Attacker&& attacker, std::mt19937_64& rng) {
    const auto sizes = split_sizes(sample_count, fractions);
    const auto w = static_cast<std::size_t>(opts.window);
    const std::size_t total = states.size();
    BlockBuild out;
    out.split.fractions = fractions;
    std::vector<WindowSample>* blocks[3] = {&out.split.train, &out.split.val, &out.split.test};
    std::size_t begin = 0;
    std::size_t cumulative = 0;
    for (int b = 0; b < 3; ++b) {
        cumulative += sizes[b];
        const std::size_t end = b == 2 ? total
                                       : static_cast<std::size_t>(std::llround(
                                             static_cast<double>(total) * static_cast<double>(cumulative) /
                                             static_cast<double>(sample_count)));
        if (end < begin + w || end - begin < sizes[b] + w - 1) {
            throw ValidationError("trajectory of " + std::to_string(total) + " hours is too short for " +
                                  std::to_string(sample_count) + " windows of size " + std::to_string(w));
        }
        auto built = build_windows_at(states, hours, spread_starts(begin, end - w, sizes[b]), opts, attacker, rng);
        *blocks[b] = std::move(built.samples);
        out.skipped.insert(out.skipped.end(), built.skipped.begin(), built.skipped.end());
        begin = end;
    }
    return out;
}

}  // namespace fdia::dataset
