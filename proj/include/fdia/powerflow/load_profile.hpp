#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/powerflow/newton.hpp"

namespace fdia::powerflow {

struct LoadRecord {
    long timestamp;
    double demand_mw;
};

/// Reads an hourly `timestamp,demand_mw` CSV. Non-integer timestamps (e.g. ISO
/// dates) are replaced by the row index.
inline std::vector<LoadRecord> read_load_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    int ts_col = -1;
    int demand_col = -1;
    std::vector<LoadRecord> out;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        for (std::string cell; std::getline(ss, cell, ',');) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        return cells;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (ts_col < 0) {
            for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
                if (cells[c] == "timestamp") ts_col = c;
                if (cells[c] == "demand_mw") demand_col = c;
            }
            if (ts_col < 0 || demand_col < 0) {
                throw ParseError(lineno, "load CSV header must name 'timestamp' and 'demand_mw'");
            }
            continue;
        }
        if (static_cast<int>(cells.size()) <= std::max(ts_col, demand_col)) {
            throw ParseError(lineno, "load CSV row has too few columns");
        }
        LoadRecord rec{static_cast<long>(out.size()), 0.0};
        try {
            std::size_t used = 0;
            const long ts = std::stol(cells[ts_col], &used);
            if (used == cells[ts_col].size()) rec.timestamp = ts;
        } catch (const std::exception&) {
        }
        try {
            rec.demand_mw = std::stod(cells[demand_col]);
        } catch (const std::exception&) {
            throw ParseError(lineno, "bad demand value '" + cells[demand_col] + "'");
        }
        if (!std::isfinite(rec.demand_mw) || rec.demand_mw < 0.0) {
            throw ParseError(lineno, "demand must be finite and non-negative");
        }
        out.push_back(rec);
    }
    return out;
}

inline std::vector<LoadRecord> read_load_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open load CSV '" + path + "'");
    return read_load_csv(in);
}

/// Demand divided by its mean.
inline std::vector<double> demand_multipliers(const std::vector<LoadRecord>& records) {
    if (records.empty()) throw ValidationError("empty load profile");
    const double mean = std::accumulate(records.begin(), records.end(), 0.0,
                                        [](double acc, const LoadRecord& r) { return acc + r.demand_mw; }) /
                        static_cast<double>(records.size());
    if (!(mean > 0.0)) throw ValidationError("load profile has zero mean demand");
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.demand_mw / mean);
    return out;
}

struct SyntheticProfileParams {
    double daily_amplitude = 0.18;
    double weekly_amplitude = 0.05;
    double seasonal_amplitude = 0.08;
    double noise_sigma = 0.01;      // innovation of the AR(1) residual
    double noise_correlation = 0.9;
};

/// Hourly demand multipliers with daily, weekly and seasonal cycles plus an AR(1)
/// residual, normalized to mean 1.
inline std::vector<double> synthetic_profile(std::size_t hours, std::uint64_t seed,
                                             const SyntheticProfileParams& p = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> out(hours);
    double ar = 0.0;
    for (std::size_t h = 0; h < hours; ++h) {
        const double hour_of_day = static_cast<double>(h % 24);
        const double day = static_cast<double>(h / 24);
        // Morning and evening peaks over a night trough.
        const double daily = -0.6 * std::cos(two_pi * (hour_of_day - 3.0) / 24.0) +
                             0.4 * std::cos(two_pi * (hour_of_day - 19.0) / 12.0);
        const double weekend = (static_cast<int>(day) % 7 >= 5) ? -1.0 : 0.0;
        const double season = std::cos(two_pi * day / 365.0);
        ar = p.noise_correlation * ar + noise(rng);
        out[h] = 1.0 + p.daily_amplitude * daily + p.weekly_amplitude * weekend +
                 p.seasonal_amplitude * season + ar;
    }
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / std::max<std::size_t>(1, hours);
    for (auto& v : out) v = std::clamp(v / mean, 0.0, 3.0);
    return out;
}

/// One scenario per hour: the system multiplier times independent per-bus
/// jitter drawn uniformly in [1 - jitter, 1 + jitter].
inline std::vector<LoadScenario> make_scenarios(const std::vector<double>& multipliers, int n_bus,
                                                double jitter, std::mt19937_64& rng,
                                                const std::vector<long>& timestamps = {}) {
    if (jitter < 0.0 || jitter >= 1.0) throw ValidationError("jitter must lie in [0, 1)");
    std::uniform_real_distribution<double> u(-jitter, jitter);
    std::vector<LoadScenario> out;
    out.reserve(multipliers.size());
    for (std::size_t h = 0; h < multipliers.size(); ++h) {
        LoadScenario sc;
        sc.timestamp = timestamps.empty() ? static_cast<long>(h) : timestamps.at(h);
        sc.scale_p.resize(n_bus);
        for (int i = 0; i < n_bus; ++i) {
            const double e = jitter > 0.0 ? u(rng) : 0.0;
            sc.scale_p[i] = std::clamp(multipliers[h] * (1.0 + e), 0.0, 3.0);
        }
        out.push_back(std::move(sc));
    }
    return out;
}

}  // namespace fdia::powerflow
