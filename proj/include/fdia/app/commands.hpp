#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fdia/app/config.hpp"
#include "fdia/app/report.hpp"
#include "fdia/attack/attack.hpp"
#include "fdia/dataset/container.hpp"
#include "fdia/dataset/normalizer.hpp"
#include "fdia/dataset/window.hpp"
#include "fdia/grid/case_io.hpp"
#include "fdia/neural/model_io.hpp"
#include "fdia/neural/train.hpp"
#include "fdia/pipeline/pipeline.hpp"
#include "fdia/powerflow/load_profile.hpp"
#include "fdia/powerflow/newton.hpp"

namespace fdia::app {

inline constexpr double kMaxInfeasibleFraction = 0.10;

namespace files {
inline constexpr const char* trajectory = "trajectory.csv";
inline constexpr const char* dataset = "dataset.bin";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* model = "model.bin";
inline constexpr const char* train_report = "train_report.csv";
inline constexpr const char* eval_report = "eval_report.json";
inline constexpr const char* histogram = "histogram.csv";
inline constexpr const char* predictions = "predictions.csv";
inline constexpr const char* attack_demo = "attack_demo.csv";
}  // namespace files

inline std::string output_path(const RunConfig& cfg, const char* name) {
    std::filesystem::create_directories(cfg.output_dir);
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

/// Independent generator for one named stage, derived from the run seed.
inline std::mt19937_64 stage_rng(std::uint64_t seed, std::uint32_t stage) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage};
    return std::mt19937_64(seq);
}

namespace stage {
inline constexpr std::uint32_t profile = 1, scenarios = 2, windows = 3, init = 4, demo = 5;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(path, std::ios::out | mode);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

struct SimulateResult {
    dataset::DatasetSplit split;
    std::size_t skipped = 0;
    std::size_t powerflow_failures = 0;
    nlohmann::json manifest;
};

inline SimulateResult cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    const auto model = grid::load_case_file(cfg.case_path);
    std::vector<double> multipliers;
    std::vector<long> timestamps;
    if (!cfg.load_csv_path.empty()) {
        auto records = powerflow::read_load_csv_file(cfg.load_csv_path);
        if (records.size() > cfg.profile.hours) records.resize(cfg.profile.hours);
        multipliers = powerflow::demand_multipliers(records);
        for (const auto& r : records) timestamps.push_back(r.timestamp);
    } else {
        multipliers = powerflow::synthetic_profile(cfg.profile.hours, stage_rng(cfg.seed, stage::profile)(),
                                                   cfg.profile.synthetic);
    }
    auto scenario_rng = stage_rng(cfg.seed, stage::scenarios);
    const auto scenarios =
        powerflow::make_scenarios(multipliers, model.bus_count(), cfg.profile.bus_jitter, scenario_rng, timestamps);
    log << "solving " << scenarios.size() << " hourly power flows\n";
    const auto traj = powerflow::trajectory(model, scenarios);
    const double infeasible = static_cast<double>(traj.failures.size()) / static_cast<double>(scenarios.size());
    if (infeasible > kMaxInfeasibleFraction) {
        std::string msg = std::to_string(traj.failures.size()) + " of " + std::to_string(scenarios.size()) +
                          " load scenarios have no power-flow solution";
        for (std::size_t k = 0; k < std::min<std::size_t>(3, traj.failures.size()); ++k) {
            msg += "; hour " + std::to_string(traj.failures[k].index) + ": " + traj.failures[k].message;
        }
        throw NumericalError(msg);
    }
    {
        auto out = open_out(output_path(cfg, files::trajectory));
        out << std::setprecision(17) << "hour";
        for (int i = 0; i < model.bus_count(); ++i) out << ",theta_" << i;
        for (int i = 0; i < model.bus_count(); ++i) out << ",v_" << i;
        out << '\n';
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            out << traj.timestamps[k];
            const auto flat = traj.states[k].to_flat();
            for (Eigen::Index i = 0; i < flat.size(); ++i) out << ',' << flat[i];
            out << '\n';
        }
    }

    log << "building " << cfg.sample_count << " windows\n";
    const attack::StealthyAttacker attacker(model, cfg.attack.attacker());
    dataset::WindowOptions wopts;
    wopts.window = cfg.window;
    wopts.awgn_sigma = cfg.awgn_sigma;
    wopts.slack_index = model.slack_index();
    auto window_rng = stage_rng(cfg.seed, stage::windows);
    auto built = dataset::build_blocked_split(traj.states, traj.timestamps, cfg.sample_count, cfg.fractions, wopts,
                                              dataset::window_attacker(attacker), window_rng);
    if (built.split.train.empty() || built.split.val.empty() || built.split.test.empty()) {
        throw NumericalError("the attacker failed on every window of at least one split block");
    }
    dataset::save_dataset(output_path(cfg, files::dataset), built.split);

    SimulateResult res;
    res.skipped = built.skipped.size();
    res.powerflow_failures = traj.failures.size();
    res.manifest = {
        {"seed", cfg.seed},
        {"case_path", cfg.case_path},
        {"load_source", cfg.load_csv_path.empty() ? "synthetic" : cfg.load_csv_path},
        {"hours", scenarios.size()},
        {"powerflow_failures", traj.failures.size()},
        {"window", cfg.window},
        {"n_states", model.state_count()},
        {"input_shape", {cfg.window, model.state_count()}},
        {"awgn_sigma", cfg.awgn_sigma},
        {"attack", to_json(cfg)["attack"]},
        {"sample_count", cfg.sample_count},
        {"fractions", {cfg.fractions.train, cfg.fractions.val, cfg.fractions.test}},
        {"counts",
         {{"train", built.split.train.size()}, {"val", built.split.val.size()}, {"test", built.split.test.size()}}},
        {"skipped_windows", built.skipped.size()},
    };
    auto out = open_out(output_path(cfg, files::manifest));
    out << res.manifest.dump(2) << '\n';
    log << "dataset: " << built.split.train.size() << " train, " << built.split.val.size() << " val, "
        << built.split.test.size() << " test windows (" << built.skipped.size() << " skipped)\n";
    res.split = std::move(built.split);
    return res;
}

inline dataset::DatasetSplit load_run_dataset(const RunConfig& cfg) {
    const auto path = (std::filesystem::path(cfg.output_dir) / files::dataset).string();
    if (!std::filesystem::exists(path)) throw ConfigError("dataset '" + path + "' not found; run simulate first");
    return dataset::load_dataset(path);
}

inline neural::DaeModel load_run_model(const RunConfig& cfg) {
    const auto path = (std::filesystem::path(cfg.output_dir) / files::model).string();
    if (!std::filesystem::exists(path)) throw ConfigError("model '" + path + "' not found; run train first");
    return neural::load_model(path);
}

inline neural::DaeConfig dae_config(const RunConfig& cfg, int n_states, int slack_index) {
    neural::DaeConfig c;
    c.window = cfg.window;
    c.n_states = n_states;
    c.enc1_units = cfg.model.enc1;
    c.enc2_units = cfg.model.enc2;
    c.dec1_units = cfg.model.dec1;
    c.activation = cfg.model.activation;
    c.slack_index = slack_index;
    return c;
}

inline void check_model_matches(const neural::DaeModel& model, const dataset::DatasetSplit& split) {
    const auto& s = !split.test.empty() ? split.test.front() : split.train.front();
    if (s.window() != model.config.window || s.state_count() != model.config.n_states) {
        throw DimensionError("model expects " + std::to_string(model.config.window) + "x" +
                             std::to_string(model.config.n_states) + " windows but the dataset has " +
                             std::to_string(s.window()) + "x" + std::to_string(s.state_count()));
    }
}

struct TrainOutcome {
    neural::TrainReport report;
    neural::DaeModel model;
};

inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
    auto split = load_run_dataset(cfg);
    if (split.train.empty() || split.val.empty()) throw ConfigError("dataset has an empty train or val block");
    const auto model_path = output_path(cfg, files::model);
    const auto report_path = output_path(cfg, files::train_report);
    const int n = split.train.front().state_count();

    neural::DaeModel model;
    const bool resume = cfg.train.resume && std::filesystem::exists(model_path);
    if (resume) {
        model = neural::load_model(model_path);
        check_model_matches(model, split);
        log << "resuming from epoch " << model.epochs_trained << '\n';
    } else {
        const auto grid_model = grid::load_case_file(cfg.case_path);
        auto norm = dataset::fit_normalizer(split.train);
        if (!norm.clamped.empty()) {
            log << "note: " << norm.clamped.size() << " constant coordinate(s) keep unit scale:";
            for (int k : norm.clamped) log << ' ' << k;
            log << '\n';
        }
        model = neural::make_model(dae_config(cfg, n, grid_model.slack_index()), std::move(norm),
                                   stage_rng(cfg.seed, stage::init)());
    }
    dataset::normalize(split.train, model.normalizer);
    dataset::normalize(split.val, model.normalizer);

    const bool append = resume && std::filesystem::exists(report_path);
    auto report_out = open_out(report_path, append ? std::ios::app : std::ios::trunc);
    report_out << std::setprecision(17);
    if (!append) report_out << "epoch,train_rmse,val_rmse\n";
    auto on_epoch = [&](const neural::EpochStats& s, const neural::DaeModel& current, bool improved) {
        report_out << s.epoch << ',' << s.train_rmse << ',' << s.val_rmse << '\n';
        report_out.flush();
        log << "epoch " << s.epoch << "  train " << s.train_rmse << "  val " << s.val_rmse
            << (improved ? "  (best)" : "") << '\n';
        if (improved) neural::save_model(model_path, current);
    };
    TrainOutcome out;
    try {
        out.report = neural::train(model, split.train, split.val, cfg.train_config(), on_epoch);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + "; last good checkpoint kept at '" + model_path + "'");
    }
    neural::save_model(model_path, model);
    log << "best validation RMSE " << out.report.best_val_rmse << " at epoch " << out.report.best_epoch << '\n';
    out.model = std::move(model);
    return out;
}

struct EvaluateOutcome {
    EvalReport report;
    Predictions predictions;
};

inline EvaluateOutcome cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    const auto model = load_run_model(cfg);
    const auto split = load_run_dataset(cfg);
    if (split.test.empty()) throw ConfigError("dataset has no test windows");
    check_model_matches(model, split);
    EvaluateOutcome out;
    double window_rmse = 0.0;
    out.predictions = predict(model, split.test, &window_rmse);
    out.report = evaluate(out.predictions, cfg.thresholds, cfg.histogram.bins, cfg.histogram.max);
    out.report.window_rmse_normalized = window_rmse;
    {
        auto f = open_out(output_path(cfg, files::eval_report));
        f << std::setprecision(17) << to_json(out.report).dump(2) << '\n';
    }
    {
        auto f = open_out(output_path(cfg, files::histogram));
        write_histogram_csv(f, out.report.histogram);
    }
    {
        auto f = open_out(output_path(cfg, files::predictions));
        write_predictions_csv(f, out.predictions);
    }
    const auto& id = out.report.identification;
    log << "test windows " << out.report.windows << "  corrected RMSE " << out.report.overall_rmse
        << "  attacked RMSE " << out.report.attacked_rmse << "  max per-state RMSE "
        << out.report.per_state_rmse.maxCoeff() << '\n'
        << "identification: TPR " << id.tpr() << "  FPR " << id.fpr() << "  accuracy " << id.accuracy() << '\n';
    return out;
}

struct DemoOutcome {
    Eigen::VectorXd normal;
    Eigen::VectorXd attacked;
    pipeline::CorrectionOutcome correction;
};

inline DemoOutcome cmd_attack_demo(const RunConfig& cfg, std::ostream& log) {
    const auto model = load_run_model(cfg);
    const auto split = load_run_dataset(cfg);
    check_model_matches(model, split);
    if (cfg.demo.window_index >= split.test.size()) {
        throw ConfigError("demo.window_index " + std::to_string(cfg.demo.window_index) + " is outside the " +
                          std::to_string(split.test.size()) + " test windows");
    }
    const auto& s = split.test[cfg.demo.window_index];
    const int w = s.window();
    DemoOutcome out;
    out.normal = s.target.row(w - 1).transpose();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(out.normal.size());
    if (cfg.demo.attack == DemoAttack::window) {
        c = (s.inputs.row(w - 1) - s.target.row(w - 1)).transpose();
    } else if (cfg.demo.attack == DemoAttack::targeted) {
        const auto grid_model = grid::load_case_file(cfg.case_path);
        auto acfg = cfg.attack.attacker();
        acfg.mode = attack::AttackMode::targeted;
        acfg.targets = cfg.demo.targets;
        acfg.magnitude = cfg.demo.magnitude;
        acfg.min_magnitude = 0.0;
        const attack::StealthyAttacker attacker(grid_model, acfg);
        auto rng = stage_rng(cfg.seed, stage::demo);
        const auto hit = attacker(grid::StateVector::from_flat(out.normal), rng);
        if (!hit) throw NumericalError("no stealthy targeted attack found for the demo window");
        c = hit->record.spec.c;
    }
    out.attacked = out.normal + c;
    std::vector<grid::StateVector> history;
    for (int t = 0; t + 1 < w; ++t) history.push_back(grid::StateVector::from_flat(s.inputs.row(t).transpose()));
    auto queue = pipeline::warm_up(w, history);
    out.correction = pipeline::correct(model, queue, grid::StateVector::from_flat(out.attacked), cfg.thresholds);

    const Eigen::VectorXd corrected = out.correction.corrected.to_flat();
    auto f = open_out(output_path(cfg, files::attack_demo));
    f << std::setprecision(17) << "state_index,normal,attacked,corrected\n";
    for (Eigen::Index k = 0; k < out.normal.size(); ++k) {
        f << k << ',' << out.normal[k] << ',' << out.attacked[k] << ',' << corrected[k] << '\n';
    }
    log << std::setprecision(6) << std::fixed;
    log << "state     normal   attacked  corrected\n";
    for (Eigen::Index k = 0; k < out.normal.size(); ++k) {
        const bool flagged = std::find(out.correction.flagged.begin(), out.correction.flagged.end(), k) !=
                             out.correction.flagged.end();
        if (c[k] == 0.0 && !flagged) continue;
        log << std::setw(5) << k << ' ' << std::setw(10) << out.normal[k] << ' ' << std::setw(10) << out.attacked[k]
            << ' ' << std::setw(10) << corrected[k] << (flagged ? "  flagged" : "") << '\n';
    }
    log << std::defaultfloat;
    return out;
}

namespace detail {

inline grid::StateVector state_from_json(const nlohmann::json& j, int n_states) {
    const nlohmann::json* values = &j;
    if (j.is_object()) {
        if (j.contains("state")) {
            values = &j.at("state");
        } else if (j.contains("theta") && j.contains("v")) {
            const auto theta = j.at("theta").get<std::vector<double>>();
            const auto v = j.at("v").get<std::vector<double>>();
            if (theta.size() != v.size() || static_cast<int>(theta.size() + v.size()) != n_states) {
                throw DimensionError("state has the wrong number of coordinates");
            }
            return {Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())),
                    Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
        } else {
            throw FormatError("stream record needs 'state' or 'theta'/'v'");
        }
    }
    const auto flat = values->get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != n_states) {
        throw DimensionError("state has " + std::to_string(flat.size()) + " coordinates, model expects " +
                             std::to_string(n_states));
    }
    return grid::StateVector::from_flat(Eigen::Map<const Eigen::VectorXd>(flat.data(), n_states));
}

}  // namespace detail

/// JSON-lines stream mode. Each input line is a flat state array or an object
/// with `state` (or `theta` and `v`), optional `timestep`, and optional
/// `trusted: true` to feed the warm-up queue instead of correcting.
inline std::size_t cmd_correct_stream(const RunConfig& cfg, std::istream& in, std::ostream& out) {
    const auto model = load_run_model(cfg);
    pipeline::StateQueue queue(model.config.window - 1);
    std::string line;
    std::size_t lineno = 0;
    std::size_t corrected = 0;
    long timestep = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw ParseError(lineno, "invalid JSON");
        try {
            const auto x = detail::state_from_json(rec, model.config.n_states);
            long ts = timestep;
            if (rec.is_object() && rec.contains("timestep")) ts = rec.at("timestep").get<long>();
            timestep = ts + 1;
            if (rec.is_object() && rec.value("trusted", false)) {
                queue.push(x);
                continue;
            }
            const auto outcome = pipeline::correct(model, queue, x, cfg.thresholds);
            const Eigen::VectorXd flat = outcome.corrected.to_flat();
            nlohmann::json o{
                {"timestep", ts},
                {"corrected", std::vector<double>(flat.data(), flat.data() + flat.size())},
                {"flagged", outcome.flagged},
                {"deltas", std::vector<double>(outcome.deltas.data(), outcome.deltas.data() + outcome.deltas.size())},
            };
            out << o.dump() << '\n';
            out.flush();
            ++corrected;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return corrected;
}

}  // namespace fdia::app
