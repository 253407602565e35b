#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fdia/app/commands.hpp"

using namespace fdia;
using app::RunConfig;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fdia_test_" + name);
    fs::remove_all(dir);
    return dir;
}

RunConfig small_config(const fs::path& dir, std::size_t samples = 100, std::size_t hours = 300) {
    nlohmann::json j = {
        {"seed", 7},
        {"profile", {{"hours", hours}}},
        {"sample_count", samples},
        {"model", {{"enc1", 8}, {"enc2", 4}, {"dec1", 8}}},
        {"train", {{"epochs", 2}, {"batch_size", 16}}},
        {"output_dir", dir.string()},
    };
    auto cfg = app::config_from_json(j);
    app::validate(cfg);
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
    const auto cfg = app::config_from_json({{"seed", 3}});
    EXPECT_EQ(cfg.seed, 3u);
    EXPECT_EQ(cfg.window, 5);
    EXPECT_EQ(cfg.sample_count, 5000u);
    EXPECT_EQ(cfg.model.enc1, 32);
    EXPECT_EQ(cfg.model.enc2, 16);
    EXPECT_EQ(cfg.train.epochs, 30);
    EXPECT_EQ(cfg.case_path, app::default_case_path());
    EXPECT_EQ(app::config_from_json(app::to_json(cfg)), cfg);

    auto changed = cfg;
    changed.attack.targets = {4, 41};
    changed.train.learning_rate = 5e-4;
    changed.thresholds.v = 0.02;
    EXPECT_EQ(app::config_from_json(app::to_json(changed)), changed);
}

TEST(Config, MissingOrBadSeedRejected) {
    EXPECT_THROW(app::config_from_json(nlohmann::json::object()), ConfigError);
    EXPECT_THROW(app::config_from_json({{"seed", -1}}), ConfigError);
    EXPECT_THROW(app::config_from_json({{"seed", "x"}}), ConfigError);
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(app::config_from_json({{"seed", 1}, {"windw", 5}}), ConfigError);
    EXPECT_THROW(app::config_from_json({{"seed", 1}, {"train", {{"epoch", 5}}}}), ConfigError);
}

TEST(Config, Overrides) {
    nlohmann::json doc = {{"seed", 1}};
    app::apply_override(doc, "train.epochs=5");
    app::apply_override(doc, "attack.mode=targeted");
    app::apply_override(doc, "attack.targets=[41]");
    app::apply_override(doc, "output_dir=out dir");
    const auto cfg = app::config_from_json(doc);
    EXPECT_EQ(cfg.train.epochs, 5);
    EXPECT_EQ(cfg.attack.mode, attack::AttackMode::targeted);
    EXPECT_EQ(cfg.attack.targets, std::vector<int>{41});
    EXPECT_EQ(cfg.output_dir, "out dir");
    EXPECT_THROW(app::apply_override(doc, "novalue"), ConfigError);
    EXPECT_THROW(app::apply_override(doc, "a..b=1"), ConfigError);
    EXPECT_THROW(app::apply_override(doc, "seed.x=1"), ConfigError);
}

TEST(Config, ValidationFailures) {
    EXPECT_THROW(app::load_config("", {"seed=1", "train.epochs=0"}), ConfigError);
    EXPECT_THROW(app::load_config("", {"seed=1", "window=1"}), ConfigError);
    EXPECT_THROW(app::load_config("", {"seed=1", "case_path=/nonexistent.cdf"}), ConfigError);
    EXPECT_THROW(app::load_config("/nonexistent/config.json", {}), ConfigError);
    EXPECT_NO_THROW(app::load_config("", {"seed=1"}));
}

TEST(Config, OutputDirFromEnvironment) {
    ::setenv(app::kOutputDirEnv, "/tmp/fdia-env-out", 1);
    const auto cfg = app::load_config("", {"seed=1", "output_dir=ignored"});
    ::unsetenv(app::kOutputDirEnv);
    EXPECT_EQ(cfg.output_dir, "/tmp/fdia-env-out");
}

TEST(Histogram, CountsSumToElementCount) {
    Eigen::ArrayXd v(7);
    v << 0.0, 0.001, 0.0049, 0.005, 0.02, 0.1, 5.0;
    const auto h = app::make_histogram(v, 4, 0.02);
    EXPECT_EQ(h.total(), 7u);
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{3, 1, 0, 3}));
    EXPECT_EQ(h.above_range, 2u);
    EXPECT_EQ(h.edges.size(), 5u);
    EXPECT_DOUBLE_EQ(h.edges.back(), 0.02);
    EXPECT_THROW(app::make_histogram(v, 0, 1.0), ValidationError);
    Eigen::ArrayXd bad(1);
    bad << std::nan("");
    EXPECT_THROW(app::make_histogram(bad, 2, 1.0), NumericalError);
}

TEST(Evaluate, PerfectPredictionsScoreZero) {
    app::Predictions p;
    p.actual = Eigen::MatrixXd::Random(6, 4);
    p.corrected = p.actual;
    p.attacked = p.actual;
    p.attacked(2, 3) += 0.05;
    p.masks.assign(6, std::vector<std::uint8_t>(4, 0));
    p.masks[2][3] = 1;
    const auto r = app::evaluate(p, {0.01, 0.01}, 10, 0.01);
    EXPECT_EQ(r.overall_rmse, 0.0);
    EXPECT_NEAR(r.attacked_rmse, std::sqrt(0.05 * 0.05 / 24.0), 1e-15);
    EXPECT_EQ(r.histogram.counts[0], 24u);
    EXPECT_EQ(r.histogram.total(), 24u);
    EXPECT_EQ(r.identification.tp, 1u);
    EXPECT_EQ(r.identification.fp, 0u);
    EXPECT_EQ(r.identification.fn, 0u);
    EXPECT_EQ(r.identification.tn, 23u);
    EXPECT_EQ(r.per_state[3].tp, 1u);
    const auto j = app::to_json(r);
    EXPECT_EQ(j["identification"]["true_positive_rate"], 1.0);
    EXPECT_EQ(j["correction_ratio"], 0.0);
}

TEST(Evaluate, ConfusionCounts) {
    app::Predictions p;
    p.actual = Eigen::MatrixXd::Zero(2, 2);
    p.attacked = p.actual;
    p.corrected = p.actual;
    p.attacked(0, 0) = 0.05;  // attacked, flagged
    p.attacked(1, 1) = 0.05;  // flagged but not attacked
    p.masks = {{1, 0}, {0, 1}};
    p.masks[1][1] = 0;
    p.masks[1][0] = 1;  // attacked, missed
    const auto r = app::evaluate(p, {0.01, 0.01}, 4, 0.1);
    EXPECT_EQ(r.identification.tp, 1u);
    EXPECT_EQ(r.identification.fp, 1u);
    EXPECT_EQ(r.identification.fn, 1u);
    EXPECT_EQ(r.identification.tn, 1u);
    EXPECT_DOUBLE_EQ(r.identification.tpr(), 0.5);
    EXPECT_DOUBLE_EQ(r.identification.fpr(), 0.5);
    EXPECT_DOUBLE_EQ(r.identification.accuracy(), 0.5);
}

TEST(Commands, SimulateCountsAndShape) {
    const auto dir = fresh_dir("counts");
    std::ostringstream log;
    const auto res = app::cmd_simulate(small_config(dir, 1000, 1100), log);
    EXPECT_EQ(res.manifest["counts"]["train"], 600);
    EXPECT_EQ(res.manifest["counts"]["val"], 200);
    EXPECT_EQ(res.manifest["counts"]["test"], 200);
    EXPECT_EQ(res.manifest["input_shape"], nlohmann::json::array({5, 60}));
    EXPECT_EQ(res.manifest["seed"], 7);
    for (const char* f : {app::files::trajectory, app::files::dataset, app::files::manifest}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    fs::remove_all(dir);
}

TEST(Commands, SimulateIsDeterministic) {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    std::ostringstream log;
    app::cmd_simulate(small_config(a), log);
    app::cmd_simulate(small_config(b), log);
    EXPECT_EQ(slurp(a / app::files::dataset), slurp(b / app::files::dataset));
    EXPECT_EQ(slurp(a / app::files::trajectory), slurp(b / app::files::trajectory));
    auto other = small_config(b);
    other.seed = 8;
    app::cmd_simulate(other, log);
    EXPECT_NE(slurp(a / app::files::dataset), slurp(b / app::files::dataset));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Commands, EndToEndReportsAreConsistent) {
    const auto dir = fresh_dir("e2e");
    const auto cfg = small_config(dir);
    std::ostringstream log;
    EXPECT_THROW(app::cmd_train(cfg, log), ConfigError);
    app::cmd_simulate(cfg, log);
    EXPECT_THROW(app::cmd_evaluate(cfg, log), ConfigError);
    const auto trained = app::cmd_train(cfg, log);
    EXPECT_EQ(trained.model.epochs_trained, 2);
    const auto ev = app::cmd_evaluate(cfg, log);

    // RMSE recomputed from the per-element dump.
    std::ifstream pred(dir / app::files::predictions);
    std::string line;
    std::getline(pred, line);
    EXPECT_EQ(line, "window,state,actual,attacked,corrected,attacked_flag");
    double se = 0.0;
    std::size_t rows = 0;
    while (std::getline(pred, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        se += (v[4] - v[2]) * (v[4] - v[2]);
        ++rows;
    }
    EXPECT_EQ(rows, 20u * 60u);
    const auto report = nlohmann::json::parse(slurp(dir / app::files::eval_report));
    EXPECT_NEAR(std::sqrt(se / rows), report["overall_rmse"].get<double>(), 1e-10);

    std::ifstream hist(dir / app::files::histogram);
    std::getline(hist, line);
    EXPECT_EQ(line, "bin_lo,bin_hi,count");
    std::size_t total = 0;
    while (std::getline(hist, line)) total += std::stoul(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(total, rows);
    EXPECT_EQ(report["windows"], 20);

    std::ifstream csv(dir / app::files::train_report);
    std::getline(csv, line);
    EXPECT_EQ(line, "epoch,train_rmse,val_rmse");
    int epochs = 0;
    while (std::getline(csv, line)) ++epochs;
    EXPECT_EQ(epochs, 2);

    auto resumed = cfg;
    resumed.train.resume = true;
    EXPECT_EQ(app::cmd_train(resumed, log).report.epochs.front().epoch, 3);
    fs::remove_all(dir);
}

TEST(Commands, AttackDemoAndStream) {
    const auto dir = fresh_dir("demo");
    auto cfg = small_config(dir);
    std::ostringstream log;
    app::cmd_simulate(cfg, log);
    app::cmd_train(cfg, log);

    const auto demo = app::cmd_attack_demo(cfg, log);
    EXPECT_EQ(demo.normal.size(), 60);
    EXPECT_TRUE(fs::exists(dir / app::files::attack_demo));
    cfg.demo.attack = app::DemoAttack::none;
    EXPECT_EQ(app::cmd_attack_demo(cfg, log).attacked, app::cmd_attack_demo(cfg, log).normal);
    cfg.demo.window_index = 10000;
    EXPECT_THROW(app::cmd_attack_demo(cfg, log), ConfigError);

    const auto split = app::load_run_dataset(cfg);
    const auto& s = split.test.front();
    std::ostringstream in;
    for (int t = 0; t < 4; ++t) {
        const Eigen::VectorXd row = s.target.row(t).transpose();
        in << nlohmann::json{{"timestep", 100 + t}, {"state", std::vector<double>(row.data(), row.data() + 60)},
                             {"trusted", true}}
                  .dump()
           << '\n';
    }
    const Eigen::VectorXd last = s.inputs.row(4).transpose();
    in << nlohmann::json(std::vector<double>(last.data(), last.data() + 60)).dump() << '\n';
    std::istringstream input(in.str());
    std::ostringstream out;
    EXPECT_EQ(app::cmd_correct_stream(cfg, input, out), 1u);
    const auto rec = nlohmann::json::parse(out.str());
    EXPECT_EQ(rec["timestep"], 104);
    EXPECT_EQ(rec["corrected"].size(), 60u);
    EXPECT_EQ(rec["deltas"].size(), 60u);

    std::istringstream cold(nlohmann::json(std::vector<double>(60, 1.0)).dump() + "\n");
    EXPECT_THROW(app::cmd_correct_stream(cfg, cold, out), pipeline::BootstrapError);
    std::istringstream bad("{not json}\n");
    EXPECT_THROW(app::cmd_correct_stream(cfg, bad, out), ParseError);
    std::istringstream short_state("[1, 2, 3]\n");
    EXPECT_THROW(app::cmd_correct_stream(cfg, short_state, out), DimensionError);
    fs::remove_all(dir);
}
