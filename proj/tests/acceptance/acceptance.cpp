// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "fdia/app/commands.hpp"
#include "support.hpp"

using namespace fdia;
namespace fs = std::filesystem;
using fdia::testing::ieee30;

namespace {

// Tolerances and budgets.
constexpr double kJacobianRelTol = 1e-5;
constexpr double kJacobianStep = 1e-6;
constexpr double kJacobianSeconds = 30.0;
constexpr double kDcExactTol = 1e-10;
constexpr double kAcRecoveryTol = 1e-6;
constexpr double kStatChangeTol = 1e-6;
constexpr double kDcIdentityTol = 1e-9;
constexpr double kMaxShift = 0.05;
constexpr double kTargetRelTol = 0.01;
constexpr double kBpttRelTol = 1e-4;
constexpr double kBpttSeconds = 60.0;
constexpr double kMaxCorrectionRatio = 0.2;
constexpr double kMinTpr = 0.95;
constexpr double kMaxFpr = 0.02;
constexpr double kEndToEndSeconds = 15.0 * 60.0;
constexpr double kDriftFactor = 5.0;
constexpr double kReportTol = 1e-10;
constexpr std::uint64_t kDeskSeed = 2024;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " | " << detail << std::endl;
}

void run(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [pass, detail] = body();
        report(id, pass, what, detail);
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string second_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    return line;
}

app::RunConfig desk_config(const fs::path& dir, int epochs) {
    nlohmann::json j = {{"seed", kDeskSeed}, {"output_dir", dir.string()}, {"train", {{"epochs", epochs}}}};
    auto cfg = app::config_from_json(j);
    app::validate(cfg);
    return cfg;
}

void criterion_jacobian() {
    run(1, "Jacobian matches central finite differences", [] {
        Timer t;
        std::mt19937_64 rng(101);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const auto x = fdia::testing::random_state(ieee30(), rng);
            const auto numeric = fdia::testing::finite_difference(
                [](const grid::StateVector& s) { return grid::measure(ieee30(), s); }, x, kJacobianStep);
            worst = std::max(worst, fdia::testing::max_rel_error(grid::jacobian(ieee30(), x), numeric));
        }
        const double secs = t.seconds();
        return std::pair{worst < kJacobianRelTol && secs < kJacobianSeconds,
                         "100 states, max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
    });
}

void criterion_wls() {
    run(2, "WLS exactness (DC and AC)", [] {
        std::mt19937_64 rng(102);
        std::normal_distribution<double> g;
        std::uniform_int_distribution<int> dim(2, 12);
        double dc_worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const int n = dim(rng);
            const int m = n + dim(rng);
            Eigen::MatrixXd h(m, n);
            Eigen::VectorXd x(n), w(m);
            for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = g(rng);
            for (auto& v : x) v = g(rng);
            for (auto& v : w) v = 0.5 + std::abs(g(rng));
            const auto est = estimation::dc_estimate(h, {h * x, w});
            dc_worst = std::max(dc_worst, (est.x - x).cwiseAbs().maxCoeff());
        }
        double ac_worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const auto x = fdia::testing::random_state(ieee30(), rng);
            const estimation::MeasurementVector meas{grid::measure(ieee30(), x),
                                                     estimation::plan_weights(ieee30().measurement_plan())};
            const auto est = estimation::ac_estimate(ieee30(), meas, grid::StateVector::flat(30));
            ac_worst = std::max(ac_worst, (est.x_est.to_flat() - x.to_flat()).cwiseAbs().maxCoeff());
        }
        return std::pair{dc_worst <= kDcExactTol && ac_worst <= kAcRecoveryTol,
                         "DC max err " + fmt(dc_worst) + " over 100 systems, AC max err " + fmt(ac_worst) +
                             " over 20 states"};
    });
}

void criterion_stealth() {
    run(3, "Stealth invariance of crafted attacks", [] {
        std::mt19937_64 rng(103);
        const auto& m = ieee30();
        double worst = 0.0;
        int verdict_changes = 0;
        int launched = 0;
        while (launched < 500) {
            const auto x = fdia::testing::random_state(m, rng, 0.0);
            const auto meas = estimation::noisy_measurements(m, x, {}, rng);
            const auto clean = estimation::ac_estimate(m, meas, x);
            if (!clean.converged) continue;
            const auto spec = attack::sample_attack(rng, attack::AttackMode::random, 60, kMaxShift, 0);
            const auto rec = attack::launch(m, meas, clean, spec, 0.05);
            worst = std::max(worst, std::abs(rec.attacked_statistic - rec.clean_statistic));
            verdict_changes += (rec.clean_statistic <= rec.threshold) != (rec.attacked_statistic <= rec.threshold);
            ++launched;
        }
        // DC identity on the linearized IEEE 30 model.
        const Eigen::MatrixXd h = grid::estimation_jacobian(m, grid::StateVector::flat(30));
        const Eigen::VectorXd w = estimation::plan_weights(m.measurement_plan());
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> u(-kMaxShift, kMaxShift);
        double dc_worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd z(h.rows()), c(h.cols());
            for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = g(rng) / std::sqrt(w[i]);
            for (auto& v : c) v = u(rng);
            const double f0 = estimation::dc_estimate(h, {z, w}).objective;
            const double f1 = estimation::dc_estimate(h, {z + attack::craft_dc(h, c), w}).objective;
            dc_worst = std::max(dc_worst, std::abs(f1 - f0));
        }
        return std::pair{worst <= kStatChangeTol && verdict_changes == 0 && dc_worst <= kDcIdentityTol,
                         "500 AC attacks, max |dJ| " + fmt(worst) + ", verdict changes " +
                             std::to_string(verdict_changes) + "; DC max |dF| " + fmt(dc_worst)};
    });
}

void criterion_efficacy() {
    run(4, "Targeted attacks shift the estimate by c", [] {
        std::mt19937_64 rng(104);
        const auto& m = ieee30();
        std::uniform_int_distribution<int> coord(1, 59);
        std::uniform_real_distribution<double> size(0.02, kMaxShift);
        std::bernoulli_distribution sign(0.5);
        double worst = 0.0;
        int done = 0;
        while (done < 100) {
            const auto x = fdia::testing::random_state(m, rng, 0.0);
            const auto meas = estimation::noisy_measurements(m, x, {}, rng);
            const auto clean = estimation::ac_estimate(m, meas, x);
            if (!clean.converged) continue;
            const int k = coord(rng);
            const double c = sign(rng) ? size(rng) : -size(rng);
            attack::AttackSpec spec;
            spec.mode = attack::AttackMode::targeted;
            spec.magnitude = std::abs(c);
            spec.target_states = {k};
            spec.c = Eigen::VectorXd::Zero(60);
            spec.c[k] = c;
            const auto rec = attack::launch(m, meas, clean, spec);
            const double shift = rec.x_attacked_est.to_flat()[k] - clean.x_est.to_flat()[k];
            worst = std::max(worst, std::abs(shift - c) / std::abs(c));
            ++done;
        }
        return std::pair{worst <= kTargetRelTol, "100 attacks, max relative shift error " + fmt(worst)};
    });
}

void criterion_bptt() {
    run(5, "BPTT gradients match finite differences", [] {
        Timer t;
        double worst = 0.0;
        for (auto act : {neural::CellActivation::relu, neural::CellActivation::tanh}) {
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                worst = std::max(worst, fdia::testing::bptt_relative_error(act, seed));
            }
        }
        const double secs = t.seconds();
        return std::pair{worst < kBpttRelTol && secs < kBpttSeconds,
                         "20 seeds x 2 activations, max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
    });
}

struct EndToEnd {
    fs::path dir;
    bool ran = false;
};

EndToEnd criterion_end_to_end() {
    EndToEnd e2e{fs::temp_directory_path() / "fdia_acceptance_a"};
    fs::remove_all(e2e.dir);
    run(6, "Desk-scale end-to-end correction and identification", [&] {
        Timer t;
        const auto cfg = desk_config(e2e.dir, 30);
        std::ostringstream log;
        app::cmd_simulate(cfg, log);
        app::cmd_train(cfg, log);
        const auto ev = app::cmd_evaluate(cfg, log);
        e2e.ran = true;
        const double secs = t.seconds();
        const auto& r = ev.report;
        const double ratio = r.overall_rmse / r.attacked_rmse;
        double min_state_tpr = 1.0;
        for (const auto& c : r.per_state) {
            if (c.tp + c.fn > 0) min_state_tpr = std::min(min_state_tpr, c.tpr());
        }
        const bool pass = ratio <= kMaxCorrectionRatio && r.identification.tpr() >= kMinTpr &&
                          r.identification.fpr() <= kMaxFpr && secs < kEndToEndSeconds;
        return std::pair{pass, std::to_string(r.windows) + " test windows, corrected RMSE " + fmt(r.overall_rmse) +
                                   ", attacked RMSE " + fmt(r.attacked_rmse) + ", ratio " + fmt(ratio) + ", TPR " +
                                   fmt(r.identification.tpr()) + " (min per state " + fmt(min_state_tpr) +
                                   "), FPR " + fmt(r.identification.fpr()) + ", " + fmt(secs) + " s"};
    });
    return e2e;
}

void criterion_feedback(const EndToEnd& e2e) {
    run(7, "Feedback loop stays within 5x the single-step error", [&] {
        if (!e2e.ran) return std::pair{false, std::string("end-to-end run unavailable")};
        const auto model = neural::load_model((e2e.dir / app::files::model).string());
        const auto rows = read_csv_rows(e2e.dir / app::files::trajectory);
        const int w = model.config.window;
        constexpr int steps = 100;
        // Clean hours from the end of the year (the test block).
        const std::size_t first = rows.size() - static_cast<std::size_t>(steps + w - 1);
        std::vector<grid::StateVector> truth;
        for (std::size_t k = first; k < rows.size(); ++k) {
            truth.push_back(grid::StateVector::from_flat(
                Eigen::Map<const Eigen::VectorXd>(rows[k].data() + 1, static_cast<Eigen::Index>(rows[k].size() - 1))));
        }
        const std::vector<grid::StateVector> history(truth.begin(), truth.begin() + (w - 1));
        auto feedback = pipeline::warm_up(w, history);
        double drift = 0.0, single = 0.0;
        for (int s = 0; s < steps; ++s) {
            const auto& x = truth[static_cast<std::size_t>(s + w - 1)];
            const auto fb = pipeline::correct(model, feedback, x);
            drift = std::max(drift, (fb.corrected.to_flat() - x.to_flat()).cwiseAbs().maxCoeff());
            const std::vector<grid::StateVector> open(truth.begin() + s, truth.begin() + s + (w - 1));
            auto q = pipeline::warm_up(w, open);
            single = std::max(single, (pipeline::reconstruct(model, q, x).to_flat() - x.to_flat()).cwiseAbs().maxCoeff());
        }
        return std::pair{drift <= kDriftFactor * single,
                         "100 steps, max feedback error " + fmt(drift) + ", max single-step error " + fmt(single)};
    });
}

void criterion_determinism(const EndToEnd& e2e) {
    run(8, "Same seed gives identical dataset and epoch-1 loss", [&] {
        if (!e2e.ran) return std::pair{false, std::string("end-to-end run unavailable")};
        const fs::path dir = fs::temp_directory_path() / "fdia_acceptance_b";
        fs::remove_all(dir);
        const auto cfg = desk_config(dir, 1);
        std::ostringstream log;
        app::cmd_simulate(cfg, log);
        app::cmd_train(cfg, log);
        const bool same_data = slurp(dir / app::files::dataset) == slurp(e2e.dir / app::files::dataset);
        const auto a = second_line(e2e.dir / app::files::train_report);
        const auto b = second_line(dir / app::files::train_report);
        fs::remove_all(dir);
        return std::pair{same_data && a == b && !a.empty(),
                         std::string("dataset ") + (same_data ? "identical" : "differs") + ", epoch-1 row '" + a +
                             "' vs '" + b + "'"};
    });
}

void criterion_report(const EndToEnd& e2e) {
    run(9, "Report RMSE and histogram agree with the prediction dump", [&] {
        if (!e2e.ran) return std::pair{false, std::string("end-to-end run unavailable")};
        const auto rows = read_csv_rows(e2e.dir / app::files::predictions);
        double se = 0.0;
        for (const auto& r : rows) se += (r[4] - r[2]) * (r[4] - r[2]);
        const double recomputed = std::sqrt(se / static_cast<double>(rows.size()));
        const auto report = nlohmann::json::parse(slurp(e2e.dir / app::files::eval_report));
        const double emitted = report["overall_rmse"].get<double>();
        std::size_t hist_total = 0;
        for (const auto& r : read_csv_rows(e2e.dir / app::files::histogram)) hist_total += static_cast<std::size_t>(r[2]);
        const bool pass = std::abs(recomputed - emitted) <= kReportTol && hist_total == rows.size();
        return std::pair{pass, "|emitted - recomputed| " + fmt(std::abs(recomputed - emitted)) + ", histogram " +
                                   std::to_string(hist_total) + " of " + std::to_string(rows.size()) + " elements"};
    });
}

}  // namespace

int main() {
    criterion_jacobian();
    criterion_wls();
    criterion_stealth();
    criterion_efficacy();
    criterion_bptt();
    const auto e2e = criterion_end_to_end();
    criterion_feedback(e2e);
    criterion_determinism(e2e);
    criterion_report(e2e);
    fs::remove_all(e2e.dir);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
