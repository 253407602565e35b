#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/estimation/wls.hpp"
#include "fdia/grid/measurement.hpp"

namespace fdia::attack {

using grid::NetworkModel;
using grid::StateVector;

enum class AttackMode { random, targeted };

/// State perturbation c in the full 2N layout (angles then magnitudes). The
/// slack angle entry is always zero.
struct AttackSpec {
    AttackMode mode = AttackMode::random;
    std::vector<int> target_states;
    Eigen::VectorXd c;
    double magnitude = 0.0;
};

inline void validate_spec(const AttackSpec& spec, int slack_index) {
    if (!(spec.magnitude > 0.0)) throw ValidationError("attack magnitude must be positive");
    if (slack_index >= 0 && slack_index < spec.c.size() && spec.c[slack_index] != 0.0) {
        throw ValidationError("attack touches the slack angle");
    }
    if (spec.mode == AttackMode::targeted) {
        if (spec.target_states.empty()) throw ValidationError("targeted attack needs target states");
        for (Eigen::Index k = 0; k < spec.c.size(); ++k) {
            const bool targeted = std::find(spec.target_states.begin(), spec.target_states.end(),
                                            static_cast<int>(k)) != spec.target_states.end();
            if (!targeted && spec.c[k] != 0.0) throw ValidationError("targeted attack is nonzero off target");
        }
    }
}

/// Stealthy linear attack a = H c.
inline Eigen::VectorXd craft_dc(const Eigen::MatrixXd& h, const Eigen::VectorXd& c) {
    require_dim(h.cols() == c.size(), "attack vector length must equal H columns");
    return h * c;
}

inline StateVector perturbed(const StateVector& x, const Eigen::VectorXd& c) {
    require_dim(c.size() == x.size(), "attack vector length must equal state length");
    return StateVector::from_flat(x.to_flat() + c);
}

/// Complete-knowledge AC attack a = h(x + c) - h(x) around the current estimate.
inline Eigen::VectorXd craft_ac(const NetworkModel& model, const StateVector& x_est, const Eigen::VectorXd& c) {
    require_dim(x_est.bus_count() == model.bus_count(), "state dimension mismatch");
    const StateVector shifted = perturbed(x_est, c);
    if ((shifted.v.array() <= 0.0).any()) throw ValidationError("perturbed state has a non-positive voltage");
    return grid::measure(model, shifted) - grid::measure(model, x_est);
}

/// Residual-matched variant of `craft_ac` for an attacker that also sees the
/// measurements. The carried-over residual r = z - h(x) is projected
/// W-orthogonally off the column space of H(x + c) and rescaled to its original
/// weighted norm, so x + c is a stationary point of the attacked WLS problem and
/// the BDD statistic there equals the clean one exactly. The correction to the
/// canonical vector is of order |c| * |r|.
inline Eigen::VectorXd craft_ac_matched(const NetworkModel& model, const estimation::MeasurementVector& meas,
                                        const StateVector& x_est, const Eigen::VectorXd& c) {
    meas.validate();
    require_dim(meas.z.size() == model.measurement_count(), "measurement count mismatch");
    const StateVector shifted = perturbed(x_est, c);
    if ((shifted.v.array() <= 0.0).any()) throw ValidationError("perturbed state has a non-positive voltage");
    const Eigen::VectorXd h_shifted = grid::measure(model, shifted);
    const Eigen::VectorXd r = meas.z - grid::measure(model, x_est);
    const Eigen::MatrixXd jac = grid::estimation_jacobian(model, shifted);
    const Eigen::MatrixXd hw = jac.transpose() * meas.weights.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(hw * jac);
    if (llt.info() != Eigen::Success) throw ObservabilityError("gain matrix is singular");
    Eigen::VectorXd r_new = r - jac * llt.solve(hw * r);
    const double target = estimation::weighted_sse(r, meas.weights);
    const double projected = estimation::weighted_sse(r_new, meas.weights);
    if (projected > 0.0) r_new *= std::sqrt(target / projected);
    return h_shifted + r_new - meas.z;
}

/// Draws an attack. Random mode picks a uniform subset (size uniform in
/// [1, n/4]) of non-slack-angle coordinates; each value has magnitude uniform in
/// [min_magnitude, magnitude] and a random sign. Targeted mode puts `magnitude`
/// on every requested coordinate.
template <class Rng>
AttackSpec sample_attack(Rng& rng, AttackMode mode, int n_states, double magnitude, int slack_index = 0,
                         const std::vector<int>& targets = {}, double min_magnitude = 0.0) {
    if (!(magnitude > 0.0)) throw ValidationError("attack magnitude must be positive");
    if (min_magnitude < 0.0 || min_magnitude > magnitude) {
        throw ValidationError("minimum attack magnitude must lie in [0, magnitude]");
    }
    AttackSpec spec;
    spec.mode = mode;
    spec.magnitude = magnitude;
    spec.c = Eigen::VectorXd::Zero(n_states);
    if (mode == AttackMode::targeted) {
        if (targets.empty()) throw ValidationError("targeted attack needs target states");
        for (int k : targets) {
            if (k < 0 || k >= n_states || k == slack_index) throw ValidationError("invalid attack target");
            spec.c[k] = magnitude;
        }
        spec.target_states = targets;
        std::sort(spec.target_states.begin(), spec.target_states.end());
        return spec;
    }
    std::vector<int> pool;
    for (int k = 0; k < n_states; ++k) {
        if (k != slack_index) pool.push_back(k);
    }
    const int max_count = std::max(1, n_states / 4);
    std::uniform_int_distribution<int> count_dist(1, max_count);
    const int count = count_dist(rng);
    // Partial Fisher-Yates: the first `count` entries become a uniform subset.
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    std::uniform_real_distribution<double> size(min_magnitude, magnitude);
    std::bernoulli_distribution sign(0.5);
    for (int i = 0; i < count; ++i) {
        const double value = size(rng);
        spec.c[pool[i]] = sign(rng) ? value : -value;
        spec.target_states.push_back(pool[i]);
    }
    std::sort(spec.target_states.begin(), spec.target_states.end());
    return spec;
}

struct AttackRecord {
    AttackSpec spec;
    Eigen::VectorXd a;
    estimation::MeasurementVector z_attacked;
    StateVector x_attacked_est;
    double clean_statistic = 0.0;
    double attacked_statistic = 0.0;
    double threshold = 0.0;
    double stealth_margin = 0.0;  // threshold - attacked statistic

    bool accepted() const noexcept { return stealth_margin >= 0.0; }
};

/// Crafts the residual-matched AC attack for `spec`, injects it into `meas`,
/// re-runs the estimator warm-started from the clean estimate and records the
/// BDD outcome.
inline AttackRecord launch(const NetworkModel& model, const estimation::MeasurementVector& meas,
                           const estimation::EstimationResult& clean, const AttackSpec& spec,
                           double alpha = 0.05, const estimation::AcOptions& opts = {}) {
    validate_spec(spec, model.slack_index());
    AttackRecord rec;
    rec.spec = spec;
    rec.a = craft_ac_matched(model, meas, clean.x_est, spec.c);
    rec.z_attacked = {meas.z + rec.a, meas.weights};
    const auto attacked = estimation::ac_estimate(model, rec.z_attacked, clean.x_est, opts);
    rec.x_attacked_est = attacked.x_est;
    const auto before = estimation::bdd_check(clean, meas, alpha);
    const auto after = estimation::bdd_check(attacked, rec.z_attacked, alpha);
    rec.clean_statistic = before.statistic;
    rec.attacked_statistic = after.statistic;
    rec.threshold = after.threshold;
    rec.stealth_margin = after.threshold - after.statistic;
    return rec;
}

struct AttackerConfig {
    AttackMode mode = AttackMode::random;
    double magnitude = 0.05;
    double min_magnitude = 0.0;
    std::vector<int> targets;
    double alpha = 0.05;
    int max_attempts = 10;
    estimation::NoiseModel noise;
};

struct StealthyAttack {
    AttackRecord record;
    int attempts = 0;
};

/// Complete-knowledge attacker used to build training windows: takes a noisy
/// measurement snapshot of the true state, estimates it, and injects a stealthy
/// attack. Attempts whose clean snapshot or attacked estimate fails BDD, or whose
/// perturbed state is infeasible, are redrawn up to `max_attempts` times.
class StealthyAttacker {
  public:
    StealthyAttacker(const NetworkModel& model, AttackerConfig cfg) : model_(&model), cfg_(std::move(cfg)) {}

    const AttackerConfig& config() const noexcept { return cfg_; }

    template <class Rng>
    std::optional<StealthyAttack> operator()(const StateVector& x_true, Rng& rng) const {
        for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
            const auto meas = estimation::noisy_measurements(*model_, x_true, cfg_.noise, rng);
            const auto spec = sample_attack(rng, cfg_.mode, model_->state_count(), cfg_.magnitude,
                                            model_->slack_index(), cfg_.targets, cfg_.min_magnitude);
            try {
                const auto clean = estimation::ac_estimate(*model_, meas, x_true);
                if (!clean.converged || !estimation::bdd_check(clean, meas, cfg_.alpha).passed) continue;
                auto rec = launch(*model_, meas, clean, spec, cfg_.alpha);
                if (rec.accepted()) return StealthyAttack{std::move(rec), attempt};
            } catch (const Error&) {
                continue;
            }
        }
        return std::nullopt;
    }

  private:
    const NetworkModel* model_;
    AttackerConfig cfg_;
};

inline std::string to_string(AttackMode m) { return m == AttackMode::random ? "random" : "targeted"; }

inline AttackMode attack_mode_from_string(const std::string& s) {
    if (s == "random") return AttackMode::random;
    if (s == "targeted") return AttackMode::targeted;
    throw ValidationError("unknown attack mode '" + s + "'");
}

/// One JSON-lines audit record: spec, measurement attack vector and stealth margin.
inline nlohmann::json to_json(const AttackRecord& rec) {
    nlohmann::json j;
    j["spec"] = {{"mode", to_string(rec.spec.mode)},
                 {"target_states", rec.spec.target_states},
                 {"magnitude", rec.spec.magnitude},
                 {"c", std::vector<double>(rec.spec.c.begin(), rec.spec.c.end())}};
    j["a"] = std::vector<double>(rec.a.begin(), rec.a.end());
    j["clean_statistic"] = rec.clean_statistic;
    j["attacked_statistic"] = rec.attacked_statistic;
    j["stealth_margin"] = rec.stealth_margin;
    return j;
}

inline void write_jsonl(std::ostream& out, const AttackRecord& rec) { out << to_json(rec).dump() << '\n'; }

}  // namespace fdia::attack
