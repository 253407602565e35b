#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/grid/measurement.hpp"
#include "fdia/grid/network.hpp"

namespace fdia::powerflow {

using grid::NetworkModel;
using grid::StateVector;

/// Per-bus multipliers on the base loads for one hour. An empty `scale_q`
/// means constant power factor (Q scales with P).
struct LoadScenario {
    long timestamp = 0;
    Eigen::VectorXd scale_p;
    Eigen::VectorXd scale_q;

    static LoadScenario uniform(int n_bus, double scale, long timestamp = 0) {
        return {timestamp, Eigen::VectorXd::Constant(n_bus, scale), Eigen::VectorXd()};
    }
};

struct SolverOptions {
    double tolerance = 1e-8;
    int max_iterations = 20;
};

struct PowerFlowSolution {
    StateVector state;
    int iterations = 0;
    double max_mismatch = 0.0;
    std::vector<double> mismatch_history;  // max |mismatch| before each update, then final
};

inline void validate_scenario(const NetworkModel& model, const LoadScenario& sc) {
    const auto n = model.bus_count();
    if (sc.scale_p.size() != n || (sc.scale_q.size() != 0 && sc.scale_q.size() != n)) {
        throw DimensionError("load scenario size does not match bus count");
    }
    auto check = [](const Eigen::VectorXd& s) {
        for (double v : s) {
            if (!std::isfinite(v) || v < 0.0 || v > 3.0) {
                throw ValidationError("load multiplier outside [0, 3]: " + std::to_string(v));
            }
        }
    };
    check(sc.scale_p);
    check(sc.scale_q);
}

/// Scheduled net injections (generation minus scaled load) at every bus.
inline Eigen::VectorXcd scheduled_injections(const NetworkModel& model, const LoadScenario& sc) {
    const auto& buses = model.buses();
    Eigen::VectorXcd s(model.bus_count());
    for (int i = 0; i < model.bus_count(); ++i) {
        const double kp = sc.scale_p[i];
        const double kq = sc.scale_q.size() ? sc.scale_q[i] : kp;
        s[i] = {buses[i].gen_p - kp * buses[i].load_p, -kq * buses[i].load_q};
    }
    return s;
}

/// Newton-Raphson AC power flow in polar coordinates. Unknowns are the angles of
/// every non-slack bus and the magnitudes of PQ buses; PV magnitudes are held at
/// their setpoints and reactive limits are not enforced.
inline PowerFlowSolution solve(const NetworkModel& model, const LoadScenario& scenario,
                               const SolverOptions& opts = {},
                               const std::optional<StateVector>& warm_start = std::nullopt) {
    if (!(opts.tolerance > 0.0)) throw ValidationError("tolerance must be positive");
    validate_scenario(model, scenario);
    const int n = model.bus_count();
    const auto& buses = model.buses();

    std::vector<int> angle_buses;
    std::vector<int> mag_buses;
    for (int i = 0; i < n; ++i) {
        if (buses[i].kind != grid::BusKind::slack) angle_buses.push_back(i);
        if (buses[i].kind == grid::BusKind::pq) mag_buses.push_back(i);
    }
    const int na = static_cast<int>(angle_buses.size());
    const int nm = static_cast<int>(mag_buses.size());

    StateVector x = warm_start ? *warm_start : StateVector::flat(n);
    require_dim(x.bus_count() == n, "warm start dimension does not match network");
    for (int i = 0; i < n; ++i) {
        if (buses[i].kind != grid::BusKind::pq) x.v[i] = buses[i].voltage_setpoint;
    }
    x.theta[model.slack_index()] = 0.0;

    const Eigen::VectorXcd target = scheduled_injections(model, scenario);
    auto mismatch = [&](const StateVector& s) {
        const Eigen::VectorXcd calc = grid::bus_injections(model, s);
        Eigen::VectorXd f(na + nm);
        for (int k = 0; k < na; ++k) f[k] = target[angle_buses[k]].real() - calc[angle_buses[k]].real();
        for (int k = 0; k < nm; ++k) f[na + k] = target[mag_buses[k]].imag() - calc[mag_buses[k]].imag();
        return f;
    };

    PowerFlowSolution sol;
    Eigen::VectorXd f = mismatch(x);
    double worst = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    sol.mismatch_history.push_back(worst);
    int it = 0;
    while (worst > opts.tolerance) {
        if (!std::isfinite(worst)) throw NumericalError("power flow mismatch is not finite");
        if (it >= opts.max_iterations) {
            throw ConvergenceError("power flow did not converge in " + std::to_string(it) +
                                       " iterations (mismatch " + std::to_string(worst) + ")",
                                   worst);
        }
        const auto d = grid::injection_derivatives(model, x);
        Eigen::MatrixXd jac(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            for (int c = 0; c < na; ++c) jac(r, c) = d.d_theta(angle_buses[r], angle_buses[c]).real();
            for (int c = 0; c < nm; ++c) jac(r, na + c) = d.d_v(angle_buses[r], mag_buses[c]).real();
        }
        for (int r = 0; r < nm; ++r) {
            for (int c = 0; c < na; ++c) jac(na + r, c) = d.d_theta(mag_buses[r], angle_buses[c]).imag();
            for (int c = 0; c < nm; ++c) jac(na + r, na + c) = d.d_v(mag_buses[r], mag_buses[c]).imag();
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            throw ObservabilityError("singular power flow Jacobian: scenario is infeasible");
        }
        const Eigen::VectorXd dx = lu.solve(f);
        for (int k = 0; k < na; ++k) x.theta[angle_buses[k]] += dx[k];
        for (int k = 0; k < nm; ++k) x.v[mag_buses[k]] += dx[na + k];
        ++it;
        f = mismatch(x);
        worst = f.cwiseAbs().maxCoeff();
        sol.mismatch_history.push_back(worst);
    }
    if ((x.v.array() <= 0.0).any()) throw NumericalError("power flow produced a non-positive voltage");
    sol.state = std::move(x);
    sol.iterations = it;
    sol.max_mismatch = worst;
    return sol;
}

struct TrajectoryFailure {
    std::size_t index;
    std::string message;
};

struct Trajectory {
    std::vector<StateVector> states;
    std::vector<long> timestamps;       // timestamp of each solved state
    std::vector<TrajectoryFailure> failures;
};

/// Solves each scenario in order. Failed hours are recorded and skipped; the
/// next hour then restarts from flat start.
inline Trajectory trajectory(const NetworkModel& model, const std::vector<LoadScenario>& scenarios,
                             const SolverOptions& opts = {}, bool warm_start = true) {
    Trajectory out;
    out.states.reserve(scenarios.size());
    std::optional<StateVector> previous;
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
        try {
            auto sol = solve(model, scenarios[k], opts, warm_start ? previous : std::nullopt);
            previous = sol.state;
            out.states.push_back(std::move(sol.state));
            out.timestamps.push_back(scenarios[k].timestamp);
        } catch (const Error& e) {
            out.failures.push_back({k, e.what()});
            previous.reset();
        }
    }
    return out;
}

}  // namespace fdia::powerflow
