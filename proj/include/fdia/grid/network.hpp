#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdia/error.hpp"

namespace fdia::grid {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

enum class BusKind { slack, pv, pq };

/// Bus data in per-unit on the system base.
struct Bus {
    int id = 0;  // external bus number from the case file
    BusKind kind = BusKind::pq;
    double load_p = 0.0;
    double load_q = 0.0;
    double gen_p = 0.0;
    double voltage_setpoint = 1.0;
    double shunt_g = 0.0;
    double shunt_b = 0.0;
};

/// Pi-model branch between two bus indices (0-based positions in the bus list).
/// The off-nominal tap sits on the from side.
struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap_ratio = 1.0;
};

enum class MeasurementType { p_injection, q_injection, p_flow, q_flow, v_magnitude };
enum class FlowEnd { from, to };

/// One sensor channel. `location` is a bus index for injections and voltage
/// magnitudes, a branch index for flows.
struct MeasurementKind {
    MeasurementType type = MeasurementType::v_magnitude;
    int location = 0;
    FlowEnd end = FlowEnd::from;

    bool is_power() const noexcept { return type != MeasurementType::v_magnitude; }
    friend bool operator==(const MeasurementKind&, const MeasurementKind&) = default;
};

using MeasurementPlan = std::vector<MeasurementKind>;

/// Polar bus voltages. Layout of the flat form: [theta_0..theta_{N-1}, v_0..v_{N-1}].
struct StateVector {
    Eigen::VectorXd theta;
    Eigen::VectorXd v;

    static StateVector flat(int n_bus) {
        return {Eigen::VectorXd::Zero(n_bus), Eigen::VectorXd::Ones(n_bus)};
    }

    static StateVector from_flat(const Eigen::Ref<const Eigen::VectorXd>& values) {
        require_dim(values.size() % 2 == 0, "state vector length must be even");
        const auto n = values.size() / 2;
        return {values.head(n), values.tail(n)};
    }

    int bus_count() const noexcept { return static_cast<int>(theta.size()); }
    int size() const noexcept { return static_cast<int>(theta.size() + v.size()); }

    Eigen::VectorXd to_flat() const {
        Eigen::VectorXd out(theta.size() + v.size());
        out << theta, v;
        return out;
    }

    friend bool operator==(const StateVector& a, const StateVector& b) {
        return a.theta.size() == b.theta.size() && a.v.size() == b.v.size() && a.theta == b.theta &&
               a.v == b.v;
    }
};

/// Admittance blocks of a single branch: [I_f; I_t] = [[ff, ft]; [tf, tt]] [V_f; V_t].
struct BranchAdmittance {
    Complex ff, ft, tf, tt;
};

inline BranchAdmittance branch_admittance(const Branch& br) {
    if (br.r == 0.0 && br.x == 0.0) {
        throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                              " has zero impedance");
    }
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex half_charging(0.0, br.b_charging / 2.0);
    const double tap = br.tap_ratio;
    return {(ys + half_charging) / (tap * tap), -ys / tap, -ys / tap, ys + half_charging};
}

/// Dense bus admittance matrix. Assembly visits branches in list order so the
/// result is bitwise reproducible.
inline ComplexMatrix build_ybus(std::span<const Bus> buses, std::span<const Branch> branches) {
    const auto n = static_cast<Eigen::Index>(buses.size());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : branches) {
        const auto adm = branch_admittance(br);
        y(br.from, br.from) += adm.ff;
        y(br.from, br.to) += adm.ft;
        y(br.to, br.from) += adm.tf;
        y(br.to, br.to) += adm.tt;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, i) += Complex(buses[i].shunt_g, buses[i].shunt_b);
    }
    return y;
}

/// Injections at every bus, flows from-end on every branch, magnitudes at every bus.
inline MeasurementPlan full_measurement_plan(int n_bus, int n_branch) {
    MeasurementPlan plan;
    plan.reserve(3 * n_bus + 2 * n_branch);
    for (int i = 0; i < n_bus; ++i) plan.push_back({MeasurementType::p_injection, i});
    for (int i = 0; i < n_bus; ++i) plan.push_back({MeasurementType::q_injection, i});
    for (int k = 0; k < n_branch; ++k) plan.push_back({MeasurementType::p_flow, k, FlowEnd::from});
    for (int k = 0; k < n_branch; ++k) plan.push_back({MeasurementType::q_flow, k, FlowEnd::from});
    for (int i = 0; i < n_bus; ++i) plan.push_back({MeasurementType::v_magnitude, i});
    return plan;
}

/// Immutable validated network. Holds the admittance matrix and measurement plan
/// shared by the estimator and the attacker.
class NetworkModel {
  public:
    NetworkModel(std::vector<Bus> buses, std::vector<Branch> branches,
                 std::optional<MeasurementPlan> plan = std::nullopt, double base_mva = 100.0)
        : buses_(std::move(buses)), branches_(std::move(branches)), base_mva_(base_mva) {
        validate_topology();
        y_bus_ = build_ybus(buses_, branches_);
        plan_ = plan ? std::move(*plan)
                     : full_measurement_plan(bus_count(), branch_count());
        validate_plan();
    }

    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    const ComplexMatrix& y_bus() const noexcept { return y_bus_; }
    const MeasurementPlan& measurement_plan() const noexcept { return plan_; }
    double base_mva() const noexcept { return base_mva_; }

    int bus_count() const noexcept { return static_cast<int>(buses_.size()); }
    int branch_count() const noexcept { return static_cast<int>(branches_.size()); }
    int slack_index() const noexcept { return slack_; }

    /// Number of full state coordinates (angles and magnitudes of every bus).
    int state_count() const noexcept { return 2 * bus_count(); }
    /// Number of estimated coordinates: the slack angle is pinned.
    int estimated_state_count() const noexcept { return 2 * bus_count() - 1; }
    int measurement_count() const noexcept { return static_cast<int>(plan_.size()); }

    /// Copy of this network with a different measurement plan.
    NetworkModel with_plan(MeasurementPlan plan) const {
        return NetworkModel(buses_, branches_, std::move(plan), base_mva_);
    }

  private:
    void validate_topology() {
        const int n = bus_count();
        if (n == 0) throw ValidationError("network has no buses");
        int slack_count = 0;
        for (int i = 0; i < n; ++i) {
            const auto& b = buses_[i];
            for (double q : {b.load_p, b.load_q, b.gen_p, b.voltage_setpoint, b.shunt_g, b.shunt_b}) {
                if (!std::isfinite(q)) {
                    throw ValidationError("bus " + std::to_string(b.id) + " has non-finite data");
                }
            }
            if (b.kind == BusKind::slack) {
                ++slack_count;
                slack_ = i;
            }
            if (b.kind != BusKind::pq && !(b.voltage_setpoint > 0.0)) {
                throw ValidationError("bus " + std::to_string(b.id) + " needs a positive voltage setpoint");
            }
        }
        if (slack_count != 1) {
            throw ValidationError("network must have exactly one slack bus, found " +
                                  std::to_string(slack_count));
        }
        std::set<std::pair<int, int>> seen;
        for (const auto& br : branches_) {
            if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) {
                throw ValidationError("branch endpoint out of range");
            }
            if (br.from == br.to) throw ValidationError("branch connects a bus to itself");
            if (!(br.tap_ratio > 0.0)) throw ValidationError("tap ratio must be positive");
            if (br.r == 0.0 && br.x == 0.0) throw ValidationError("branch has zero impedance");
            const auto key = std::minmax(br.from, br.to);
            if (!seen.insert(key).second) {
                throw ValidationError("duplicate branch between buses " +
                                      std::to_string(buses_[key.first].id) + " and " +
                                      std::to_string(buses_[key.second].id));
            }
        }
    }

    void validate_plan() const;

    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    ComplexMatrix y_bus_;
    MeasurementPlan plan_;
    double base_mva_;
    int slack_ = -1;
};

/// Maps between the full 2N state layout and the 2N-1 estimation layout that
/// drops the slack angle.
inline Eigen::VectorXd to_estimation_vector(const StateVector& x, int slack) {
    const int n = x.bus_count();
    Eigen::VectorXd out(2 * n - 1);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        if (i != slack) out[k++] = x.theta[i];
    }
    out.tail(n) = x.v;
    return out;
}

inline StateVector from_estimation_vector(const Eigen::Ref<const Eigen::VectorXd>& values, int slack) {
    const auto n = (values.size() + 1) / 2;
    StateVector x{Eigen::VectorXd::Zero(n), values.tail(n)};
    int k = 0;
    for (int i = 0; i < n; ++i) {
        if (i != slack) x.theta[i] = values[k++];
    }
    return x;
}

/// Full-layout index (angles first) of estimation column `k`.
inline int full_index_of_estimated(int k, int n_bus, int slack) {
    if (k >= n_bus - 1) return k + 1;
    return k < slack ? k : k + 1;
}

}  // namespace fdia::grid

#include "fdia/grid/measurement.hpp"
