#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "fdia/error.hpp"
#include "fdia/grid/network.hpp"

namespace fdia::grid {

/// Complex bus voltages V_i = v_i * exp(j theta_i).
inline Eigen::VectorXcd complex_voltages(const StateVector& x) {
    Eigen::VectorXcd out(x.bus_count());
    for (int i = 0; i < x.bus_count(); ++i) out[i] = std::polar(x.v[i], x.theta[i]);
    return out;
}

/// Net complex power injected at every bus, S = V .* conj(Y V).
inline Eigen::VectorXcd bus_injections(const NetworkModel& model, const StateVector& x) {
    require_dim(x.bus_count() == model.bus_count() && x.v.size() == x.theta.size(),
                        "state dimension does not match network");
    const Eigen::VectorXcd volts = complex_voltages(x);
    const Eigen::VectorXcd current = model.y_bus() * volts;
    return volts.cwiseProduct(current.conjugate());
}

/// Partial derivatives of the bus injections with respect to angle and magnitude,
/// each N x N and complex (real part is P, imaginary part is Q).
struct InjectionDerivatives {
    Eigen::MatrixXcd d_theta;
    Eigen::MatrixXcd d_v;
};

inline InjectionDerivatives injection_derivatives(const NetworkModel& model, const StateVector& x) {
    const auto& y = model.y_bus();
    const Eigen::VectorXcd volts = complex_voltages(x);
    const Eigen::VectorXcd current = y * volts;
    const Eigen::VectorXcd unit = volts.cwiseQuotient(x.v.cast<std::complex<double>>());
    const auto n = volts.size();

    InjectionDerivatives d{Eigen::MatrixXcd(n, n), Eigen::MatrixXcd(n, n)};
    const std::complex<double> j(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V))
            const std::complex<double> diag_i = (i == k) ? current[i] : std::complex<double>(0.0);
            d.d_theta(i, k) = j * volts[i] * std::conj(diag_i - y(i, k) * volts[k]);
            // dS/dv = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
            std::complex<double> dv = volts[i] * std::conj(y(i, k) * unit[k]);
            if (i == k) dv += std::conj(current[i]) * unit[i];
            d.d_v(i, k) = dv;
        }
    }
    return d;
}

namespace detail {

struct FlowTerms {
    int self;
    int other;
    Complex y_self;
    Complex y_mutual;
};

inline FlowTerms flow_terms(const NetworkModel& model, int branch, FlowEnd end) {
    const auto& br = model.branches()[branch];
    const auto adm = branch_admittance(br);
    if (end == FlowEnd::from) return {br.from, br.to, adm.ff, adm.ft};
    return {br.to, br.from, adm.tt, adm.tf};
}

inline void check_location(const NetworkModel& model, const MeasurementKind& kind) {
    const bool on_branch =
        kind.type == MeasurementType::p_flow || kind.type == MeasurementType::q_flow;
    const int limit = on_branch ? model.branch_count() : model.bus_count();
    if (kind.location < 0 || kind.location >= limit) {
        throw ValidationError("measurement location " + std::to_string(kind.location) +
                              " out of range");
    }
}

}  // namespace detail

/// Noise-free measurement function h(x), ordered as the network's measurement plan.
inline Eigen::VectorXd measure(const NetworkModel& model, const StateVector& x) {
    const Eigen::VectorXcd s = bus_injections(model, x);
    const auto& plan = model.measurement_plan();
    Eigen::VectorXd h(plan.size());
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const auto& m = plan[r];
        switch (m.type) {
            case MeasurementType::p_injection: h[r] = s[m.location].real(); break;
            case MeasurementType::q_injection: h[r] = s[m.location].imag(); break;
            case MeasurementType::v_magnitude: h[r] = x.v[m.location]; break;
            case MeasurementType::p_flow:
            case MeasurementType::q_flow: {
                const auto t = detail::flow_terms(model, m.location, m.end);
                const double vi = x.v[t.self];
                const double vk = x.v[t.other];
                const double ang = x.theta[t.self] - x.theta[t.other];
                const double g = t.y_mutual.real();
                const double b = t.y_mutual.imag();
                if (m.type == MeasurementType::p_flow) {
                    h[r] = vi * vi * t.y_self.real() + vi * vk * (g * std::cos(ang) + b * std::sin(ang));
                } else {
                    h[r] = -vi * vi * t.y_self.imag() + vi * vk * (g * std::sin(ang) - b * std::cos(ang));
                }
                break;
            }
        }
    }
    return h;
}

/// Analytic Jacobian dh/dx over the full 2N layout (slack angle column included).
inline Eigen::MatrixXd jacobian(const NetworkModel& model, const StateVector& x) {
    const int n = model.bus_count();
    const auto& plan = model.measurement_plan();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(plan.size()), 2 * n);

    bool need_injection = false;
    for (const auto& m : plan) {
        need_injection |= m.type == MeasurementType::p_injection || m.type == MeasurementType::q_injection;
    }
    InjectionDerivatives inj;
    if (need_injection) inj = injection_derivatives(model, x);
    else require_dim(x.bus_count() == n, "state dimension does not match network");

    for (std::size_t r = 0; r < plan.size(); ++r) {
        const auto& m = plan[r];
        const auto row = static_cast<Eigen::Index>(r);
        switch (m.type) {
            case MeasurementType::p_injection:
                jac.row(row).head(n) = inj.d_theta.row(m.location).real();
                jac.row(row).tail(n) = inj.d_v.row(m.location).real();
                break;
            case MeasurementType::q_injection:
                jac.row(row).head(n) = inj.d_theta.row(m.location).imag();
                jac.row(row).tail(n) = inj.d_v.row(m.location).imag();
                break;
            case MeasurementType::v_magnitude: jac(row, n + m.location) = 1.0; break;
            case MeasurementType::p_flow:
            case MeasurementType::q_flow: {
                const auto t = detail::flow_terms(model, m.location, m.end);
                const double vi = x.v[t.self];
                const double vk = x.v[t.other];
                const double ang = x.theta[t.self] - x.theta[t.other];
                const double g = t.y_mutual.real();
                const double b = t.y_mutual.imag();
                const double c = std::cos(ang);
                const double s = std::sin(ang);
                if (m.type == MeasurementType::p_flow) {
                    const double d_ang = vi * vk * (-g * s + b * c);
                    jac(row, t.self) = d_ang;
                    jac(row, t.other) = -d_ang;
                    jac(row, n + t.self) = 2.0 * vi * t.y_self.real() + vk * (g * c + b * s);
                    jac(row, n + t.other) = vi * (g * c + b * s);
                } else {
                    const double d_ang = vi * vk * (g * c + b * s);
                    jac(row, t.self) = d_ang;
                    jac(row, t.other) = -d_ang;
                    jac(row, n + t.self) = -2.0 * vi * t.y_self.imag() + vk * (g * s - b * c);
                    jac(row, n + t.other) = vi * (g * s - b * c);
                }
                break;
            }
        }
    }
    return jac;
}

/// Jacobian restricted to the estimated coordinates (slack angle column removed).
inline Eigen::MatrixXd estimation_jacobian(const NetworkModel& model, const StateVector& x) {
    const Eigen::MatrixXd full = jacobian(model, x);
    const int n = model.bus_count();
    const int slack = model.slack_index();
    Eigen::MatrixXd out(full.rows(), full.cols() - 1);
    out.leftCols(slack) = full.leftCols(slack);
    out.middleCols(slack, n - 1 - slack) = full.middleCols(slack + 1, n - 1 - slack);
    out.rightCols(n) = full.rightCols(n);
    return out;
}

inline void NetworkModel::validate_plan() const {
    if (plan_.empty()) throw ValidationError("measurement plan is empty");
    for (const auto& m : plan_) detail::check_location(*this, m);
    if (measurement_count() < estimated_state_count()) {
        throw ValidationError("measurement plan has fewer channels than estimated states");
    }
    const Eigen::MatrixXd h = estimation_jacobian(*this, StateVector::flat(bus_count()));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
    if (qr.rank() < estimated_state_count()) {
        throw ObservabilityError("measurement plan leaves the network unobservable (rank " +
                                 std::to_string(qr.rank()) + " of " +
                                 std::to_string(estimated_state_count()) + ")");
    }
}

}  // namespace fdia::grid
