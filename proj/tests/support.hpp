#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fdia/grid/case_io.hpp"
#include "fdia/grid/network.hpp"
#include "fdia/neural/dae.hpp"
#include "fdia/powerflow/newton.hpp"

namespace fdia::testing {

inline const grid::NetworkModel& ieee30() {
    static const grid::NetworkModel model = grid::load_case_file(FDIA_DATA_DIR "/ieee30.cdf");
    return model;
}

/// Slack bus 0 and one PQ bus joined by a single line.
inline grid::NetworkModel two_bus(double r = 0.0, double x = 0.1, double load_p = 0.0, double load_q = 0.0) {
    std::vector<grid::Bus> buses(2);
    buses[0].id = 1;
    buses[0].kind = grid::BusKind::slack;
    buses[1].id = 2;
    buses[1].load_p = load_p;
    buses[1].load_q = load_q;
    return grid::NetworkModel(buses, {{0, 1, r, x, 0.0, 1.0}});
}

/// A feasible operating point: the power-flow solution at a random load level,
/// nudged by a small random perturbation (slack angle kept at zero).
inline grid::StateVector random_state(const grid::NetworkModel& model, std::mt19937_64& rng, double nudge = 0.02) {
    std::uniform_real_distribution<double> level(0.7, 1.3);
    const auto sol = powerflow::solve(model, powerflow::LoadScenario::uniform(model.bus_count(), level(rng)));
    std::uniform_real_distribution<double> u(-nudge, nudge);
    grid::StateVector x = sol.state;
    for (int i = 0; i < model.bus_count(); ++i) {
        if (i != model.slack_index()) x.theta[i] += u(rng);
        x.v[i] += u(rng);
    }
    return x;
}

/// Central-difference Jacobian of `f` over the full state layout.
template <class F>
Eigen::MatrixXd finite_difference(F&& f, const grid::StateVector& x, double step) {
    const Eigen::VectorXd base = x.to_flat();
    const Eigen::VectorXd y0 = f(x);
    Eigen::MatrixXd jac(y0.size(), base.size());
    for (Eigen::Index k = 0; k < base.size(); ++k) {
        Eigen::VectorXd hi = base, lo = base;
        hi[k] += step;
        lo[k] -= step;
        jac.col(k) = (f(grid::StateVector::from_flat(hi)) - f(grid::StateVector::from_flat(lo))) / (2.0 * step);
    }
    return jac;
}

/// Regularized lower incomplete gamma ratio P(a, x) by its power series.
inline double gamma_p_series(double a, double x) {
    if (x <= 0.0) return 0.0;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Chi-square quantile by bisection on the series CDF.
inline double chi_square_quantile_oracle(double p, int dof) {
    double lo = 0.0, hi = 10.0 * dof + 100.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gamma_p_series(0.5 * dof, 0.5 * mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Weighted least squares through an SVD pseudo-inverse of sqrt(W) H.
inline Eigen::VectorXd wls_pinv_oracle(const Eigen::MatrixXd& h, const Eigen::VectorXd& w, const Eigen::VectorXd& z) {
    const Eigen::VectorXd s = w.cwiseSqrt();
    const Eigen::MatrixXd a = s.asDiagonal() * h;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd inv = svd.singularValues();
    for (Eigen::Index k = 0; k < inv.size(); ++k) inv[k] = inv[k] > 1e-12 * inv[0] ? 1.0 / inv[k] : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * (s.asDiagonal() * z);
}

inline double max_rel_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, double floor = 1.0) {
    return ((analytic - numeric).array().abs() / numeric.array().abs().max(floor)).maxCoeff();
}

/// Relative L2 error between the analytic BPTT gradient and central differences
/// of the MSE for a small random model (4/3/4 units, 2 states, window 3, batch 4).
/// Biases are randomized so that no ReLU kink sits at exactly zero.
inline double bptt_relative_error(neural::CellActivation act, std::uint64_t seed, double step = 1e-5) {
    const neural::DaeConfig cfg{3, 2, 4, 3, 4, act, 0};
    dataset::Normalizer norm;
    norm.mean = Eigen::VectorXd::Zero(2);
    norm.std = Eigen::VectorXd::Ones(2);
    neural::DaeModel m = neural::make_model(cfg, norm, seed);
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> g;
    for (auto* layer : {&m.params.enc1, &m.params.enc2, &m.params.dec1}) {
        for (Eigen::Index k = 0; k < layer->bias.size(); ++k) layer->bias[k] += 0.5 * g(rng);
    }
    neural::Sequence in(3, neural::Matrix(2, 4)), tg(3, neural::Matrix(2, 4));
    for (auto* seq : {&in, &tg})
        for (auto& x : *seq)
            for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(rng);

    const auto analytic = neural::backward(m, in, tg).grad;
    auto numeric = neural::DaeParams::zeros(cfg);
    neural::for_each_tensor_pair(m.params, numeric, [&](auto& p, auto& out) {
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double orig = p.data()[k];
            p.data()[k] = orig + step;
            const double hi = neural::mse(neural::forward(m, in), tg);
            p.data()[k] = orig - step;
            const double lo = neural::mse(neural::forward(m, in), tg);
            p.data()[k] = orig;
            out.data()[k] = (hi - lo) / (2.0 * step);
        }
    });
    double diff = 0.0, ref = 0.0;
    neural::for_each_tensor_pair(analytic, numeric, [&](const auto& a, const auto& b) {
        diff += (a - b).squaredNorm();
        ref += b.squaredNorm();
    });
    return std::sqrt(diff / std::max(ref, 1e-300));
}

}  // namespace fdia::testing
