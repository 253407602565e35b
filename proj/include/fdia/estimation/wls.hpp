#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/grid/measurement.hpp"
#include "fdia/grid/network.hpp"

namespace fdia::estimation {

using grid::NetworkModel;
using grid::StateVector;

/// Sensor readings with the diagonal of W (1 / sigma^2 per channel).
struct MeasurementVector {
    Eigen::VectorXd z;
    Eigen::VectorXd weights;

    void validate() const {
        require_dim(z.size() == weights.size(), "measurement and weight lengths differ");
        if ((weights.array() <= 0.0).any() || !weights.allFinite()) {
            throw ValidationError("measurement weights must be positive and finite");
        }
    }
};

struct NoiseModel {
    double sigma_power = 0.01;
    double sigma_voltage = 0.004;

    double sigma_for(const grid::MeasurementKind& kind) const {
        return kind.is_power() ? sigma_power : sigma_voltage;
    }
};

inline Eigen::VectorXd plan_weights(const grid::MeasurementPlan& plan, const NoiseModel& noise = {}) {
    Eigen::VectorXd w(plan.size());
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const double s = noise.sigma_for(plan[r]);
        w[r] = 1.0 / (s * s);
    }
    return w;
}

/// h(x) plus zero-mean Gaussian noise, weights matched to the noise model.
template <class Rng>
MeasurementVector noisy_measurements(const NetworkModel& model, const StateVector& x,
                                     const NoiseModel& noise, Rng& rng) {
    const auto& plan = model.measurement_plan();
    MeasurementVector m{grid::measure(model, x), plan_weights(plan, noise)};
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t r = 0; r < plan.size(); ++r) m.z[r] += noise.sigma_for(plan[r]) * gauss(rng);
    return m;
}

inline double weighted_sse(const Eigen::VectorXd& residual, const Eigen::VectorXd& weights) {
    require_dim(residual.size() == weights.size(), "residual and weight lengths differ");
    return residual.cwiseProduct(residual).dot(weights);
}

/// F(x) = (z - h(x))^T W (z - h(x)).
inline double objective(const NetworkModel& model, const MeasurementVector& meas, const StateVector& x) {
    meas.validate();
    require_dim(meas.z.size() == model.measurement_count(), "measurement count mismatch");
    return weighted_sse(meas.z - grid::measure(model, x), meas.weights);
}

/// Closed-form linear estimate.
struct LinearEstimate {
    Eigen::VectorXd x;
    double objective = 0.0;
    Eigen::VectorXd residual;
};

/// x = (H^T W H)^{-1} H^T W z through a Cholesky factorization of the gain matrix.
inline LinearEstimate dc_estimate(const Eigen::MatrixXd& h, const MeasurementVector& meas) {
    meas.validate();
    require_dim(h.rows() == meas.z.size(), "H rows must match measurement count");
    const Eigen::MatrixXd hw = h.transpose() * meas.weights.asDiagonal();
    const Eigen::MatrixXd gain = hw * h;
    Eigen::LLT<Eigen::MatrixXd> llt(gain);
    if (llt.info() != Eigen::Success) throw ObservabilityError("gain matrix is singular");
    // LLT succeeds on some numerically rank-deficient matrices; check the pivots.
    const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
    if (diag.minCoeff() <= 1e-10 * diag.maxCoeff()) throw ObservabilityError("gain matrix is singular");
    LinearEstimate out;
    out.x = llt.solve(hw * meas.z);
    out.residual = meas.z - h * out.x;
    out.objective = weighted_sse(out.residual, meas.weights);
    return out;
}

struct TraceRow {
    int iteration;
    double objective;
    double step_norm;
};

struct EstimationResult {
    StateVector x_est;
    double objective = 0.0;
    Eigen::VectorXd residual;
    int iterations = 0;
    bool converged = false;
    int state_count = 0;  // estimated coordinates, used for the BDD degrees of freedom
    std::vector<TraceRow> trace;
};

struct AcOptions {
    double tolerance = 1e-9;
    int max_iterations = 30;
    int max_halvings = 20;
};

/// Gauss-Newton weighted least squares with a step-halving line search on F.
/// The slack angle stays pinned at the value it has in `x0` (0 for flat start).
inline EstimationResult ac_estimate(const NetworkModel& model, const MeasurementVector& meas,
                                    const StateVector& x0, const AcOptions& opts = {}) {
    meas.validate();
    require_dim(meas.z.size() == model.measurement_count(), "measurement count mismatch");
    require_dim(x0.bus_count() == model.bus_count(), "initial state dimension mismatch");
    const int slack = model.slack_index();

    EstimationResult res;
    res.state_count = model.estimated_state_count();
    StateVector x = x0;
    Eigen::VectorXd r = meas.z - grid::measure(model, x);
    double f = weighted_sse(r, meas.weights);

    for (int it = 1; it <= opts.max_iterations; ++it) {
        const Eigen::MatrixXd h = grid::estimation_jacobian(model, x);
        const Eigen::MatrixXd hw = h.transpose() * meas.weights.asDiagonal();
        Eigen::LLT<Eigen::MatrixXd> llt(hw * h);
        if (llt.info() != Eigen::Success) throw ObservabilityError("gain matrix is singular");
        const Eigen::VectorXd dx = llt.solve(hw * r);
        if (!dx.allFinite()) throw NumericalError("non-finite Gauss-Newton step");
        const double step_norm = dx.cwiseAbs().maxCoeff();
        res.iterations = it;
        if (step_norm <= opts.tolerance) {
            res.trace.push_back({it, f, step_norm});
            res.converged = true;
            break;
        }
        const Eigen::VectorXd base = grid::to_estimation_vector(x, slack);
        double alpha = 1.0;
        StateVector trial;
        Eigen::VectorXd r_trial;
        double f_trial = 0.0;
        for (int k = 0;; ++k) {
            trial = grid::from_estimation_vector(base + alpha * dx, slack);
            trial.theta[slack] = x.theta[slack];
            r_trial = meas.z - grid::measure(model, trial);
            f_trial = weighted_sse(r_trial, meas.weights);
            if ((trial.v.array() > 0.0).all() && f_trial <= f) break;
            if (k == opts.max_halvings) {
                // No descent along the step; x is stationary to working precision.
                f_trial = f;
                trial = x;
                r_trial = r;
                res.converged = step_norm <= 1e3 * opts.tolerance;
                break;
            }
            alpha *= 0.5;
        }
        res.trace.push_back({it, f_trial, alpha * step_norm});
        const bool stalled = trial == x;
        x = std::move(trial);
        r = std::move(r_trial);
        f = f_trial;
        if (stalled) break;
        if (alpha * step_norm <= opts.tolerance) {
            res.converged = true;
            break;
        }
    }
    res.x_est = std::move(x);
    res.residual = std::move(r);
    res.objective = f;
    return res;
}

/// Writes `iteration,objective,step_norm` rows.
inline void write_trace_csv(std::ostream& out, const EstimationResult& res) {
    out << "iteration,objective,step_norm\n";
    out.precision(17);
    for (const auto& row : res.trace) out << row.iteration << ',' << row.objective << ',' << row.step_norm << '\n';
}

struct BddVerdict {
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed = true;
    int dof = 0;
};

/// Upper quantile of the chi-square distribution: P(X <= q) = p.
inline double chi_square_quantile(double p, int dof) {
    if (dof <= 0) throw ValidationError("chi-square degrees of freedom must be positive");
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

/// Chi-square test on the weighted residual sum of squares.
inline BddVerdict bdd_test(double statistic, int measurement_count, int state_count, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    BddVerdict v;
    v.dof = measurement_count - state_count;
    if (v.dof <= 0) throw ValidationError("BDD needs more measurements than states");
    v.statistic = statistic;
    v.threshold = chi_square_quantile(1.0 - alpha, v.dof);
    v.passed = statistic <= v.threshold;
    return v;
}

inline BddVerdict bdd_check(const EstimationResult& result, const MeasurementVector& meas, double alpha = 0.05) {
    return bdd_test(weighted_sse(result.residual, meas.weights), static_cast<int>(meas.z.size()),
                    result.state_count, alpha);
}

inline BddVerdict bdd_check(const LinearEstimate& result, const MeasurementVector& meas, double alpha = 0.05) {
    return bdd_test(weighted_sse(result.residual, meas.weights), static_cast<int>(meas.z.size()),
                    static_cast<int>(result.x.size()), alpha);
}

}  // namespace fdia::estimation
