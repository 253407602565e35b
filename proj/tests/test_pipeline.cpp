#include <gtest/gtest.h>

#include <random>

#include "fdia/pipeline/pipeline.hpp"
#include "support.hpp"

using namespace fdia;
using pipeline::IdentificationThresholds;
using pipeline::StateQueue;
using grid::StateVector;

namespace {

StateVector state_with(int n_bus, double offset) {
    StateVector x = StateVector::flat(n_bus);
    for (int i = 1; i < n_bus; ++i) x.theta[i] = -0.01 * i + offset;
    x.v.array() += offset;
    return x;
}

/// A model whose output is always `fixed`: zero weights and zero head bias, with
/// the normalizer mean at `fixed`.
neural::DaeModel constant_model(const StateVector& fixed, int window = 5) {
    const int n = fixed.size();
    neural::DaeConfig cfg{window, n, 4, 3, 4, neural::CellActivation::relu, 0};
    dataset::Normalizer norm;
    norm.mean = fixed.to_flat();
    norm.std = Eigen::VectorXd::Constant(n, 0.5);
    return {cfg, neural::DaeParams::zeros(cfg), norm, 0};
}

}  // namespace

TEST(StateQueue, KeepsNewestCapacityItems) {
    StateQueue q(3);
    EXPECT_FALSE(q.full());
    EXPECT_THROW(q.newest(), ValidationError);
    for (int k = 0; k < 5; ++k) q.push(state_with(3, 0.001 * k));
    EXPECT_TRUE(q.full());
    EXPECT_EQ(q.size(), 3);
    EXPECT_EQ(q[0], state_with(3, 0.002));
    EXPECT_EQ(q.newest(), state_with(3, 0.004));
    EXPECT_THROW(q.push(state_with(4, 0.0)), DimensionError);
    EXPECT_THROW(StateQueue(0), ValidationError);
}

TEST(WarmUp, UsesLastStates) {
    std::vector<StateVector> states;
    for (int k = 0; k < 8; ++k) states.push_back(state_with(3, 0.001 * k));
    const auto q = pipeline::warm_up(5, states);
    EXPECT_EQ(q.capacity(), 4);
    EXPECT_TRUE(q.full());
    EXPECT_EQ(q[0], states[4]);
    EXPECT_EQ(q.newest(), states[7]);

    const std::vector<StateVector> exact(states.begin(), states.begin() + 4);
    EXPECT_TRUE(pipeline::warm_up(5, exact).full());
    EXPECT_THROW(pipeline::warm_up(5, {states.begin(), states.begin() + 3}), ValidationError);
    EXPECT_THROW(pipeline::warm_up(5, {}), ValidationError);
    EXPECT_THROW(pipeline::warm_up(1, states), ValidationError);
}

TEST(Identify, IdenticalStatesFlagNothing) {
    const auto x = state_with(30, 0.0);
    const auto id = pipeline::identify(x, x, {});
    EXPECT_TRUE(id.flagged.empty());
    EXPECT_EQ(id.deltas.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Identify, FlagsExactlyTheShiftedCoordinate) {
    const auto x = state_with(30, 0.0);
    const IdentificationThresholds thr{0.01, 0.02};
    for (int k : {3, 29, 30, 41, 59}) {
        StateVector y = StateVector::from_flat(x.to_flat());
        const double limit = k < 30 ? thr.theta : thr.v;
        Eigen::VectorXd f = y.to_flat();
        f[k] += 2.0 * limit;
        y = StateVector::from_flat(f);
        EXPECT_EQ(pipeline::identify(y, x, thr).flagged, std::vector<int>{k});
        f[k] = x.to_flat()[k] + 0.999 * limit;
        EXPECT_TRUE(pipeline::identify(StateVector::from_flat(f), x, thr).flagged.empty());
    }
}

TEST(Identify, HigherThresholdsFlagSubsets) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    const auto x = state_with(30, 0.0);
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd f = x.to_flat();
        for (auto& v : f) v += u(rng);
        const auto y = StateVector::from_flat(f);
        auto prev = pipeline::identify(y, x, {0.001, 0.001}).flagged;
        for (double s : {0.005, 0.01, 0.02, 0.04, 0.06}) {
            const auto cur = pipeline::identify(y, x, {s, s}).flagged;
            EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            prev = cur;
        }
        EXPECT_TRUE(prev.empty());
    }
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    EXPECT_THROW(pipeline::correct(constant_model(x), q, x, {0.0, 0.01}), ValidationError);
}

TEST(Correct, FixedPointOfConstantModel) {
    const auto x = state_with(30, 0.0);
    const auto model = constant_model(x);
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    const auto out = pipeline::correct(model, q, x);
    EXPECT_LT((out.corrected.to_flat() - x.to_flat()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(out.flagged.empty());
    EXPECT_EQ(q.newest(), out.corrected);
}

TEST(Correct, AttackedCoordinateIsRestoredAndFlagged) {
    const auto x = state_with(30, 0.0);
    const auto model = constant_model(x);
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    Eigen::VectorXd f = x.to_flat();
    f[41] += 0.05;
    const auto out = pipeline::correct(model, q, StateVector::from_flat(f));
    EXPECT_EQ(out.flagged, std::vector<int>{41});
    EXPECT_NEAR(out.deltas[41], 0.05, 1e-15);
    EXPECT_LT((q.newest().to_flat() - x.to_flat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Correct, SlackAnglePinned) {
    auto x = state_with(30, 0.0);
    x.theta[0] = 0.3;  // a model trained off-reference would reproduce this
    const auto model = constant_model(x);
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    EXPECT_EQ(pipeline::correct(model, q, x).corrected.theta[0], 0.0);
}

TEST(Correct, ColdStartRejected) {
    const auto x = state_with(30, 0.0);
    const auto model = constant_model(x);
    StateQueue q(4);
    q.push(x);
    EXPECT_THROW(pipeline::correct(model, q, x), pipeline::BootstrapError);
    StateQueue wrong(3);
    for (int k = 0; k < 3; ++k) wrong.push(x);
    EXPECT_THROW(pipeline::correct(model, wrong, x), pipeline::BootstrapError);
    auto ok = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    EXPECT_THROW(pipeline::correct(model, ok, state_with(29, 0.0)), DimensionError);
}

TEST(Correct, FeedbackLoopDoesNotDrift) {
    const auto x = state_with(30, 0.0);
    const auto model = constant_model(x);
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.01);
    double worst = 0.0;
    for (int step = 0; step < 100; ++step) {
        Eigen::VectorXd f = x.to_flat();
        for (int k = 1; k < f.size(); ++k) f[k] += g(rng);
        const auto out = pipeline::correct(model, q, StateVector::from_flat(f));
        worst = std::max(worst, (out.corrected.to_flat() - x.to_flat()).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-14);
}

TEST(Correct, NonFiniteOutputRejected) {
    const auto x = state_with(30, 0.0);
    auto model = constant_model(x);
    model.params.head_b[5] = std::numeric_limits<double>::infinity();
    auto q = pipeline::warm_up(5, std::vector<StateVector>(4, x));
    EXPECT_THROW(pipeline::correct(model, q, x), NumericalError);
}
