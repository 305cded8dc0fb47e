#include <gtest/gtest.h>

#include <chrono>

#include "dtbsm/bsm.hpp"
#include "dtbsm/wireless.hpp"
#include "oracles.hpp"

using namespace dtbsm;

namespace {

FiniteMdp single(double reward) { return FiniteMdp(1, 1, {1.0}, {reward}, 0.9); }

EnvSpec small_spec() {
    EnvSpec s;
    s.n_ues = 2;
    s.n_blocks = 2;
    s.weights = {2.0, 1.0};
    s.arrival_profiles = {ArrivalProfile::Periodic, ArrivalProfile::Bursty};
    return s;
}

}  // namespace

TEST(BsmStep, ZeroGroundCostLeavesRewardGap) {
    RngState rng{1};
    const auto a = oracle::random_mdp(rng, 4, 3);
    const auto b = oracle::random_mdp(rng, 5, 3);
    const auto out = bsm_step(a, b, Matrix(4, 5, 0.0));
    for (int s = 0; s < 4; ++s)
        for (int t = 0; t < 5; ++t) {
            double gap = 0.0;
            for (int x = 0; x < 3; ++x) gap = std::max(gap, std::abs(a.reward(s, x) - b.reward(t, x)));
            EXPECT_NEAR(out(static_cast<std::size_t>(s), static_cast<std::size_t>(t)), gap, 1e-15);
        }
}

TEST(BsmStep, IdenticalModelsHaveZeroDiagonal) {
    RngState rng{2};
    const auto a = oracle::random_mdp(rng, 5, 2);
    const auto out = bsm_step(a, a, Matrix(5, 5, 0.0));
    for (std::size_t s = 0; s < 5; ++s) EXPECT_EQ(out(s, s), 0.0);
}

TEST(BsmStep, SingleCouplingExample) {
    const auto out = bsm_step(single(1.0), single(0.5), Matrix(1, 1, 2.0));
    EXPECT_NEAR(out(0, 0), 2.3, 1e-15);
}

TEST(BsmStep, RejectsMismatchedModels) {
    const FiniteMdp two_actions(1, 2, {1.0, 1.0}, {0.1, 0.2}, 0.9);
    try {
        bsm_step(single(1.0), two_actions, Matrix(1, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ActionSpaceMismatch);
    }
    try {
        compute_dt_bsm(single(1.0), FiniteMdp(1, 1, {1.0}, {0.5}, 0.8));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DiscountMismatch);
    }
}

TEST(Bsm, SingleStateClosedForm) {
    const auto m = compute_dt_bsm(single(1.0), single(0.5));
    EXPECT_TRUE(m.converged);
    EXPECT_NEAR(m.d(0, 0), 5.0, 1e-5);
    EXPECT_NEAR(m.d(0, 0), 5.0, m.residual * 0.9 / 0.1 + 1e-12);
}

TEST(Bsm, TightToleranceClosedForm) {
    BsmOptions opts;
    opts.tol = 1e-9;
    EXPECT_NEAR(compute_dt_bsm(single(1.0), single(0.5), opts).d(0, 0), 5.0, 1e-6);
}

TEST(Bsm, MatchesBruteForceFixedPoint) {
    RngState rng{33};
    BsmOptions opts;
    opts.tol = 1e-10;
    for (int trial = 0; trial < 12; ++trial) {
        const int S = 2 + static_cast<int>(rng.below(2));
        const int A = 1 + static_cast<int>(rng.below(2));
        const auto a = oracle::random_unit_mdp(rng, S, A, 6);
        const auto b = oracle::random_unit_mdp(rng, S, A, 6);
        const auto got = compute_dt_bsm(a, b, opts).d;
        const auto want = oracle::brute_force_bsm(a, b, 6, 1e-11);
        for (std::size_t i = 0; i < got.data().size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-7);
    }
}

TEST(Bsm, ZeroSelfDistance) {
    RngState rng{44};
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = oracle::random_mdp(rng, 2 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(3)),
                                          0.9, trial % 2 == 0);
        const auto d = compute_dt_bsm(m, m);
        for (std::size_t s = 0; s < d.d.rows(); ++s) EXPECT_LE(d.d(s, s), 1e-6);
    }
}

TEST(Bsm, BoundedByRewardGap) {
    RngState rng{55};
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = oracle::random_mdp(rng, 5, 2);
        const auto b = oracle::random_mdp(rng, 4, 2);
        const auto d = compute_dt_bsm(a, b);
        const double bound = max_reward_gap(a, b) / (1.0 - a.gamma());
        for (double x : d.d.data()) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, bound + 1e-9);
            EXPECT_LE(x, 10.0);
        }
    }
}

TEST(Bsm, ResidualsContract) {
    RngState rng{66};
    for (int trial = 0; trial < 20; ++trial) {
        const double gamma = 0.5 + 0.45 * rng.uniform();
        const auto a = oracle::random_mdp(rng, 5, 3, gamma, true);
        const auto b = oracle::random_mdp(rng, 5, 3, gamma, true);
        const auto d = compute_dt_bsm(a, b);
        for (std::size_t k = 1; k < d.residuals.size(); ++k)
            ASSERT_LE(d.residuals[k], gamma * d.residuals[k - 1] + 1e-10);
    }
}

TEST(Bsm, IteratesAreMonotoneFromZero) {
    RngState rng{77};
    const auto a = oracle::random_mdp(rng, 5, 3);
    const auto b = oracle::random_mdp(rng, 6, 3);
    Matrix d(5, 6, 0.0);
    for (int k = 0; k < 60; ++k) {
        const auto next = bsm_step(a, b, d);
        for (std::size_t i = 0; i < d.data().size(); ++i) ASSERT_GE(next.data()[i], d.data()[i] - 1e-12);
        d = next;
    }
}

TEST(Bsm, RewardOnlySensitivity) {
    // State 0 self-loops under every action; only R(0, 1) differs.
    RngState rng{88};
    const auto base = oracle::random_mdp(rng, 3, 2);
    auto p = base.transitions();
    for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 3; ++k) p[static_cast<std::size_t>(a * 3 + k)] = k == 0 ? 1.0 : 0.0;
    auto r = base.rewards();
    r[0] = 0.5;
    r[1] = 0.5;
    const FiniteMdp real(3, 2, p, r, 0.9);
    const double delta = 0.3;
    r[1] = 0.5 + delta;
    const FiniteMdp dt(3, 2, p, r, 0.9);
    BsmOptions opts;
    opts.tol = 1e-10;
    EXPECT_NEAR(compute_dt_bsm(real, dt, opts).d(0, 0), delta / 0.1, 1e-8);
}

TEST(Bsm, ThreadCountDoesNotChangeResult) {
    const auto real = build_real_env(small_spec());
    const auto dt = smooth_transitions(real, 0.3);
    BsmOptions one, three;
    three.threads = 3;
    EXPECT_TRUE(compute_dt_bsm(real, dt, one).d == compute_dt_bsm(real, dt, three).d);
}

TEST(Bsm, SinkhornAgreesWithExactOnSmallWirelessEnv) {
    const auto real = build_real_env(small_spec());
    for (const auto& dt : {smooth_transitions(real, 0.3), perturb_rewards(real, 0.2, 9)}) {
        const double exact = scalarize(compute_dt_bsm(real, dt)).scalar_max;
        BsmOptions opts;
        opts.solver = InnerSolver::Sinkhorn;
        opts.sinkhorn_epsilon = 1e-4 * max_reward_gap(real, dt);
        const auto approx = compute_dt_bsm(real, dt, opts);
        EXPECT_TRUE(approx.converged);
        EXPECT_NEAR(scalarize(approx).scalar_max, exact, 1e-2);
    }
}

TEST(Scalarize, Examples) {
    PairwiseMetric m;
    m.d = Matrix(1, 1, 0.5);
    const auto one = scalarize(m);
    EXPECT_EQ(one.scalar_max, 0.5);
    EXPECT_EQ(one.scalar_avg, 0.5);

    m.d = Matrix(2, 2, 3.0);
    m.d(0, 0) = 0.2;
    m.d(1, 1) = 0.8;
    const auto worst = scalarize(m, ScalarMode::WorstCase);
    EXPECT_DOUBLE_EQ(worst.value(), 0.8);
    const auto avg = scalarize(m, ScalarMode::Average);
    EXPECT_DOUBLE_EQ(avg.value(), 0.5);
    EXPECT_DOUBLE_EQ(scalarize(m, ScalarMode::Average, std::vector<double>{0.25, 0.75}).value(), 0.65);
}

TEST(Scalarize, IdenticalModelsScoreZero) {
    RngState rng{99};
    const auto a = oracle::random_mdp(rng, 4, 2);
    const auto m = compute_dt_bsm(a, a);
    EXPECT_LE(scalarize(m, ScalarMode::WorstCase).value(), 1e-6);
    EXPECT_LE(scalarize(m, ScalarMode::Average).value(), 1e-6);
}

TEST(Scalarize, RejectsBadInput) {
    PairwiseMetric m;
    m.d = Matrix(2, 3, 0.0);
    try {
        scalarize(m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    m.d = Matrix(2, 2, 0.0);
    EXPECT_THROW(scalarize(m, ScalarMode::Average, std::vector<double>{1.0}), Error);
}

TEST(DriftTrigger, StrictInequality) {
    EXPECT_FALSE(drift_trigger(0.4, 0.5));
    EXPECT_TRUE(drift_trigger(0.6, 0.5));
    EXPECT_FALSE(drift_trigger(0.5, 0.5));
    EXPECT_THROW(drift_trigger(-0.1, 0.5), Error);
}
