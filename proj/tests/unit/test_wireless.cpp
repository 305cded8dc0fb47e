#include <gtest/gtest.h>

#include <map>

#include "dtbsm/bsm.hpp"
#include "dtbsm/wireless.hpp"

using namespace dtbsm;

namespace {

// Independent restatement of the default three-UE dynamics.
struct Arrival {
    int units;
    double p;
};

const std::vector<Arrival>& arrivals(int ue) {
    static const std::vector<std::vector<Arrival>> table{
        {{1, 0.9}, {2, 0.1}},  // periodic: one unit, an extra one 10% of the time
        {{0, 0.7}, {3, 0.3}},  // bursty
        {{1, 0.8}, {2, 0.2}},  // steady
    };
    return table[static_cast<std::size_t>(ue)];
}

int index_of(int b0, int b1, int b2) { return b0 + 3 * b1 + 9 * b2; }

std::vector<std::array<int, 3>> allocations() {
    std::vector<std::array<int, 3>> out;
    for (int x = 0; x <= 3; ++x)
        for (int y = 0; x + y <= 3; ++y) out.push_back({x, y, 3 - x - y});
    return out;
}

}  // namespace

TEST(RealEnv, DefaultSizes) {
    const auto m = build_real_env(EnvSpec{});
    EXPECT_EQ(m.n_states(), 27);
    EXPECT_EQ(m.n_actions(), 10);
    EXPECT_TRUE(validate(m).empty());
}

TEST(RealEnv, MatchesIndependentDynamics) {
    const auto m = build_real_env(EnvSpec{});
    const auto allocs = allocations();
    ASSERT_EQ(allocs.size(), 10u);
    const double w[3] = {0.5, 1.0 / 3.0, 1.0 / 6.0};
    // Best allocation with full queues: two blocks to UE 0, one to UE 1.
    const double best = w[0] * 2 + w[1] * 1;
    for (int b0 = 0; b0 < 3; ++b0)
        for (int b1 = 0; b1 < 3; ++b1)
            for (int b2 = 0; b2 < 3; ++b2) {
                const int s = index_of(b0, b1, b2);
                const int b[3] = {b0, b1, b2};
                for (std::size_t a = 0; a < allocs.size(); ++a) {
                    int served[3];
                    double raw = 0.0;
                    for (int i = 0; i < 3; ++i) {
                        served[i] = std::min(b[i], allocs[a][static_cast<std::size_t>(i)]);
                        raw += w[i] * served[i];
                    }
                    ASSERT_NEAR(m.reward(s, static_cast<int>(a)), raw / best, 1e-12);
                    std::vector<double> row(27, 0.0);
                    for (const auto& x : arrivals(0))
                        for (const auto& y : arrivals(1))
                            for (const auto& z : arrivals(2)) {
                                const int n0 = std::clamp(b0 - served[0] + x.units, 0, 2);
                                const int n1 = std::clamp(b1 - served[1] + y.units, 0, 2);
                                const int n2 = std::clamp(b2 - served[2] + z.units, 0, 2);
                                row[static_cast<std::size_t>(index_of(n0, n1, n2))] += x.p * y.p * z.p;
                            }
                    for (int k = 0; k < 27; ++k) ASSERT_NEAR(m.transition(s, static_cast<int>(a), k), row[static_cast<std::size_t>(k)], 1e-12);
                }
            }
}

TEST(RealEnv, HandComputedReward) {
    // Backlogs (2, 0, 1) with one block each: UE 0 and UE 2 each serve one unit.
    const auto m = build_real_env(EnvSpec{});
    WirelessLayout layout(EnvSpec{});
    const int s = layout.state_index({2, 0, 1});
    EXPECT_EQ(s, 11);
    int a = -1;
    for (int k = 0; k < layout.n_actions(); ++k)
        if (layout.allocation(k) == std::vector<int>{1, 1, 1}) a = k;
    ASSERT_GE(a, 0);
    EXPECT_NEAR(m.reward(s, a), (0.5 + 1.0 / 6.0) / (1.0 + 1.0 / 3.0), 1e-12);
}

TEST(RealEnv, ZeroBacklogEarnsNothing) {
    const auto m = build_real_env(EnvSpec{});
    for (int a = 0; a < m.n_actions(); ++a) EXPECT_EQ(m.reward(0, a), 0.0);
}

TEST(RealEnv, RowsSumToOneAndRewardsReachOne) {
    const auto m = build_real_env(EnvSpec{});
    double top = 0.0;
    for (int s = 0; s < m.n_states(); ++s)
        for (int a = 0; a < m.n_actions(); ++a) {
            double sum = 0.0;
            for (double p : m.row(s, a)) sum += p;
            EXPECT_NEAR(sum, 1.0, 1e-12);
            top = std::max(top, m.reward(s, a));
        }
    EXPECT_DOUBLE_EQ(top, 1.0);
}

TEST(RealEnv, PureFunctionOfSpec) {
    EnvSpec s;
    s.seed = 5;
    EXPECT_TRUE(build_real_env(s).same_model(build_real_env(s)));
}

TEST(RealEnv, SpecValidation) {
    EnvSpec big;
    big.budget = 1000;
    try {
        build_real_env(big);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SpecTooLarge);
    }
    EnvSpec bad;
    bad.weights = {1.0, -1.0, 1.0};
    EXPECT_THROW(validate_spec(bad), Error);
    bad = EnvSpec{};
    bad.n_ues = 0;
    EXPECT_THROW(validate_spec(bad), Error);
    bad = EnvSpec{};
    bad.arrival_profiles.pop_back();
    EXPECT_THROW(validate_spec(bad), Error);
}

TEST(RealEnv, ActionCountIsStarsAndBars) {
    EnvSpec s;
    s.n_ues = 4;
    s.n_blocks = 2;
    s.backlog_levels = 2;
    s.weights = {1, 1, 1, 1};
    s.arrival_profiles.assign(4, ArrivalProfile::Steady);
    const auto m = build_real_env(s);
    EXPECT_EQ(m.n_states(), 16);
    EXPECT_EQ(m.n_actions(), 10);  // C(5, 3)
}

TEST(Quantizer, NearestLevelWithTieDirection) {
    const auto down = Quantizer::coarse(3, 2, false);
    const auto up = Quantizer::coarse(3, 2, true);
    EXPECT_EQ(down.representatives, (std::vector<int>{0, 2}));
    EXPECT_EQ(down.apply(1), 0);
    EXPECT_EQ(up.apply(1), 2);
    EXPECT_EQ(Quantizer::coarse(3, 1, false).apply(2), 1);
    EXPECT_EQ(Quantizer::identity(3).apply(2), 2);
}

TEST(Smoothing, MixesTowardUniform) {
    const auto real = build_real_env(EnvSpec{});
    const auto half = smooth_transitions(real, 0.5);
    for (int k = 0; k < 27; ++k)
        EXPECT_NEAR(half.transition(4, 3, k), 0.5 * real.transition(4, 3, k) + 0.5 / 27.0, 1e-15);
    EXPECT_TRUE(smooth_transitions(real, 0.0).same_model(real));
    EXPECT_THROW(smooth_transitions(real, 1.5), Error);
}

TEST(RewardNoise, ClampedAndSeeded) {
    const auto real = build_real_env(EnvSpec{});
    const auto a = perturb_rewards(real, 0.5, 3);
    EXPECT_TRUE(a.same_model(perturb_rewards(real, 0.5, 3)));
    EXPECT_FALSE(a.same_model(perturb_rewards(real, 0.5, 4)));
    for (double r : a.rewards()) {
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 1.0);
    }
    EXPECT_EQ(a.transitions(), real.transitions());
}

class Pool : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        real_ = new FiniteMdp(build_real_env(EnvSpec{}));
        pool_ = new std::vector<CandidateDT>(generate_candidates(*real_, EnvSpec{}, 120, 42));
    }
    static void TearDownTestSuite() {
        delete pool_;
        delete real_;
    }
    static FiniteMdp* real_;
    static std::vector<CandidateDT>* pool_;
};

FiniteMdp* Pool::real_ = nullptr;
std::vector<CandidateDT>* Pool::pool_ = nullptr;

TEST_F(Pool, LayoutAndValidity) {
    ASSERT_EQ(pool_->size(), 120u);
    std::map<Family, int> counts;
    for (std::size_t i = 0; i < pool_->size(); ++i) {
        const auto& c = (*pool_)[i];
        EXPECT_EQ(c.id, static_cast<int>(i));
        EXPECT_TRUE(validate(c.mdp).empty()) << c.id;
        EXPECT_EQ(c.mdp.n_states(), 27);
        EXPECT_EQ(c.mdp.n_actions(), real_->n_actions());
        EXPECT_EQ(c.mdp.gamma(), real_->gamma());
        ++counts[c.recipe.family];
    }
    for (auto f : {Family::Smoothing, Family::Empirical, Family::RewardNoise, Family::Granularity})
        EXPECT_EQ(counts[f], 30);
}

TEST_F(Pool, ExactTwinScoresZero) {
    const auto& c0 = pool_->front();
    EXPECT_EQ(c0.recipe.family, Family::Smoothing);
    EXPECT_EQ(c0.recipe.params.at("lambda"), 0.0);
    EXPECT_TRUE(c0.mdp.same_model(*real_));
    EXPECT_LE(scalarize(compute_dt_bsm(*real_, c0.mdp)).scalar_max, 1e-6);
}

TEST_F(Pool, Deterministic) {
    const auto again = generate_candidates(*real_, EnvSpec{}, 120, 42);
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_TRUE(again[i].mdp.same_model((*pool_)[i].mdp));
        EXPECT_EQ(again[i].recipe.params_text(), (*pool_)[i].recipe.params_text());
        EXPECT_EQ(again[i].seed, (*pool_)[i].seed);
    }
}

TEST_F(Pool, SmoothingMismatchGrowsWithLambda) {
    double previous = -1.0, previous_lambda = -1.0;
    for (const auto& c : *pool_) {
        if (c.recipe.family != Family::Smoothing) continue;
        const double lambda = c.recipe.params.at("lambda");
        EXPECT_GT(lambda, previous_lambda);
        const double score = scalarize(compute_dt_bsm(*real_, c.mdp)).scalar_max;
        EXPECT_GE(score, previous - 1e-6) << "lambda " << lambda;
        previous = score;
        previous_lambda = lambda;
    }
    EXPECT_NEAR(previous_lambda, 0.8, 1e-12);
}

TEST(PoolSmall, LargerNoiseScoresHigher) {
    const auto real = build_real_env(EnvSpec{});
    const double low = scalarize(compute_dt_bsm(real, perturb_rewards(real, 0.02, 8))).scalar_max;
    const double high = scalarize(compute_dt_bsm(real, perturb_rewards(real, 0.5, 8))).scalar_max;
    EXPECT_GT(high, low);
}

TEST(PoolSmall, TilesAnySize) {
    const auto real = build_real_env(EnvSpec{});
    for (int n : {1, 2, 5, 7}) {
        const auto pool = generate_candidates(real, EnvSpec{}, n, 1);
        ASSERT_EQ(pool.size(), static_cast<std::size_t>(n));
        EXPECT_TRUE(pool.front().mdp.same_model(real));
    }
    EXPECT_THROW(generate_candidates(real, EnvSpec{}, 0, 1), Error);
}
