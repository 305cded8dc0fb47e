#include <gtest/gtest.h>

#include <cmath>

#include "dtbsm/transport.hpp"
#include "oracles.hpp"

using namespace dtbsm;

namespace {

Matrix swap_cost() {
    Matrix c(2, 2);
    c(0, 1) = 1.0;
    c(1, 0) = 1.0;
    return c;
}

Matrix line_cost(const std::vector<double>& x, const std::vector<double>& y) {
    Matrix c(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) c(i, j) = std::abs(x[i] - y[j]);
    return c;
}

void expect_marginals(const TransportSolution& sol, const TransportProblem& pr, double tol) {
    for (std::size_t i = 0; i < pr.p.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < pr.q.size(); ++j) {
            EXPECT_GE(sol.plan(i, j), -1e-15);
            row += sol.plan(i, j);
        }
        EXPECT_NEAR(row, pr.p[i], tol);
    }
    for (std::size_t j = 0; j < pr.q.size(); ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < pr.p.size(); ++i) col += sol.plan(i, j);
        EXPECT_NEAR(col, pr.q[j], tol);
    }
}

}  // namespace

TEST(Exact, PointMasses) {
    RngState rng{1};
    const auto c = oracle::random_cost(rng, 3, 4);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            std::vector<double> p(3, 0.0), q(4, 0.0);
            p[i] = 1.0;
            q[j] = 1.0;
            EXPECT_EQ(w1_exact({p, q, c}).value, c(i, j));
        }
}

TEST(Exact, HalfMassExample) {
    const TransportProblem pr{{0.5, 0.5}, {1.0, 0.0}, swap_cost()};
    const auto sol = w1_exact(pr);
    EXPECT_EQ(sol.value, 0.5);
    EXPECT_EQ(sol.status, SolutionStatus::Optimal);
    EXPECT_EQ(sol.plan(1, 0), 0.5);
    expect_marginals(sol, pr, 1e-15);
}

TEST(Exact, IdentityCouplingOnZeroDiagonal) {
    RngState rng{2};
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = oracle::random_distribution(rng, 5, true);
        auto c = oracle::random_cost(rng, 5, 5);
        for (std::size_t i = 0; i < 5; ++i) c(i, i) = 0.0;
        EXPECT_NEAR(w1_exact({p, p, c}).value, 0.0, 1e-15);
    }
}

TEST(Exact, RejectsBadProblems) {
    try {
        w1_exact({{0.5, 0.5}, {0.6, 0.5}, swap_cost()});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleMass);
    }
    auto neg = swap_cost();
    neg(0, 1) = -1.0;
    EXPECT_THROW(w1_exact({{0.5, 0.5}, {0.5, 0.5}, neg}), Error);
    auto nan = swap_cost();
    nan(1, 1) = std::nan("");
    EXPECT_THROW(w1_exact({{0.5, 0.5}, {0.5, 0.5}, nan}), Error);
    EXPECT_THROW(w1_exact({{0.5, 0.5}, {1.0}, swap_cost()}), Error);
    EXPECT_THROW(w1_exact({{1.5, -0.5}, {0.5, 0.5}, swap_cost()}), Error);
}

TEST(Exact, MatchesBruteForceOnSixths) {
    RngState rng{606};
    for (int trial = 0; trial < 400; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(4));
        const int n = 1 + static_cast<int>(rng.below(4));
        const auto pc = oracle::random_counts(rng, m, 6);
        const auto qc = oracle::random_counts(rng, n, 6);
        const auto c = trial % 3 == 0 ? Matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                                               static_cast<double>(rng.below(3)))
                                      : oracle::random_cost(rng, m, n, 5.0);
        const TransportProblem pr{oracle::to_masses(pc), oracle::to_masses(qc), c};
        const auto sol = w1_exact(pr);
        EXPECT_NEAR(sol.value, oracle::brute_force_w1(pc, qc, c), 1e-8);
        expect_marginals(sol, pr, 1e-12);
    }
}

TEST(Exact, MatchesAssignmentOnLargerSupports) {
    RngState rng{707};
    for (int trial = 0; trial < 150; ++trial) {
        const int m = 2 + static_cast<int>(rng.below(9));
        const int n = 2 + static_cast<int>(rng.below(9));
        const int units = 24 + static_cast<int>(rng.below(40));
        const auto pc = oracle::random_counts(rng, m, units);
        const auto qc = oracle::random_counts(rng, n, units);
        // Integer costs on a small range force many ties and degenerate pivots.
        Matrix c(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
        for (auto& x : c.data()) x = trial % 2 ? static_cast<double>(rng.below(3)) : rng.uniform();
        const TransportProblem pr{oracle::to_masses(pc), oracle::to_masses(qc), c};
        EXPECT_NEAR(w1_exact(pr).value, oracle::assignment_w1(pc, qc, c), 1e-9);
    }
}

TEST(Exact, ValueWithinCostRange) {
    RngState rng{808};
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = oracle::random_cost(rng, 6, 5, 3.0);
        const auto v = w1_exact({oracle::random_distribution(rng, 6, true),
                                 oracle::random_distribution(rng, 5, true), c})
                           .value;
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, c.max_abs() + 1e-12);
    }
}

TEST(Exact, SymmetricUnderTranspose) {
    RngState rng{909};
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(6));
        auto c = oracle::random_cost(rng, n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j) c(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = c(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        const auto p = oracle::random_distribution(rng, n, true);
        const auto q = oracle::random_distribution(rng, n, true);
        EXPECT_NEAR(w1_exact({p, q, c}).value, w1_exact({q, p, c}).value, 1e-10);
    }
}

TEST(Exact, TriangleInequalityForMetricCosts) {
    RngState rng{1001};
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(6));
        std::vector<double> x;
        for (int i = 0; i < n; ++i) x.push_back(rng.uniform() * 10.0);
        const auto c = line_cost(x, x);
        const auto p = oracle::random_distribution(rng, n, true);
        const auto q = oracle::random_distribution(rng, n, true);
        const auto r = oracle::random_distribution(rng, n, true);
        EXPECT_LE(w1_exact({p, r, c}).value, w1_exact({p, q, c}).value + w1_exact({q, r, c}).value + 1e-8);
    }
}

TEST(Exact, OneDimensionalClosedForm) {
    // On a line W1 equals the integral of |F_p - F_q|.
    RngState rng{1101};
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(8));
        std::vector<double> x;
        for (int i = 0; i < n; ++i) x.push_back(i + rng.uniform() * 0.5);
        const auto p = oracle::random_distribution(rng, n, true);
        const auto q = oracle::random_distribution(rng, n, true);
        double fp = 0.0, fq = 0.0, expected = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            fp += p[static_cast<std::size_t>(i)];
            fq += q[static_cast<std::size_t>(i)];
            expected += std::abs(fp - fq) * (x[static_cast<std::size_t>(i) + 1] - x[static_cast<std::size_t>(i)]);
        }
        EXPECT_NEAR(w1_exact({p, q, line_cost(x, x)}).value, expected, 1e-10);
    }
}

TEST(Simplex, WarmStartMatchesColdSolve) {
    RngState rng{1201};
    simplex::Workspace ws;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 2 + static_cast<int>(rng.below(7));
        const int n = 2 + static_cast<int>(rng.below(7));
        auto supply = oracle::random_distribution(rng, m);
        auto demand = oracle::random_distribution(rng, n);
        const double ds = std::accumulate(supply.begin(), supply.end(), 0.0);
        const double dd = std::accumulate(demand.begin(), demand.end(), 0.0);
        for (auto& x : demand) x *= ds / dd;
        const auto c1 = oracle::random_cost(rng, m, n);
        const auto c2 = oracle::random_cost(rng, m, n);
        std::vector<simplex::BasisCell> basis;
        simplex::solve(supply, demand, c1.data(), basis, ws);
        ASSERT_EQ(basis.size(), static_cast<std::size_t>(m + n - 1));
        const double upper = simplex::basis_cost(basis, c2.data(), n);
        const double warm = simplex::solve(supply, demand, c2.data(), basis, ws);
        std::vector<simplex::BasisCell> fresh;
        const double cold = simplex::solve(supply, demand, c2.data(), fresh, ws);
        EXPECT_NEAR(warm, cold, 1e-12);
        EXPECT_LE(warm, upper + 1e-12);
    }
}

TEST(Sinkhorn, PointMassesAnyEpsilon) {
    RngState rng{3};
    const auto c = oracle::random_cost(rng, 3, 3);
    for (double eps : {1e-4, 1e-2, 1.0, 100.0}) {
        const auto sol = w1_sinkhorn({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, c}, eps);
        EXPECT_NEAR(sol.value, c(1, 2), 1e-9);
    }
}

TEST(Sinkhorn, HalfMassExample) {
    const TransportProblem pr{{0.5, 0.5}, {1.0, 0.0}, swap_cost()};
    const auto sol = w1_sinkhorn(pr, 1e-3 * pr.cost.max_abs());
    EXPECT_NEAR(sol.value, 0.5, 1e-2);
    EXPECT_EQ(sol.status, SolutionStatus::Approximate);
}

TEST(Sinkhorn, LargeEpsilonApproachesProductPlan) {
    const TransportProblem pr{{0.5, 0.5}, {0.5, 0.5}, swap_cost()};
    double previous = std::numeric_limits<double>::infinity();
    for (double scale : {10.0, 100.0, 1000.0}) {
        const auto sol = w1_sinkhorn(pr, scale * pr.cost.max_abs());
        double dev = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) dev = std::max(dev, std::abs(sol.plan(i, j) - 0.25));
        EXPECT_LT(dev, previous);
        previous = dev;
    }
    EXPECT_LE(previous, 1e-3);
}

TEST(Sinkhorn, CloseToExactOnSixths) {
    RngState rng{4242};
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(4));
        const int n = 1 + static_cast<int>(rng.below(4));
        const auto c = oracle::random_cost(rng, m, n, 5.0);
        const TransportProblem pr{oracle::to_masses(oracle::random_counts(rng, m, 6)),
                                  oracle::to_masses(oracle::random_counts(rng, n, 6)), c};
        const auto sol = w1_sinkhorn(pr, default_sinkhorn_epsilon(c));
        EXPECT_TRUE(sol.converged);
        EXPECT_LE(sol.marginal_violation, 1e-6);
        EXPECT_NEAR(sol.value, w1_exact(pr).value, 1e-2);
    }
}

TEST(Sinkhorn, ZeroCostAndRejections) {
    const TransportProblem pr{{0.3, 0.7}, {0.6, 0.4}, Matrix(2, 2, 0.0)};
    EXPECT_NEAR(w1_sinkhorn(pr, default_sinkhorn_epsilon(pr.cost)).value, 0.0, 1e-12);
    EXPECT_THROW(w1_sinkhorn(pr, 0.0), Error);
    EXPECT_THROW(w1_sinkhorn({{0.3, 0.7}, {0.6, 0.5}, Matrix(2, 2, 1.0)}, 0.1), Error);
}

TEST(Sinkhorn, IterationCapIsFlagged) {
    Matrix c(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) c(i, j) = std::abs(double(i) - double(j) * 1.3) + 0.1 * double(i * j);
    const TransportProblem pr{{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}, c};
    const auto capped = w1_sinkhorn(pr, default_sinkhorn_epsilon(c), 1);
    EXPECT_FALSE(capped.converged);
    EXPECT_GT(capped.marginal_violation, 1e-6);
    EXPECT_EQ(capped.iterations, 1);
    const auto full = w1_sinkhorn(pr, default_sinkhorn_epsilon(c));
    EXPECT_TRUE(full.converged);
    EXPECT_NEAR(full.value, w1_exact(pr).value, 1e-2);
}
