#pragma once

#include <span>
#include <vector>

#include "dtbsm/common.hpp"

namespace dtbsm {

inline constexpr double kMassTolerance = 1e-9;

/// Discrete optimal transport between p (length m) and q (length n) under an
/// m x n nonnegative ground cost.
struct TransportProblem {
    std::vector<double> p;
    std::vector<double> q;
    Matrix cost;
};

enum class SolutionStatus { Optimal, Approximate };

struct TransportSolution {
    double value = 0.0;
    Matrix plan;
    SolutionStatus status = SolutionStatus::Optimal;
    /// False only when an iterative solver hit its iteration cap.
    bool converged = true;
    int iterations = 0;
    /// Largest absolute deviation of plan marginals from p and q.
    double marginal_violation = 0.0;
};

/// Checks the TransportProblem invariants; throws InfeasibleMass when the two
/// total masses differ by more than 1e-9 and InvalidInput for anything else.
void check_problem(const TransportProblem& problem);

/// Exact W1 via the transportation simplex. Zero-mass rows and columns are
/// pruned before solving; the returned plan is an optimal basic solution.
TransportSolution w1_exact(const TransportProblem& problem);

/// Entropic approximation (log-domain Sinkhorn with epsilon scaling). The
/// reported value is <plan, cost> for the regularized plan; it is an
/// approximation and may sit on either side of the exact value.
TransportSolution w1_sinkhorn(const TransportProblem& problem, double epsilon,
                              int max_iter = 10000);

/// Default regularization: 1e-3 times the largest cost entry.
double default_sinkhorn_epsilon(const Matrix& cost);

namespace simplex {

/// One basic variable of the transportation tableau.
struct BasisCell {
    int row;
    int col;
    double flow;
};

/// Reusable buffers; one instance per thread.
class Workspace {
public:
    std::vector<double> u, v;
    std::vector<int> adj_start, adj, parent_edge, depth, order;
    std::vector<char> basic;
};

/**
 * Solves min <x, cost> over couplings of supply and demand (both strictly
 * positive, equal totals). `cost` is m x n row-major.
 *
 * If `basis` holds m+n-1 cells it is taken as a primal-feasible warm start
 * (flows must match the marginals); otherwise it is replaced by the
 * north-west-corner basis. On return `basis` is optimal for `cost`.
 *
 * Entering variables follow Dantzig's rule; after a run of degenerate pivots
 * the solver switches to Bland's lowest-index rule, which cannot cycle.
 * Returns the objective value.
 */
double solve(std::span<const double> supply, std::span<const double> demand,
             std::span<const double> cost, std::vector<BasisCell>& basis, Workspace& ws,
             int* pivots = nullptr);

/// <flows, cost> over the basis.
double basis_cost(std::span<const BasisCell> basis, std::span<const double> cost, int n);

}  // namespace simplex

}  // namespace dtbsm
