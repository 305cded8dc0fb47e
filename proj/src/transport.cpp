#include "dtbsm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dtbsm {

void check_problem(const TransportProblem& problem) {
    const auto m = problem.p.size();
    const auto n = problem.q.size();
    if (m == 0 || n == 0) throw Error(ErrorCode::InvalidInput, "empty marginal");
    if (problem.cost.rows() != m || problem.cost.cols() != n)
        throw Error(ErrorCode::ShapeMismatch, "cost matrix shape does not match marginals");
    double sp = 0.0, sq = 0.0;
    for (double x : problem.p) {
        if (!(x >= 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::InvalidInput, "negative or non-finite source mass");
        sp += x;
    }
    for (double x : problem.q) {
        if (!(x >= 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::InvalidInput, "negative or non-finite target mass");
        sq += x;
    }
    for (double c : problem.cost.data())
        if (!(c >= 0.0) || !std::isfinite(c))
            throw Error(ErrorCode::InvalidInput, "cost entries must be finite and nonnegative");
    if (std::abs(sp - sq) > kMassTolerance)
        throw Error(ErrorCode::InfeasibleMass, "source and target masses differ");
    if (std::abs(sp - 1.0) > kMassTolerance)
        throw Error(ErrorCode::InvalidInput, "marginals must sum to 1");
}

namespace simplex {

namespace {

void northwest_corner(std::span<const double> supply, std::span<const double> demand,
                      std::vector<BasisCell>& basis) {
    const int m = static_cast<int>(supply.size());
    const int n = static_cast<int>(demand.size());
    std::vector<double> s(supply.begin(), supply.end());
    std::vector<double> d(demand.begin(), demand.end());
    basis.clear();
    basis.reserve(static_cast<std::size_t>(m + n - 1));
    int i = 0, j = 0;
    while (true) {
        const double x = std::min(s[i], d[j]);
        basis.push_back({i, j, x});
        s[i] -= x;
        d[j] -= x;
        if (i == m - 1 && j == n - 1) break;
        if (i == m - 1)
            ++j;
        else if (j == n - 1)
            ++i;
        else if (s[i] <= d[j])
            ++i;
        else
            ++j;
    }
}

// Builds the spanning-tree structure of the basis and the dual potentials.
// Returns false if the basis is not a spanning tree.
bool compute_potentials(int m, int n, std::span<const double> cost,
                        const std::vector<BasisCell>& basis, Workspace& ws) {
    const int nodes = m + n;
    ws.adj_start.assign(static_cast<std::size_t>(nodes + 1), 0);
    for (const auto& c : basis) {
        ++ws.adj_start[static_cast<std::size_t>(c.row + 1)];
        ++ws.adj_start[static_cast<std::size_t>(m + c.col + 1)];
    }
    for (int k = 0; k < nodes; ++k) ws.adj_start[k + 1] += ws.adj_start[k];
    ws.adj.resize(2 * basis.size());
    std::vector<int>& fill = ws.order;  // reused as insertion cursor
    fill.assign(ws.adj_start.begin(), ws.adj_start.end() - 1);
    for (int e = 0; e < static_cast<int>(basis.size()); ++e) {
        ws.adj[static_cast<std::size_t>(fill[basis[e].row]++)] = e;
        ws.adj[static_cast<std::size_t>(fill[m + basis[e].col]++)] = e;
    }

    ws.u.assign(static_cast<std::size_t>(m), 0.0);
    ws.v.assign(static_cast<std::size_t>(n), 0.0);
    ws.parent_edge.assign(static_cast<std::size_t>(nodes), -2);
    ws.depth.assign(static_cast<std::size_t>(nodes), 0);
    ws.order.clear();
    ws.order.push_back(0);
    ws.parent_edge[0] = -1;
    for (std::size_t head = 0; head < ws.order.size(); ++head) {
        const int node = ws.order[head];
        for (int k = ws.adj_start[node]; k < ws.adj_start[node + 1]; ++k) {
            const int e = ws.adj[static_cast<std::size_t>(k)];
            const auto& c = basis[static_cast<std::size_t>(e)];
            const int other = node < m ? m + c.col : c.row;
            if (ws.parent_edge[other] != -2) continue;
            ws.parent_edge[other] = e;
            ws.depth[other] = ws.depth[node] + 1;
            const double cij = cost[static_cast<std::size_t>(c.row) * n + c.col];
            if (node < m)
                ws.v[c.col] = cij - ws.u[c.row];
            else
                ws.u[c.row] = cij - ws.v[c.col];
            ws.order.push_back(other);
        }
    }
    return static_cast<int>(ws.order.size()) == nodes;
}

bool usable_warm_start(int m, int n, const std::vector<BasisCell>& basis) {
    if (static_cast<int>(basis.size()) != m + n - 1) return false;
    for (const auto& c : basis)
        if (c.row < 0 || c.row >= m || c.col < 0 || c.col >= n || !(c.flow >= 0.0)) return false;
    return true;
}

}  // namespace

double basis_cost(std::span<const BasisCell> basis, std::span<const double> cost, int n) {
    double total = 0.0;
    for (const auto& c : basis) total += c.flow * cost[static_cast<std::size_t>(c.row) * n + c.col];
    return total;
}

double solve(std::span<const double> supply, std::span<const double> demand,
             std::span<const double> cost, std::vector<BasisCell>& basis, Workspace& ws,
             int* pivots) {
    const int m = static_cast<int>(supply.size());
    const int n = static_cast<int>(demand.size());
    if (!usable_warm_start(m, n, basis)) northwest_corner(supply, demand, basis);

    double cmax = 0.0;
    for (double c : cost) cmax = std::max(cmax, c);
    const double eps = 1e-12 * (1.0 + cmax);

    ws.basic.assign(static_cast<std::size_t>(m) * n, 0);
    for (const auto& c : basis) ws.basic[static_cast<std::size_t>(c.row) * n + c.col] = 1;

    const int bland_after = m + n;
    const long pivot_cap = 50L * (m + n) * (m + n) + 1000;
    int degenerate_run = 0;
    long count = 0;
    std::vector<int> minus_edges, plus_edges;

    while (true) {
        if (!compute_potentials(m, n, cost, basis, ws)) {
            // A warm start that is not a spanning tree; restart cold.
            northwest_corner(supply, demand, basis);
            ws.basic.assign(static_cast<std::size_t>(m) * n, 0);
            for (const auto& c : basis) ws.basic[static_cast<std::size_t>(c.row) * n + c.col] = 1;
            if (!compute_potentials(m, n, cost, basis, ws))
                throw Error(ErrorCode::InvalidInput, "transportation basis is not a tree");
        }

        const bool bland = degenerate_run >= bland_after;
        int enter_i = -1, enter_j = -1;
        double best = -eps;
        for (int i = 0; i < m && !(bland && enter_i >= 0); ++i) {
            const double ui = ws.u[i];
            const std::size_t base = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                if (ws.basic[base + j]) continue;
                const double rc = cost[base + j] - ui - ws.v[j];
                if (rc < best) {
                    best = rc;
                    enter_i = i;
                    enter_j = j;
                    if (bland) break;
                }
            }
        }
        if (enter_i < 0) break;
        if (++count > pivot_cap)
            throw Error(ErrorCode::InvalidInput, "transportation simplex exceeded its pivot cap");

        // Tree path between row node enter_i and column node m + enter_j.
        minus_edges.clear();
        plus_edges.clear();
        int a = enter_i;      // row side: an edge is "minus" when its child is a row
        int b = m + enter_j;  // column side: "minus" when its child is a column
        while (a != b) {
            if (ws.depth[a] >= ws.depth[b]) {
                const int e = ws.parent_edge[a];
                (a < m ? minus_edges : plus_edges).push_back(e);
                a = a < m ? m + basis[e].col : basis[e].row;
            } else {
                const int e = ws.parent_edge[b];
                (b >= m ? minus_edges : plus_edges).push_back(e);
                b = b < m ? m + basis[e].col : basis[e].row;
            }
        }

        int leave = -1;
        double theta = std::numeric_limits<double>::infinity();
        int leave_key = std::numeric_limits<int>::max();
        for (int e : minus_edges) {
            const auto& c = basis[static_cast<std::size_t>(e)];
            const int key = c.row * n + c.col;
            if (c.flow < theta || (c.flow == theta && key < leave_key)) {
                theta = c.flow;
                leave = e;
                leave_key = key;
            }
        }

        for (int e : minus_edges) basis[static_cast<std::size_t>(e)].flow -= theta;
        for (int e : plus_edges) basis[static_cast<std::size_t>(e)].flow += theta;
        auto& out = basis[static_cast<std::size_t>(leave)];
        ws.basic[static_cast<std::size_t>(out.row) * n + out.col] = 0;
        out = {enter_i, enter_j, theta};
        ws.basic[static_cast<std::size_t>(enter_i) * n + enter_j] = 1;
        for (int e : minus_edges)
            if (basis[static_cast<std::size_t>(e)].flow < 0.0) basis[static_cast<std::size_t>(e)].flow = 0.0;

        degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    }
    if (pivots) *pivots = static_cast<int>(count);
    return basis_cost(basis, cost, n);
}

}  // namespace simplex

namespace {

double marginal_violation(const Matrix& plan, std::span<const double> p, std::span<const double> q) {
    double worst = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        double sum = 0.0;
        for (double x : plan.row(i)) sum += x;
        worst = std::max(worst, std::abs(sum - p[i]));
    }
    for (std::size_t j = 0; j < plan.cols(); ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < plan.rows(); ++i) sum += plan(i, j);
        worst = std::max(worst, std::abs(sum - q[j]));
    }
    return worst;
}

std::vector<int> support(std::span<const double> mass) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < mass.size(); ++i)
        if (mass[i] > 0.0) idx.push_back(static_cast<int>(i));
    return idx;
}

}  // namespace

TransportSolution w1_exact(const TransportProblem& problem) {
    check_problem(problem);
    const auto rows = support(problem.p);
    const auto cols = support(problem.q);
    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(cols.size());

    std::vector<double> supply(static_cast<std::size_t>(m)), demand(static_cast<std::size_t>(n));
    std::vector<double> cost(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) supply[i] = problem.p[rows[i]];
    for (int j = 0; j < n; ++j) demand[j] = problem.q[cols[j]];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = problem.cost(rows[i], cols[j]);

    std::vector<simplex::BasisCell> basis;
    simplex::Workspace ws;
    int pivots = 0;
    const double value = simplex::solve(supply, demand, cost, basis, ws, &pivots);

    TransportSolution out;
    out.plan = Matrix(problem.p.size(), problem.q.size(), 0.0);
    for (const auto& c : basis) out.plan(rows[c.row], cols[c.col]) += c.flow;
    out.value = value;
    out.status = SolutionStatus::Optimal;
    out.iterations = pivots;
    out.marginal_violation = marginal_violation(out.plan, problem.p, problem.q);
    return out;
}

double default_sinkhorn_epsilon(const Matrix& cost) {
    const double cmax = cost.max_abs();
    return cmax > 0.0 ? 1e-3 * cmax : 1e-3;
}

namespace {

double log_sum_exp(std::span<const double> x) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : x) hi = std::max(hi, v);
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - hi);
    return hi + std::log(sum);
}

}  // namespace

TransportSolution w1_sinkhorn(const TransportProblem& problem, double epsilon, int max_iter) {
    check_problem(problem);
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidInput, "epsilon must be positive");
    if (max_iter < 1) throw Error(ErrorCode::InvalidInput, "max_iter must be positive");

    const auto rows = support(problem.p);
    const auto cols = support(problem.q);
    const std::size_t m = rows.size(), n = cols.size();
    std::vector<double> log_p(m), log_q(n), p(m), q(n);
    for (std::size_t i = 0; i < m; ++i) p[i] = problem.p[rows[i]], log_p[i] = std::log(p[i]);
    for (std::size_t j = 0; j < n; ++j) q[j] = problem.q[cols[j]], log_q[j] = std::log(q[j]);
    Matrix c(m, n);
    double cmax = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            c(i, j) = problem.cost(rows[i], cols[j]);
            cmax = std::max(cmax, c(i, j));
        }

    constexpr double kMarginalTarget = 1e-6;
    std::vector<double> f(m, 0.0), g(n, 0.0), buf(std::max(m, n));

    auto row_violation = [&](double eps) {
        double worst = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += std::exp((f[i] + g[j] - c(i, j)) / eps);
            worst = std::max(worst, std::abs(sum - p[i]));
        }
        return worst;
    };

    // Epsilon scaling: halve from the cost scale down to the target.
    std::vector<double> schedule;
    for (double e = std::max(cmax, epsilon); e > epsilon; e *= 0.5) schedule.push_back(e);
    schedule.push_back(epsilon);

    int iterations = 0;
    double violation = std::numeric_limits<double>::infinity();
    for (std::size_t stage = 0; stage < schedule.size() && iterations < max_iter; ++stage) {
        const double eps = schedule[stage];
        const bool last = stage + 1 == schedule.size();
        const double target = last ? kMarginalTarget : 1e-4;
        while (iterations < max_iter) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) buf[j] = (g[j] - c(i, j)) / eps;
                f[i] = eps * (log_p[i] - log_sum_exp({buf.data(), n}));
            }
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t i = 0; i < m; ++i) buf[i] = (f[i] - c(i, j)) / eps;
                g[j] = eps * (log_q[j] - log_sum_exp({buf.data(), m}));
            }
            ++iterations;
            violation = row_violation(eps);
            if (violation <= target) break;
        }
    }

    Matrix plan(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) plan(i, j) = std::exp((f[i] + g[j] - c(i, j)) / epsilon);

    // Near-degenerate costs make the last digits of marginal accuracy very
    // slow to reach. An iterate that stalls close to feasible is projected
    // onto the coupling polytope (shrink rows, shrink columns, then spread
    // the leftover mass as a rank-one correction); the cost shifts by at most
    // the stalled violation times the cost range.
    constexpr double kRoundingReach = 1e-4;
    if (violation > kMarginalTarget && violation <= kRoundingReach) {
        for (std::size_t i = 0; i < m; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += plan(i, j);
            if (sum > p[i])
                for (std::size_t j = 0; j < n; ++j) plan(i, j) *= p[i] / sum;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) sum += plan(i, j);
            if (sum > q[j])
                for (std::size_t i = 0; i < m; ++i) plan(i, j) *= q[j] / sum;
        }
        std::vector<double> row_gap(m), col_gap(n);
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += plan(i, j);
            row_gap[i] = std::max(0.0, p[i] - sum);
            total += row_gap[i];
        }
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) sum += plan(i, j);
            col_gap[j] = std::max(0.0, q[j] - sum);
        }
        if (total > 0.0)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) plan(i, j) += row_gap[i] * col_gap[j] / total;
    }

    TransportSolution out;
    out.plan = Matrix(problem.p.size(), problem.q.size(), 0.0);
    double value = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            out.plan(rows[i], cols[j]) = plan(i, j);
            value += plan(i, j) * c(i, j);
        }
    out.value = value;
    out.status = SolutionStatus::Approximate;
    out.iterations = iterations;
    out.marginal_violation = marginal_violation(out.plan, problem.p, problem.q);
    out.converged = out.marginal_violation <= kMarginalTarget;
    return out;
}

}  // namespace dtbsm
