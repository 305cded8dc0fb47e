#include "dtbsm/bsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtbsm/parallel.hpp"
#include "dtbsm/transport.hpp"

namespace dtbsm {

namespace {

void check_pair(const FiniteMdp& real, const FiniteMdp& dt) {
    if (real.n_actions() != dt.n_actions())
        throw Error(ErrorCode::ActionSpaceMismatch, "real and twin MDPs differ in action count");
    if (real.gamma() != dt.gamma())
        throw Error(ErrorCode::DiscountMismatch, "real and twin MDPs use different discounts");
}

struct Support {
    std::vector<int> index;
    std::vector<double> mass;
};

std::vector<Support> supports_of(const FiniteMdp& mdp) {
    std::vector<Support> out(static_cast<std::size_t>(mdp.n_states()) * mdp.n_actions());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a) {
            auto& sup = out[static_cast<std::size_t>(s) * mdp.n_actions() + a];
            const auto row = mdp.row(s, a);
            for (std::size_t k = 0; k < row.size(); ++k)
                if (row[k] > 0.0) {
                    sup.index.push_back(static_cast<int>(k));
                    sup.mass.push_back(row[k]);
                }
        }
    return out;
}

// Holds the per-(s, s', a) optimal bases between sweeps. Marginals never change
// across sweeps, so the previous basis is primal feasible for the new ground
// cost: its cost is an upper bound on the new W1 and a warm start for the
// simplex.
class BsmEngine {
public:
    BsmEngine(const FiniteMdp& real, const FiniteMdp& dt, const BsmOptions& options)
        : real_(real),
          dt_(dt),
          options_(options),
          n_real_(real.n_states()),
          n_dt_(dt.n_states()),
          n_actions_(real.n_actions()),
          real_sup_(supports_of(real)),
          dt_sup_(supports_of(dt)) {
        if (options_.solver == InnerSolver::Exact)
            bases_.resize(static_cast<std::size_t>(n_real_) * n_dt_ * n_actions_);
    }

    void sweep(const Matrix& d, Matrix& out) {
        const int workers = std::max(1, options_.threads <= 0 ? default_threads() : options_.threads);
        std::vector<Scratch> scratch(static_cast<std::size_t>(workers));
        parallel_for(static_cast<std::size_t>(n_real_), workers, [&](std::size_t s, int w) {
            auto& sc = scratch[static_cast<std::size_t>(w)];
            for (int t = 0; t < n_dt_; ++t)
                out(s, static_cast<std::size_t>(t)) = cell(d, static_cast<int>(s), t, sc);
        });
    }

private:
    struct Scratch {
        simplex::Workspace ws;
        std::vector<double> cost;
        std::vector<double> upper;
        std::vector<int> order;
    };

    double cell(const Matrix& d, int s, int t, Scratch& sc) {
        const double gamma = real_.gamma();
        if (options_.solver == InnerSolver::Sinkhorn) {
            double best = 0.0;
            for (int a = 0; a < n_actions_; ++a) {
                const double w = sinkhorn_value(d, s, t, a);
                best = std::max(best, std::abs(real_.reward(s, a) - dt_.reward(t, a)) + gamma * w);
            }
            return best;
        }

        sc.upper.assign(static_cast<std::size_t>(n_actions_), 0.0);
        sc.order.resize(static_cast<std::size_t>(n_actions_));
        for (int a = 0; a < n_actions_; ++a) {
            const auto& basis = bases_[key(s, t, a)];
            const auto& rs = real_sup_[sup_key(s, a)];
            const auto& ts = dt_sup_[sup_key(t, a)];
            double bound = std::numeric_limits<double>::infinity();
            if (!basis.empty()) {
                bound = 0.0;
                for (const auto& c : basis)
                    bound += c.flow * d(static_cast<std::size_t>(rs.index[c.row]),
                                        static_cast<std::size_t>(ts.index[c.col]));
            }
            sc.upper[a] = std::abs(real_.reward(s, a) - dt_.reward(t, a)) + gamma * bound;
        }
        std::iota(sc.order.begin(), sc.order.end(), 0);
        std::stable_sort(sc.order.begin(), sc.order.end(),
                         [&](int x, int y) { return sc.upper[x] > sc.upper[y]; });

        double best = 0.0;
        for (int a : sc.order) {
            if (sc.upper[a] <= best) break;
            const double w = exact_value(d, s, t, a, sc);
            best = std::max(best, std::abs(real_.reward(s, a) - dt_.reward(t, a)) + gamma * w);
        }
        return best;
    }

    double exact_value(const Matrix& d, int s, int t, int a, Scratch& sc) {
        const auto& rs = real_sup_[sup_key(s, a)];
        const auto& ts = dt_sup_[sup_key(t, a)];
        const std::size_t m = rs.index.size(), n = ts.index.size();
        sc.cost.resize(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            const auto r = static_cast<std::size_t>(rs.index[i]);
            for (std::size_t j = 0; j < n; ++j)
                sc.cost[i * n + j] = d(r, static_cast<std::size_t>(ts.index[j]));
        }
        // Each (s, t, a) cell is touched by exactly one worker per sweep.
        return simplex::solve(rs.mass, ts.mass, sc.cost, bases_[key(s, t, a)], sc.ws);
    }

    double sinkhorn_value(const Matrix& d, int s, int t, int a) const {
        TransportProblem problem;
        const auto& rs = real_sup_[sup_key(s, a)];
        const auto& ts = dt_sup_[sup_key(t, a)];
        problem.p = rs.mass;
        problem.q = ts.mass;
        renormalize(problem.p);
        renormalize(problem.q);
        problem.cost = Matrix(rs.index.size(), ts.index.size());
        for (std::size_t i = 0; i < rs.index.size(); ++i)
            for (std::size_t j = 0; j < ts.index.size(); ++j)
                problem.cost(i, j) = d(static_cast<std::size_t>(rs.index[i]),
                                       static_cast<std::size_t>(ts.index[j]));
        const double eps = options_.sinkhorn_epsilon > 0.0 ? options_.sinkhorn_epsilon
                                                           : default_sinkhorn_epsilon(problem.cost);
        if (problem.cost.max_abs() == 0.0) return 0.0;
        return w1_sinkhorn(problem, eps, options_.sinkhorn_max_iter).value;
    }

    static void renormalize(std::vector<double>& mass) {
        const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        for (double& x : mass) x /= total;
    }

    std::size_t key(int s, int t, int a) const {
        return (static_cast<std::size_t>(s) * n_dt_ + t) * n_actions_ + a;
    }
    std::size_t sup_key(int s, int a) const { return static_cast<std::size_t>(s) * n_actions_ + a; }

    const FiniteMdp& real_;
    const FiniteMdp& dt_;
    BsmOptions options_;
    int n_real_, n_dt_, n_actions_;
    std::vector<Support> real_sup_, dt_sup_;
    std::vector<std::vector<simplex::BasisCell>> bases_;
};

}  // namespace

double max_reward_gap(const FiniteMdp& real, const FiniteMdp& dt) {
    check_pair(real, dt);
    double gap = 0.0;
    for (int s = 0; s < real.n_states(); ++s)
        for (int t = 0; t < dt.n_states(); ++t)
            for (int a = 0; a < real.n_actions(); ++a)
                gap = std::max(gap, std::abs(real.reward(s, a) - dt.reward(t, a)));
    return gap;
}

Matrix bsm_step(const FiniteMdp& real, const FiniteMdp& dt, const Matrix& d,
                const BsmOptions& options) {
    check_pair(real, dt);
    if (d.rows() != static_cast<std::size_t>(real.n_states()) ||
        d.cols() != static_cast<std::size_t>(dt.n_states()))
        throw Error(ErrorCode::ShapeMismatch, "metric shape must be [real states][twin states]");
    for (double x : d.data())
        if (!(x >= 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::InvalidInput, "metric entries must be finite and nonnegative");
    BsmEngine engine(real, dt, options);
    Matrix out(d.rows(), d.cols());
    engine.sweep(d, out);
    return out;
}

PairwiseMetric compute_dt_bsm(const FiniteMdp& real, const FiniteMdp& dt, const BsmOptions& options) {
    check_pair(real, dt);
    if (!(options.tol > 0.0)) throw Error(ErrorCode::InvalidInput, "tol must be positive");
    if (options.max_iter < 1) throw Error(ErrorCode::InvalidInput, "max_iter must be positive");

    BsmEngine engine(real, dt, options);
    const auto rows = static_cast<std::size_t>(real.n_states());
    const auto cols = static_cast<std::size_t>(dt.n_states());
    Matrix d(rows, cols, 0.0), next(rows, cols, 0.0);

    PairwiseMetric metric;
    metric.gamma = real.gamma();
    double change = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < options.max_iter) {
        engine.sweep(d, next);
        change = 0.0;
        for (std::size_t k = 0; k < d.data().size(); ++k)
            change = std::max(change, std::abs(next.data()[k] - d.data()[k]));
        std::swap(d, next);
        ++it;
        metric.residuals.push_back(change);
        if (change <= options.tol) break;
    }
    metric.d = std::move(d);
    metric.iterations = it;
    metric.residual = change;
    metric.converged = change <= options.tol;
    return metric;
}

MismatchReport scalarize(const PairwiseMetric& metric, ScalarMode mode,
                         std::optional<std::vector<double>> weights) {
    const std::size_t n = metric.d.rows();
    if (n == 0 || metric.d.cols() != n)
        throw Error(ErrorCode::ShapeMismatch, "identity pairing needs equal state counts");
    std::vector<double> w = weights ? std::move(*weights)
                                    : std::vector<double>(n, 1.0 / static_cast<double>(n));
    if (w.size() != n) throw Error(ErrorCode::ShapeMismatch, "weights must cover every real state");
    double mass = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw Error(ErrorCode::InvalidInput, "weights must be nonnegative");
        mass += x;
    }
    if (std::abs(mass - 1.0) > kRowSumTolerance)
        throw Error(ErrorCode::InvalidInput, "weights must sum to 1");

    MismatchReport report;
    report.mode = mode;
    for (std::size_t s = 0; s < n; ++s) {
        report.scalar_max = std::max(report.scalar_max, metric.d(s, s));
        report.scalar_avg += w[s] * metric.d(s, s);
    }
    // Rounding in the weighted sum must not push the average past the max.
    report.scalar_avg = std::min(report.scalar_avg, report.scalar_max);
    report.weights_used = std::move(w);
    report.metric = metric;
    return report;
}

bool drift_trigger(double current_mismatch, double threshold) {
    if (!(current_mismatch >= 0.0) || !(threshold >= 0.0))
        throw Error(ErrorCode::InvalidInput, "mismatch and threshold must be nonnegative");
    return current_mismatch > threshold;
}

}  // namespace dtbsm
