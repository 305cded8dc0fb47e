#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dtbsm/common.hpp"
#include "dtbsm/mdp.hpp"

namespace dtbsm {

enum class InnerSolver { Exact, Sinkhorn };

struct BsmOptions {
    double tol = 1e-6;
    int max_iter = 1000;
    InnerSolver solver = InnerSolver::Exact;
    /// Absolute entropic regularization for the Sinkhorn inner solver;
    /// 0 selects 1e-3 x (largest ground cost) per transport problem.
    double sinkhorn_epsilon = 0.0;
    int sinkhorn_max_iter = 10000;
    /// Worker threads for the per-sweep cell loop; <= 0 uses the hardware count.
    int threads = 1;
};

/// Pairwise distance d[real_state][dt_state] plus convergence diagnostics.
struct PairwiseMetric {
    Matrix d;
    int iterations = 0;
    /// Final sup-norm change between successive iterates.
    double residual = 0.0;
    bool converged = false;
    double gamma = 0.0;
    /// Sup-norm change after each sweep.
    std::vector<double> residuals;
};

/// max_{s,s',a} |R(s,a) - R'(s',a)|.
double max_reward_gap(const FiniteMdp& real, const FiniteMdp& dt);

/// One application of the bisimulation operator:
///   out[s][s'] = max_a |R(s,a) - R'(s',a)| + gamma W1(P(.|s,a), P'(.|s',a); d)
Matrix bsm_step(const FiniteMdp& real, const FiniteMdp& dt, const Matrix& d,
                const BsmOptions& options = {});

/// Fixed point of bsm_step iterated from d = 0. Iterates are monotone
/// nondecreasing for the exact inner solver; the fixed-point error is at most
/// residual * gamma / (1 - gamma).
PairwiseMetric compute_dt_bsm(const FiniteMdp& real, const FiniteMdp& dt,
                              const BsmOptions& options = {});

enum class ScalarMode { WorstCase, Average };

struct MismatchReport {
    double scalar_max = 0.0;
    double scalar_avg = 0.0;
    ScalarMode mode = ScalarMode::WorstCase;
    std::vector<double> weights_used;
    PairwiseMetric metric;

    /// The scalar selected by `mode`.
    double value() const noexcept { return mode == ScalarMode::WorstCase ? scalar_max : scalar_avg; }
};

/// Reduces the metric over the identity pairing s <-> s (requires equal state
/// counts). Weights default to uniform.
MismatchReport scalarize(const PairwiseMetric& metric, ScalarMode mode = ScalarMode::WorstCase,
                         std::optional<std::vector<double>> weights = std::nullopt);

/// Resynchronization signal: strictly greater than the threshold.
bool drift_trigger(double current_mismatch, double threshold);

}  // namespace dtbsm
