#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtbsm/bsm.hpp"
#include "dtbsm/mdp.hpp"
#include "dtbsm/wireless.hpp"

namespace dtbsm {

enum class TrainerKind { Exact, QLearning };

struct TrainerConfig {
    TrainerKind kind = TrainerKind::Exact;
    /// Used when kind == QLearning; the seed is overwritten per candidate.
    QLearningParams q_learning;
};

/// Exact planning everywhere except candidates with (id / 2) even, which get
/// low-budget Q-learning. Both halves of an even/odd split see both trainers.
std::vector<TrainerConfig> mixed_trainers(std::span<const CandidateDT> candidates,
                                          const QLearningParams& q_params);

struct ExperimentOptions {
    /// Initial-state distribution; empty means uniform.
    std::vector<double> rho;
    double tol = kPlanningTolerance;
    BsmOptions bsm;
    /// Workers across candidates.
    int threads = 1;
    /// Parent seed for per-candidate trainer seeds.
    std::uint64_t seed = 0;
};

struct ExperimentRun {
    int candidate_id = 0;
    std::string family;
    std::string params;
    double bsm_scalar = 0.0;
    double train_suboptimality = 0.0;
    double deploy_suboptimality = 0.0;
    double deploy_value = 0.0;
    /// rho-weighted value of the trained policy inside its own twin.
    double in_dt_value = 0.0;
    /// Planner sweeps (exact) or episodes (Q-learning).
    int training_effort = 0;
    std::string trainer = "exact";
    std::string selected_by;
};

struct Experiment {
    std::vector<ExperimentRun> runs;
    /// rho-weighted optimal value of the real environment.
    double v_star_rho = 0.0;
    bool converged = true;
};

/// Worst-case mismatch of every candidate against the real environment.
std::vector<double> compute_pool_mismatch(const FiniteMdp& real,
                                          std::span<const CandidateDT> candidates,
                                          const BsmOptions& bsm, int threads = 1,
                                          bool* all_converged = nullptr);

/**
 * Trains one policy per candidate inside the candidate, deploys it in the real
 * environment, and records both suboptimality gaps with the candidate's
 * mismatch. `trainers` holds one entry per candidate or a single shared entry.
 * `mismatch` may carry precomputed compute_pool_mismatch() output.
 */
Experiment run_experiment(const FiniteMdp& real, std::span<const CandidateDT> candidates,
                          std::span<const TrainerConfig> trainers,
                          const ExperimentOptions& options = {},
                          std::optional<std::vector<double>> mismatch = std::nullopt);

enum class Strategy { Evaluation, Reward, Random, BruteForce };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

/// max(1, floor(ratio * pool)), computed without float drift for ratios that
/// are exact multiples of 1/pool.
std::size_t subset_size(double ratio, std::size_t pool);

/// Candidate ids chosen by a strategy, returned in ascending id order.
///   evaluation: lowest bsm_scalar; reward: highest in_dt_value;
///   random: seeded uniform subset; brute_force: everything.
/// Ties go to the lower candidate id.
std::vector<int> select(std::span<const ExperimentRun> runs, Strategy strategy, double ratio,
                        std::uint64_t seed = 0);

struct CostReport {
    std::size_t n_trained = 0;
    std::size_t n_tested = 0;
    double training_cost_reduction = 0.0;
    double testing_cost = 0.0;
    double testing_cost_reduction = 0.0;
    double best_deploy_value = 0.0;
};

CostReport cost_report(std::span<const ExperimentRun> runs, std::span<const int> subset,
                       double v_star_rho);

struct BoundFit {
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<int> fit_runs;
    std::vector<int> holdout_runs;
    double holdout_violation_rate = 0.0;
    std::size_t fit_violations = 0;
};

inline constexpr double kBoundSlack = 1e-9;

/**
 * Smallest alpha + beta (both >= 0) with
 *   deploy_suboptimality <= alpha * bsm_scalar + beta * train_suboptimality + 1e-9
 * on every fit run, by enumerating the vertices of the two-variable feasible
 * region. Throws Degenerate when no such pair exists.
 */
BoundFit fit_bound(std::span<const ExperimentRun> runs, std::span<const int> fit_ids,
                   std::span<const int> holdout_ids);

/// Even candidate ids fit, odd ids hold out.
BoundFit fit_bound_even_odd(std::span<const ExperimentRun> runs);

/// Cost reports for `resamples` random selections; draw r uses
/// split_seed(seed, "random_selection", r).
std::vector<CostReport> random_selection_costs(std::span<const ExperimentRun> runs, double ratio,
                                               std::uint64_t seed, int resamples,
                                               double v_star_rho);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace dtbsm
