#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtbsm/io.hpp"
#include "dtbsm/prefilter.hpp"
#include "dtbsm/wireless.hpp"

namespace dtbsm {

/// Settings for the end-to-end pre-filtering run.
struct RunConfig {
    EnvSpec env_spec;
    int pool_size = 120;
    /// Selection ratio used for the ledger's selected_by column and costs.json.
    double ratio = 0.05;
    std::vector<Strategy> strategies{Strategy::Evaluation, Strategy::Random, Strategy::Reward,
                                     Strategy::BruteForce};
    std::uint64_t seed = 0;
    /// Planning tolerance for value iteration and policy evaluation.
    double tol = kPlanningTolerance;
    double bsm_tol = 1e-6;
    InnerSolver solver = InnerSolver::Exact;
    /// Trainer for the main ledger; the bound ledger always uses mixed_trainers().
    TrainerKind trainer = TrainerKind::Exact;
    int q_episodes = 1000;
    int q_horizon = 50;
    int random_resamples = 100;
    /// Ratios reported in the prefilter_bars plot data.
    std::vector<double> ratios{0.05};
    int threads = 1;
};

void validate_run_config(const RunConfig& config);

/// Missing keys keep their defaults. `env_spec` is an inline object or a path
/// resolved against `base_dir`.
RunConfig run_config_from_json(const io::json& j, const std::filesystem::path& base_dir = {});
io::json run_config_to_json(const RunConfig& config);

QLearningParams q_learning_params(const RunConfig& config);
BsmOptions bsm_options(const RunConfig& config);

struct PipelineResult {
    FiniteMdp real;
    std::vector<CandidateDT> candidates;
    std::vector<double> mismatch;
    /// Main ledger with selected_by filled for config.ratio.
    Experiment ledger;
    /// Same pool and mismatch scores trained with mixed_trainers().
    Experiment bound_ledger;
    /// Empty when no bound fits the even-id runs; bound_error says why.
    std::optional<BoundFit> bound;
    std::string bound_error;
    bool converged = true;
};

/**
 * Builds the environment and candidate pool, scores every candidate, trains
 * and deploys, then fits the bound. All randomness derives from config.seed:
 * the pool, the Q-learning runs and the random selection each split it by
 * component name.
 */
PipelineResult run_pipeline(const RunConfig& config);

/// costs.json body: per strategy cost report and ids at `ratio`. The random
/// entry also carries medians over `random_resamples` draws.
io::json selection_costs_json(const std::vector<ExperimentRun>& runs, const RunConfig& config);

}  // namespace dtbsm
