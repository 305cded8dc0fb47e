#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtbsm/bsm.hpp"
#include "dtbsm/mdp.hpp"

namespace dtbsm {

struct TransitionSample {
    std::int64_t t = 0;
    int s = 0;
    int a = 0;
    double r = 0.0;
    int sn = 0;
    std::int64_t episode = 0;

    friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

struct TrajectoryBatch {
    std::vector<TransitionSample> samples;
    std::uint64_t seed = 0;
    /// "uniform" or "policy".
    std::string behavior = "uniform";

    friend bool operator==(const TrajectoryBatch&, const TrajectoryBatch&) = default;
};

/// Rolls out `n_steps` transitions. A new episode starts from rho every
/// `episode_length` steps. Without a behavior policy actions are uniform.
TrajectoryBatch sample_trajectories(const FiniteMdp& env, const std::optional<Policy>& behavior,
                                    std::int64_t n_steps, std::int64_t episode_length,
                                    std::uint64_t seed,
                                    std::optional<std::vector<double>> rho = std::nullopt);

/// True when consecutive samples of every episode chain (sn_t == s_{t+1}).
bool is_chained(const TrajectoryBatch& batch);

/**
 * Count-based model:
 *   P(s'|s,a) = (N(s,a,s') + kappa) / (N(s,a) + kappa * n_states)
 *   R(s,a)    = mean observed reward, 0.5 for unvisited pairs.
 * Unvisited pairs with kappa = 0 get the uniform row.
 */
FiniteMdp estimate_mdp(const TrajectoryBatch& batch, int n_states, int n_actions, double gamma,
                       double kappa = 0.0);

struct SweepPoint {
    std::int64_t n_steps = 0;
    double median = 0.0;
    /// Worst-case mismatch per seed, in the order of the seed list.
    std::vector<double> per_seed;
};

struct SweepOptions {
    std::int64_t episode_length = 50;
    double kappa = 0.0;
    BsmOptions bsm;
};

/// Empirical sample-complexity curve: for each size and seed, estimate a model
/// from `env` rollouts and measure its worst-case mismatch against `truth`.
/// The seed is used directly for sampling, so datasets for the same seed are
/// nested prefixes across sizes.
std::vector<SweepPoint> sample_sweep(const FiniteMdp& env, const FiniteMdp& truth,
                                     std::span<const std::int64_t> sizes,
                                     std::span<const std::uint64_t> seeds,
                                     const SweepOptions& options = {});

}  // namespace dtbsm
