#include "dtbsm/estimation.hpp"

#include <cmath>

namespace dtbsm {

TrajectoryBatch sample_trajectories(const FiniteMdp& env, const std::optional<Policy>& behavior,
                                    std::int64_t n_steps, std::int64_t episode_length,
                                    std::uint64_t seed, std::optional<std::vector<double>> rho) {
    if (n_steps < 1) throw Error(ErrorCode::InvalidInput, "n_steps must be at least 1");
    if (episode_length < 1) throw Error(ErrorCode::InvalidInput, "episode_length must be at least 1");
    if (behavior && behavior->n_states() != env.n_states())
        throw Error(ErrorCode::ShapeMismatch, "behavior policy does not cover every state");
    const std::vector<double> start = rho ? std::move(*rho) : uniform_distribution(env.n_states());
    if (static_cast<int>(start.size()) != env.n_states())
        throw Error(ErrorCode::ShapeMismatch, "rho must cover every state");

    TrajectoryBatch batch;
    batch.seed = seed;
    batch.behavior = behavior ? "policy" : "uniform";
    batch.samples.reserve(static_cast<std::size_t>(n_steps));

    RngState rng{seed};
    int s = 0;
    for (std::int64_t t = 0; t < n_steps; ++t) {
        const std::int64_t episode = t / episode_length;
        if (t % episode_length == 0) s = sample_index(start, rng.uniform());
        int a = 0;
        if (!behavior) {
            a = static_cast<int>(rng.below(static_cast<std::uint64_t>(env.n_actions())));
        } else if (behavior->kind() == Policy::Kind::Deterministic) {
            a = behavior->action(s);
        } else {
            a = sample_index(behavior->probabilities().row(static_cast<std::size_t>(s)), rng.uniform());
        }
        const StepResult st = step(env, s, a, rng);
        rng = st.rng;
        batch.samples.push_back({t, s, a, st.reward, st.next_state, episode});
        s = st.next_state;
    }
    return batch;
}

bool is_chained(const TrajectoryBatch& batch) {
    for (std::size_t k = 1; k < batch.samples.size(); ++k) {
        const auto& prev = batch.samples[k - 1];
        const auto& cur = batch.samples[k];
        if (prev.episode == cur.episode && prev.sn != cur.s) return false;
    }
    return true;
}

FiniteMdp estimate_mdp(const TrajectoryBatch& batch, int n_states, int n_actions, double gamma,
                       double kappa) {
    if (batch.samples.empty()) throw Error(ErrorCode::EmptyBatch, "cannot estimate from an empty batch");
    if (n_states < 1 || n_actions < 1)
        throw Error(ErrorCode::InvalidInput, "state and action counts must be positive");
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw Error(ErrorCode::InvalidInput, "kappa must be a finite nonnegative number");

    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    std::vector<double> counts(S * A * S, 0.0);
    std::vector<double> visits(S * A, 0.0);
    std::vector<double> reward_mean(S * A, 0.0);

    for (const auto& x : batch.samples) {
        if (x.s < 0 || x.s >= n_states || x.sn < 0 || x.sn >= n_states || x.a < 0 ||
            x.a >= n_actions)
            throw Error(ErrorCode::IndexOutOfRange, "sample index outside the declared sizes");
        const std::size_t sa = static_cast<std::size_t>(x.s) * A + static_cast<std::size_t>(x.a);
        counts[sa * S + static_cast<std::size_t>(x.sn)] += 1.0;
        visits[sa] += 1.0;
        // Running mean: repeated identical rewards reproduce the reward exactly.
        reward_mean[sa] += (x.r - reward_mean[sa]) / visits[sa];
    }

    std::vector<double> transitions(S * A * S, 0.0);
    std::vector<double> rewards(S * A, 0.5);
    for (std::size_t sa = 0; sa < S * A; ++sa) {
        const double n = visits[sa];
        if (n > 0.0) rewards[sa] = reward_mean[sa];
        const double denom = n + kappa * static_cast<double>(S);
        for (std::size_t k = 0; k < S; ++k) {
            transitions[sa * S + k] = denom > 0.0 ? (counts[sa * S + k] + kappa) / denom
                                                  : 1.0 / static_cast<double>(S);
        }
    }
    return FiniteMdp(n_states, n_actions, std::move(transitions), std::move(rewards), gamma);
}

std::vector<SweepPoint> sample_sweep(const FiniteMdp& env, const FiniteMdp& truth,
                                     std::span<const std::int64_t> sizes,
                                     std::span<const std::uint64_t> seeds,
                                     const SweepOptions& options) {
    if (sizes.empty() || seeds.empty())
        throw Error(ErrorCode::InvalidInput, "sweep needs at least one size and one seed");
    for (std::size_t k = 1; k < sizes.size(); ++k)
        if (sizes[k] <= sizes[k - 1])
            throw Error(ErrorCode::InvalidInput, "sweep sizes must be strictly increasing");

    std::vector<SweepPoint> curve;
    for (const std::int64_t n : sizes) {
        SweepPoint point;
        point.n_steps = n;
        for (const std::uint64_t seed : seeds) {
            const auto batch =
                sample_trajectories(env, std::nullopt, n, options.episode_length, seed);
            const auto model =
                estimate_mdp(batch, env.n_states(), env.n_actions(), env.gamma(), options.kappa);
            const auto metric = compute_dt_bsm(truth, model, options.bsm);
            point.per_seed.push_back(scalarize(metric, ScalarMode::WorstCase).scalar_max);
        }
        point.median = median(point.per_seed);
        curve.push_back(std::move(point));
    }
    return curve;
}

}  // namespace dtbsm
