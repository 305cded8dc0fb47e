#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dtbsm/mdp.hpp"

namespace dtbsm {

/// Per-UE traffic arrival law, in traffic units per scheduling step.
///   periodic: 1 unit, plus an extra unit with probability 0.1
///   bursty:   0 w.p. 0.7, 3 w.p. 0.3
///   steady:   1 w.p. 0.8, 2 w.p. 0.2
enum class ArrivalProfile { Periodic, Bursty, Steady };

std::string profile_name(ArrivalProfile p);
ArrivalProfile parse_profile(const std::string& name);

/// Uplink single-cell resource-allocation environment description.
struct EnvSpec {
    int n_ues = 3;
    int n_blocks = 3;
    int backlog_levels = 3;
    /// Positive priorities; normalized to sum 1 when the environment is built.
    std::vector<double> weights{3.0, 2.0, 1.0};
    std::vector<ArrivalProfile> arrival_profiles{ArrivalProfile::Periodic, ArrivalProfile::Bursty,
                                                 ArrivalProfile::Steady};
    int capacity_per_block = 1;
    double gamma = kDefaultGamma;
    std::uint64_t seed = 0;
    /// Upper bound on |S| * |A| * |S| dense transition entries.
    std::uint64_t budget = 10'000'000;
};

void validate_spec(const EnvSpec& spec);

/// State/action indexing of the environment built from a spec.
/// State index: sum_i backlog_i * levels^i (UE 0 least significant).
/// Actions: block allocations (b_0, ..., b_{K-1}) summing to n_blocks, in
/// lexicographic order.
class WirelessLayout {
public:
    explicit WirelessLayout(const EnvSpec& spec);

    int n_states() const noexcept { return n_states_; }
    int n_actions() const noexcept { return static_cast<int>(allocations_.size()); }
    std::vector<int> backlogs(int state) const;
    int state_index(const std::vector<int>& backlogs) const;
    const std::vector<int>& allocation(int action) const { return allocations_.at(static_cast<std::size_t>(action)); }

private:
    int ues_, levels_, n_states_;
    std::vector<std::vector<int>> allocations_;
};

/// Maps a backlog value to its nearest representative level.
struct Quantizer {
    std::vector<int> representatives;
    bool round_up = false;

    int apply(int backlog) const;
    static Quantizer identity(int levels);
    /// `coarse_levels` representatives evenly spread over [0, levels - 1].
    static Quantizer coarse(int levels, int coarse_levels, bool round_up);
};

/// Exact transition tensor for the spec (arrival outcomes enumerated).
FiniteMdp build_real_env(const EnvSpec& spec);

/// Model rebuilt at reduced backlog resolution and lifted back onto the full
/// state indexing: each state acts as its quantized representative, and next
/// states are quantized before being mapped back.
FiniteMdp build_quantized_env(const EnvSpec& spec, const std::vector<Quantizer>& per_ue);

enum class Family { Empirical, Smoothing, RewardNoise, Granularity };

std::string family_name(Family f);

struct Recipe {
    Family family = Family::Smoothing;
    std::map<std::string, double> params;

    /// "key=value;key=value" in key order.
    std::string params_text() const;
};

struct CandidateDT {
    int id = 0;
    FiniteMdp mdp;
    Recipe recipe;
    std::uint64_t seed = 0;
};

struct PoolOptions {
    std::int64_t episode_length = 50;
    double kappa = 0.0;
};

/// P <- (1 - lambda) P + lambda * uniform.
FiniteMdp smooth_transitions(const FiniteMdp& mdp, double lambda);

/// R <- clamp(R + sigma * N(0, 1), 0, 1), one draw per entry.
FiniteMdp perturb_rewards(const FiniteMdp& mdp, double sigma, std::uint64_t seed);

/**
 * Deterministic pool of candidate twins, tiled as four contiguous family
 * blocks (sizes differ by at most one):
 *   smoothing    lambda = 0, then 0.05 .. 0.8 evenly spaced
 *   empirical    estimate from n_steps in {1e2, 1e3, 1e4, 1e5} (cycled)
 *   reward noise sigma 0.02 .. 0.5 evenly spaced
 *   granularity  per-UE coarsening combinations spread over all of them
 * Candidate 0 is always the lambda = 0 (exact) twin.
 */
std::vector<CandidateDT> generate_candidates(const FiniteMdp& real, const EnvSpec& spec,
                                             int n_candidates, std::uint64_t seed,
                                             const PoolOptions& options = {});

}  // namespace dtbsm
