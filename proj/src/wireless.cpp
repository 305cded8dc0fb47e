#include "dtbsm/wireless.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dtbsm/estimation.hpp"
#include "dtbsm/rng.hpp"

namespace dtbsm {

namespace {

struct Outcome {
    int units;
    double probability;
};

std::vector<Outcome> arrivals(ArrivalProfile p) {
    switch (p) {
        case ArrivalProfile::Periodic: return {{1, 0.9}, {2, 0.1}};
        case ArrivalProfile::Bursty: return {{0, 0.7}, {3, 0.3}};
        case ArrivalProfile::Steady: return {{1, 0.8}, {2, 0.2}};
    }
    return {};
}

std::vector<double> normalized_weights(const EnvSpec& spec) {
    std::vector<double> w = spec.weights;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    return w;
}

void enumerate_allocations(int ue, int remaining, std::vector<int>& current,
                           std::vector<std::vector<int>>& out) {
    const int k = static_cast<int>(current.size());
    if (ue == k - 1) {
        current[static_cast<std::size_t>(ue)] = remaining;
        out.push_back(current);
        return;
    }
    for (int b = 0; b <= remaining; ++b) {
        current[static_cast<std::size_t>(ue)] = b;
        enumerate_allocations(ue + 1, remaining - b, current, out);
    }
}

std::string tuple_label(const std::vector<int>& xs) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    os << ')';
    return os.str();
}

}  // namespace

std::string profile_name(ArrivalProfile p) {
    switch (p) {
        case ArrivalProfile::Periodic: return "periodic";
        case ArrivalProfile::Bursty: return "bursty";
        case ArrivalProfile::Steady: return "steady";
    }
    return "unknown";
}

ArrivalProfile parse_profile(const std::string& name) {
    if (name == "periodic") return ArrivalProfile::Periodic;
    if (name == "bursty") return ArrivalProfile::Bursty;
    if (name == "steady") return ArrivalProfile::Steady;
    throw Error(ErrorCode::InvalidInput, "unknown arrival profile '" + name + "'");
}

void validate_spec(const EnvSpec& spec) {
    if (spec.n_ues < 1) throw Error(ErrorCode::InvalidInput, "n_ues must be at least 1");
    if (spec.n_blocks < 1) throw Error(ErrorCode::InvalidInput, "n_blocks must be at least 1");
    if (spec.backlog_levels < 2)
        throw Error(ErrorCode::InvalidInput, "backlog_levels must be at least 2");
    if (spec.capacity_per_block < 1)
        throw Error(ErrorCode::InvalidInput, "capacity_per_block must be at least 1");
    if (static_cast<int>(spec.weights.size()) != spec.n_ues)
        throw Error(ErrorCode::InvalidInput, "one weight per UE is required");
    for (double w : spec.weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw Error(ErrorCode::InvalidInput, "weights must be positive");
    if (static_cast<int>(spec.arrival_profiles.size()) != spec.n_ues)
        throw Error(ErrorCode::InvalidInput, "one arrival profile per UE is required");
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0))
        throw Error(ErrorCode::InvalidInput, "gamma must lie in (0,1)");

    double states = std::pow(static_cast<double>(spec.backlog_levels), spec.n_ues);
    // C(n_blocks + n_ues - 1, n_ues - 1)
    double actions = 1.0;
    for (int k = 1; k < spec.n_ues; ++k)
        actions = actions * static_cast<double>(spec.n_blocks + k) / static_cast<double>(k);
    if (states * actions * states > static_cast<double>(spec.budget))
        throw Error(ErrorCode::SpecTooLarge, "transition tensor exceeds the configured budget");
}

WirelessLayout::WirelessLayout(const EnvSpec& spec)
    : ues_(spec.n_ues), levels_(spec.backlog_levels), n_states_(1) {
    for (int i = 0; i < ues_; ++i) n_states_ *= levels_;
    std::vector<int> current(static_cast<std::size_t>(ues_), 0);
    enumerate_allocations(0, spec.n_blocks, current, allocations_);
}

std::vector<int> WirelessLayout::backlogs(int state) const {
    std::vector<int> b(static_cast<std::size_t>(ues_));
    for (int i = 0; i < ues_; ++i) {
        b[static_cast<std::size_t>(i)] = state % levels_;
        state /= levels_;
    }
    return b;
}

int WirelessLayout::state_index(const std::vector<int>& backlogs) const {
    int s = 0;
    for (int i = ues_ - 1; i >= 0; --i) s = s * levels_ + backlogs[static_cast<std::size_t>(i)];
    return s;
}

int Quantizer::apply(int backlog) const {
    int best = representatives.front();
    int best_gap = std::abs(backlog - best);
    for (int r : representatives) {
        const int gap = std::abs(backlog - r);
        if (gap < best_gap || (gap == best_gap && round_up && r > best)) {
            best = r;
            best_gap = gap;
        }
    }
    return best;
}

Quantizer Quantizer::identity(int levels) {
    Quantizer q;
    q.representatives.resize(static_cast<std::size_t>(levels));
    std::iota(q.representatives.begin(), q.representatives.end(), 0);
    return q;
}

Quantizer Quantizer::coarse(int levels, int coarse_levels, bool round_up) {
    if (coarse_levels < 1 || coarse_levels > levels)
        throw Error(ErrorCode::InvalidInput, "coarse level count must lie in [1, levels]");
    Quantizer q;
    q.round_up = round_up;
    const int top = levels - 1;
    if (coarse_levels == 1) {
        q.representatives.push_back(top / 2);
    } else {
        for (int j = 0; j < coarse_levels; ++j) {
            const int r = static_cast<int>(
                std::lround(static_cast<double>(j) * top / static_cast<double>(coarse_levels - 1)));
            if (q.representatives.empty() || q.representatives.back() != r) q.representatives.push_back(r);
        }
    }
    return q;
}

FiniteMdp build_quantized_env(const EnvSpec& spec, const std::vector<Quantizer>& per_ue) {
    validate_spec(spec);
    if (static_cast<int>(per_ue.size()) != spec.n_ues)
        throw Error(ErrorCode::InvalidInput, "one quantizer per UE is required");
    const WirelessLayout layout(spec);
    const int S = layout.n_states();
    const int A = layout.n_actions();
    const int K = spec.n_ues;
    const int top = spec.backlog_levels - 1;
    const auto w = normalized_weights(spec);

    // Largest achievable weighted throughput; it occurs with every queue full.
    double norm = 0.0;
    for (int a = 0; a < A; ++a) {
        double full = 0.0;
        for (int i = 0; i < K; ++i) {
            const auto u = static_cast<std::size_t>(i);
            full += w[u] * std::min(top, layout.allocation(a)[u] * spec.capacity_per_block);
        }
        norm = std::max(norm, full);
    }

    std::vector<std::vector<Outcome>> arrival(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) arrival[static_cast<std::size_t>(i)] = arrivals(spec.arrival_profiles[static_cast<std::size_t>(i)]);

    std::vector<double> transitions(static_cast<std::size_t>(S) * A * S, 0.0);
    std::vector<double> rewards(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<int> served(static_cast<std::size_t>(K)), next(static_cast<std::size_t>(K));
    std::vector<int> pick(static_cast<std::size_t>(K));

    for (int s = 0; s < S; ++s) {
        auto b = layout.backlogs(s);
        for (int i = 0; i < K; ++i) b[static_cast<std::size_t>(i)] = per_ue[static_cast<std::size_t>(i)].apply(b[static_cast<std::size_t>(i)]);
        for (int a = 0; a < A; ++a) {
            const auto& alloc = layout.allocation(a);
            double r = 0.0;
            for (int i = 0; i < K; ++i) {
                const auto u = static_cast<std::size_t>(i);
                served[u] = std::min(b[u], alloc[u] * spec.capacity_per_block);
                r += w[u] * served[u];
            }
            rewards[static_cast<std::size_t>(s) * A + a] = std::min(1.0, r / norm);

            double* row = transitions.data() + (static_cast<std::size_t>(s) * A + a) * S;
            std::fill(pick.begin(), pick.end(), 0);
            while (true) {
                double p = 1.0;
                for (int i = 0; i < K; ++i) {
                    const auto u = static_cast<std::size_t>(i);
                    const auto& o = arrival[u][static_cast<std::size_t>(pick[u])];
                    p *= o.probability;
                    next[u] = per_ue[u].apply(std::clamp(b[u] - served[u] + o.units, 0, top));
                }
                row[layout.state_index(next)] += p;
                int i = 0;
                while (i < K && ++pick[static_cast<std::size_t>(i)] ==
                                    static_cast<int>(arrival[static_cast<std::size_t>(i)].size())) {
                    pick[static_cast<std::size_t>(i)] = 0;
                    ++i;
                }
                if (i == K) break;
            }
        }
    }

    FiniteMdp mdp(S, A, std::move(transitions), std::move(rewards), spec.gamma);
    for (int s = 0; s < S; ++s) mdp.state_labels.push_back("backlog=" + tuple_label(layout.backlogs(s)));
    for (int a = 0; a < A; ++a) mdp.action_labels.push_back("blocks=" + tuple_label(layout.allocation(a)));
    return mdp;
}

FiniteMdp build_real_env(const EnvSpec& spec) {
    std::vector<Quantizer> exact(static_cast<std::size_t>(spec.n_ues),
                                 Quantizer::identity(spec.backlog_levels));
    return build_quantized_env(spec, exact);
}

std::string family_name(Family f) {
    switch (f) {
        case Family::Empirical: return "empirical";
        case Family::Smoothing: return "smoothing";
        case Family::RewardNoise: return "reward_noise";
        case Family::Granularity: return "granularity";
    }
    return "unknown";
}

std::string Recipe::params_text() const {
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [k, v] : params) {
        os << (first ? "" : ";") << k << '=' << v;
        first = false;
    }
    return os.str();
}

namespace {

FiniteMdp with_labels(FiniteMdp mdp, const FiniteMdp& like) {
    mdp.state_labels = like.state_labels;
    mdp.action_labels = like.action_labels;
    return mdp;
}

// Per-UE coarsening options, deduplicated by their effect on 0..levels-1.
std::vector<Quantizer> coarsening_options(int levels) {
    std::vector<Quantizer> opts{Quantizer::identity(levels)};
    auto image = [levels](const Quantizer& q) {
        std::vector<int> out;
        for (int b = 0; b < levels; ++b) out.push_back(q.apply(b));
        return out;
    };
    std::vector<std::vector<int>> seen{image(opts.front())};
    for (int coarse = levels - 1; coarse >= 1; --coarse)
        for (bool up : {false, true}) {
            const auto q = Quantizer::coarse(levels, coarse, up);
            const auto im = image(q);
            if (std::find(seen.begin(), seen.end(), im) != seen.end()) continue;
            seen.push_back(im);
            opts.push_back(q);
        }
    return opts;
}

double spread(double lo, double hi, int k, int count) {
    if (count <= 1) return lo;
    return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
}

}  // namespace

FiniteMdp smooth_transitions(const FiniteMdp& mdp, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw Error(ErrorCode::InvalidInput, "lambda must lie in [0,1]");
    std::vector<double> t = mdp.transitions();
    if (lambda > 0.0) {
        const double u = 1.0 / static_cast<double>(mdp.n_states());
        for (double& p : t) p = (1.0 - lambda) * p + lambda * u;
    }
    return with_labels(FiniteMdp(mdp.n_states(), mdp.n_actions(), std::move(t), mdp.rewards(), mdp.gamma()), mdp);
}

FiniteMdp perturb_rewards(const FiniteMdp& mdp, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidInput, "sigma must be nonnegative");
    std::vector<double> r = mdp.rewards();
    RngState rng{seed};
    for (double& x : r) x = std::clamp(x + sigma * rng.normal(), 0.0, 1.0);
    return with_labels(FiniteMdp(mdp.n_states(), mdp.n_actions(), mdp.transitions(), std::move(r), mdp.gamma()), mdp);
}

std::vector<CandidateDT> generate_candidates(const FiniteMdp& real, const EnvSpec& spec,
                                             int n_candidates, std::uint64_t seed,
                                             const PoolOptions& options) {
    if (n_candidates < 1) throw Error(ErrorCode::InvalidInput, "n_candidates must be at least 1");
    validate_spec(spec);
    const WirelessLayout layout(spec);
    if (layout.n_states() != real.n_states() || layout.n_actions() != real.n_actions())
        throw Error(ErrorCode::ShapeMismatch, "real MDP does not match the environment spec");

    constexpr Family order[] = {Family::Smoothing, Family::Empirical, Family::RewardNoise,
                                Family::Granularity};
    int block[4];
    for (int f = 0; f < 4; ++f) block[f] = n_candidates / 4 + (f < n_candidates % 4 ? 1 : 0);

    const auto options_per_ue = coarsening_options(spec.backlog_levels);
    std::uint64_t combos = 1;
    for (int i = 0; i < spec.n_ues; ++i) combos *= options_per_ue.size();

    constexpr std::int64_t kSizes[] = {100, 1000, 10000, 100000};

    std::vector<CandidateDT> pool;
    pool.reserve(static_cast<std::size_t>(n_candidates));
    int id = 0;
    for (int f = 0; f < 4; ++f) {
        const int count = block[f];
        for (int k = 0; k < count; ++k, ++id) {
            CandidateDT c;
            c.id = id;
            c.recipe.family = order[f];
            c.seed = split_seed(seed, family_name(order[f]), static_cast<std::uint64_t>(k));
            switch (order[f]) {
                case Family::Smoothing: {
                    const double lambda = k == 0 ? 0.0 : spread(0.05, 0.8, k - 1, count - 1);
                    c.recipe.params["lambda"] = lambda;
                    c.mdp = smooth_transitions(real, lambda);
                    break;
                }
                case Family::Empirical: {
                    const std::int64_t n = kSizes[k % 4];
                    c.recipe.params["n_steps"] = static_cast<double>(n);
                    c.recipe.params["kappa"] = options.kappa;
                    const auto batch = sample_trajectories(real, std::nullopt, n, options.episode_length, c.seed);
                    c.mdp = with_labels(estimate_mdp(batch, real.n_states(), real.n_actions(), real.gamma(), options.kappa), real);
                    break;
                }
                case Family::RewardNoise: {
                    const double sigma = spread(0.02, 0.5, k, count);
                    c.recipe.params["sigma"] = sigma;
                    c.mdp = perturb_rewards(real, sigma, c.seed);
                    break;
                }
                case Family::Granularity: {
                    // Spread the pick over every non-identity combination.
                    const std::uint64_t span = combos - 1;
                    std::uint64_t combo = count > 1 ? 1 + (static_cast<std::uint64_t>(k) * span) / static_cast<std::uint64_t>(count)
                                                    : 1;
                    if (span == 0) combo = 0;
                    combo = combo % combos;
                    c.recipe.params["combo"] = static_cast<double>(combo);
                    std::vector<Quantizer> qs;
                    std::uint64_t rest = combo;
                    for (int i = 0; i < spec.n_ues; ++i) {
                        const auto& q = options_per_ue[rest % options_per_ue.size()];
                        rest /= options_per_ue.size();
                        qs.push_back(q);
                        c.recipe.params["levels_" + std::to_string(i)] = static_cast<double>(q.representatives.size());
                        c.recipe.params["round_up_" + std::to_string(i)] = q.round_up ? 1.0 : 0.0;
                    }
                    c.mdp = build_quantized_env(spec, qs);
                    break;
                }
            }
            pool.push_back(std::move(c));
        }
    }
    return pool;
}

}  // namespace dtbsm
