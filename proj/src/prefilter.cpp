#include "dtbsm/prefilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "dtbsm/parallel.hpp"
#include "dtbsm/rng.hpp"

namespace dtbsm {

std::vector<TrainerConfig> mixed_trainers(std::span<const CandidateDT> candidates,
                                          const QLearningParams& q_params) {
    std::vector<TrainerConfig> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        TrainerConfig t;
        if ((c.id / 2) % 2 == 0) {
            t.kind = TrainerKind::QLearning;
            t.q_learning = q_params;
        }
        out.push_back(t);
    }
    return out;
}

std::vector<double> compute_pool_mismatch(const FiniteMdp& real,
                                          std::span<const CandidateDT> candidates,
                                          const BsmOptions& bsm, int threads, bool* all_converged) {
    std::vector<double> scores(candidates.size(), 0.0);
    std::vector<char> converged(candidates.size(), 1);
    parallel_for(candidates.size(), threads, [&](std::size_t k, int) {
        const auto metric = compute_dt_bsm(real, candidates[k].mdp, bsm);
        converged[k] = metric.converged ? 1 : 0;
        scores[k] = scalarize(metric, ScalarMode::WorstCase).scalar_max;
    });
    if (all_converged)
        *all_converged = std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
    return scores;
}

Experiment run_experiment(const FiniteMdp& real, std::span<const CandidateDT> candidates,
                          std::span<const TrainerConfig> trainers, const ExperimentOptions& options,
                          std::optional<std::vector<double>> mismatch) {
    if (candidates.empty()) throw Error(ErrorCode::EmptyPool, "no candidates to evaluate");
    if (trainers.size() != 1 && trainers.size() != candidates.size())
        throw Error(ErrorCode::InvalidInput, "need one trainer config or one per candidate");
    for (const auto& c : candidates) {
        if (c.mdp.n_actions() != real.n_actions())
            throw Error(ErrorCode::ActionSpaceMismatch, "candidate action space differs from the real one");
        if (c.mdp.gamma() != real.gamma())
            throw Error(ErrorCode::DiscountMismatch, "candidate discount differs from the real one");
        if (c.mdp.n_states() != real.n_states())
            throw Error(ErrorCode::ShapeMismatch, "candidate state space differs from the real one");
    }
    const std::vector<double> rho =
        options.rho.empty() ? uniform_distribution(real.n_states()) : options.rho;

    Experiment exp;
    const auto planned = value_iteration(real, options.tol);
    const auto optimal = policy_evaluation(real, planned.policy, options.tol);
    exp.v_star_rho = optimal.value.weighted(rho);
    exp.converged = planned.converged && optimal.converged;

    bool bsm_converged = true;
    std::vector<double> scores =
        mismatch ? std::move(*mismatch)
                 : compute_pool_mismatch(real, candidates, options.bsm, options.threads, &bsm_converged);
    if (scores.size() != candidates.size())
        throw Error(ErrorCode::ShapeMismatch, "one mismatch score per candidate is required");
    exp.converged = exp.converged && bsm_converged;

    exp.runs.resize(candidates.size());
    std::vector<char> converged(candidates.size(), 1);
    parallel_for(candidates.size(), options.threads, [&](std::size_t k, int) {
        const auto& cand = candidates[k];
        const auto& trainer = trainers.size() == 1 ? trainers[0] : trainers[k];
        ExperimentRun run;
        run.candidate_id = cand.id;
        run.family = family_name(cand.recipe.family);
        run.params = cand.recipe.params_text();
        run.bsm_scalar = scores[k];

        Policy policy;
        bool ok = true;
        if (trainer.kind == TrainerKind::Exact) {
            const auto vi = value_iteration(cand.mdp, options.tol);
            policy = vi.policy;
            run.training_effort = vi.iterations;
            run.trainer = "exact";
            ok = vi.converged;
        } else {
            QLearningParams q = trainer.q_learning;
            q.seed = split_seed(options.seed, "q_learning", static_cast<std::uint64_t>(cand.id));
            policy = q_learning(cand.mdp, q, rho).policy;
            run.training_effort = q.episodes;
            run.trainer = "q_learning";
        }

        const auto train = suboptimality(cand.mdp, policy, rho, options.tol);
        run.train_suboptimality = train.gap;
        run.in_dt_value = train.policy_value;

        if (policy == planned.policy) {
            run.deploy_value = exp.v_star_rho;
        } else {
            const auto deployed = policy_evaluation(real, policy, options.tol);
            ok = ok && deployed.converged;
            run.deploy_value = deployed.value.weighted(rho);
        }
        run.deploy_suboptimality = exp.v_star_rho - run.deploy_value;
        if (run.deploy_suboptimality < 0.0 && run.deploy_suboptimality >= -2.0 * options.tol)
            run.deploy_suboptimality = 0.0;
        converged[k] = ok && train.converged ? 1 : 0;
        exp.runs[k] = std::move(run);
    });
    exp.converged = exp.converged &&
                    std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
    return exp;
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Evaluation: return "evaluation";
        case Strategy::Reward: return "reward";
        case Strategy::Random: return "random";
        case Strategy::BruteForce: return "brute_force";
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    if (name == "evaluation") return Strategy::Evaluation;
    if (name == "reward") return Strategy::Reward;
    if (name == "random") return Strategy::Random;
    if (name == "brute_force") return Strategy::BruteForce;
    throw Error(ErrorCode::InvalidInput, "unknown selection strategy '" + name + "'");
}

std::size_t subset_size(double ratio, std::size_t pool) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorCode::InvalidInput, "ratio must lie in (0,1]");
    const double scaled = ratio * static_cast<double>(pool);
    auto k = static_cast<std::size_t>(std::floor(scaled));
    // 0.05 * 120 and friends may land a hair below the integer.
    if (scaled - std::floor(scaled) > 1.0 - 1e-9) ++k;
    return std::clamp<std::size_t>(k, 1, pool);
}

std::vector<int> select(std::span<const ExperimentRun> runs, Strategy strategy, double ratio,
                        std::uint64_t seed) {
    if (runs.empty()) throw Error(ErrorCode::EmptyPool, "cannot select from an empty pool");
    const std::size_t k = strategy == Strategy::BruteForce ? runs.size() : subset_size(ratio, runs.size());

    std::vector<std::size_t> idx(runs.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto by_id = [&](std::size_t x, std::size_t y) { return runs[x].candidate_id < runs[y].candidate_id; };
    std::sort(idx.begin(), idx.end(), by_id);

    switch (strategy) {
        case Strategy::Evaluation:
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
                return runs[x].bsm_scalar < runs[y].bsm_scalar;
            });
            break;
        case Strategy::Reward:
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
                return runs[x].in_dt_value > runs[y].in_dt_value;
            });
            break;
        case Strategy::Random: {
            RngState rng{seed};
            for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
            break;
        }
        case Strategy::BruteForce: break;
    }
    std::vector<int> ids;
    ids.reserve(k);
    for (std::size_t i = 0; i < k; ++i) ids.push_back(runs[idx[i]].candidate_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

namespace {

std::map<int, const ExperimentRun*> index_runs(std::span<const ExperimentRun> runs) {
    std::map<int, const ExperimentRun*> out;
    for (const auto& r : runs) out[r.candidate_id] = &r;
    return out;
}

const ExperimentRun& lookup(const std::map<int, const ExperimentRun*>& index, int id) {
    const auto it = index.find(id);
    if (it == index.end())
        throw Error(ErrorCode::InvalidInput, "candidate id " + std::to_string(id) + " not in the ledger");
    return *it->second;
}

}  // namespace

CostReport cost_report(std::span<const ExperimentRun> runs, std::span<const int> subset,
                       double v_star_rho) {
    const auto index = index_runs(runs);
    CostReport report;
    report.n_trained = subset.size();
    report.n_tested = subset.size();
    const std::size_t pool = runs.size();
    report.training_cost_reduction =
        pool == 0 ? 0.0 : static_cast<double>(pool - subset.size()) / static_cast<double>(pool);

    double brute = 0.0;
    for (const auto& r : runs) brute += std::max(0.0, v_star_rho - r.deploy_value);
    report.best_deploy_value = -std::numeric_limits<double>::infinity();
    for (int id : subset) {
        const auto& r = lookup(index, id);
        report.testing_cost += std::max(0.0, v_star_rho - r.deploy_value);
        report.best_deploy_value = std::max(report.best_deploy_value, r.deploy_value);
    }
    if (subset.empty()) report.best_deploy_value = 0.0;
    report.testing_cost_reduction =
        brute > 0.0 ? std::clamp(1.0 - report.testing_cost / brute, 0.0, 1.0) : 0.0;
    return report;
}

BoundFit fit_bound(std::span<const ExperimentRun> runs, std::span<const int> fit_ids,
                   std::span<const int> holdout_ids) {
    for (int f : fit_ids)
        if (std::find(holdout_ids.begin(), holdout_ids.end(), f) != holdout_ids.end())
            throw Error(ErrorCode::InvalidInput, "fit and holdout sets overlap");
    const auto index = index_runs(runs);

    struct Constraint {
        double b, t, c;
    };
    std::vector<Constraint> active;
    for (int id : fit_ids) {
        const auto& r = lookup(index, id);
        const double c = r.deploy_suboptimality - kBoundSlack;
        if (c <= 0.0) continue;
        if (r.bsm_scalar <= 0.0 && r.train_suboptimality <= 0.0)
            throw Error(ErrorCode::Degenerate,
                        "run " + std::to_string(id) +
                            " has positive deployment gap with zero mismatch and zero training gap");
        active.push_back({std::max(0.0, r.bsm_scalar), std::max(0.0, r.train_suboptimality), c});
    }

    auto feasible = [&](double alpha, double beta) {
        for (const auto& k : active) {
            const double lhs = alpha * k.b + beta * k.t;
            if (lhs < k.c - 1e-12 * std::max(1.0, k.c)) return false;
        }
        return true;
    };

    double best_alpha = 0.0, best_beta = 0.0;
    double best_sum = active.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    auto consider = [&](double alpha, double beta) {
        if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) return;
        const double sum = alpha + beta;
        if (sum > best_sum || (sum == best_sum && alpha >= best_alpha)) return;
        if (!feasible(alpha, beta)) return;
        best_sum = sum;
        best_alpha = alpha;
        best_beta = beta;
    };
    for (std::size_t i = 0; i < active.size(); ++i) {
        const auto& p = active[i];
        if (p.b > 0.0) consider(p.c / p.b, 0.0);
        if (p.t > 0.0) consider(0.0, p.c / p.t);
        for (std::size_t j = i + 1; j < active.size(); ++j) {
            const auto& q = active[j];
            const double det = p.b * q.t - q.b * p.t;
            if (det == 0.0) continue;
            consider((p.c * q.t - q.c * p.t) / det, (p.b * q.c - q.b * p.c) / det);
        }
    }
    if (!std::isfinite(best_sum))
        throw Error(ErrorCode::Degenerate, "no nonnegative (alpha, beta) satisfies every fit run");

    BoundFit fit;
    fit.alpha = best_alpha;
    fit.beta = best_beta;
    fit.fit_runs.assign(fit_ids.begin(), fit_ids.end());
    fit.holdout_runs.assign(holdout_ids.begin(), holdout_ids.end());
    auto violates = [&](const ExperimentRun& r) {
        return r.deploy_suboptimality >
               fit.alpha * r.bsm_scalar + fit.beta * r.train_suboptimality + kBoundSlack;
    };
    // The vertex test above tolerates rounding; scale up until the exact
    // predicate holds on every fit run.
    for (int pass = 0; pass < 64; ++pass) {
        double scale = 1.0;
        for (int id : fit_ids) {
            const auto& r = lookup(index, id);
            if (!violates(r)) continue;
            const double lhs = fit.alpha * r.bsm_scalar + fit.beta * r.train_suboptimality;
            scale = std::max(scale, (r.deploy_suboptimality - kBoundSlack) / lhs);
        }
        if (scale == 1.0) break;
        scale *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon() * (pass + 1);
        fit.alpha *= scale;
        fit.beta *= scale;
    }
    for (int id : fit_ids)
        if (violates(lookup(index, id))) ++fit.fit_violations;
    std::size_t violations = 0;
    for (int id : holdout_ids)
        if (violates(lookup(index, id))) ++violations;
    fit.holdout_violation_rate =
        holdout_ids.empty() ? 0.0 : static_cast<double>(violations) / static_cast<double>(holdout_ids.size());
    return fit;
}

BoundFit fit_bound_even_odd(std::span<const ExperimentRun> runs) {
    std::vector<int> fit, holdout;
    for (const auto& r : runs) (r.candidate_id % 2 == 0 ? fit : holdout).push_back(r.candidate_id);
    return fit_bound(runs, fit, holdout);
}

std::vector<CostReport> random_selection_costs(std::span<const ExperimentRun> runs, double ratio,
                                               std::uint64_t seed, int resamples,
                                               double v_star_rho) {
    std::vector<CostReport> out;
    out.reserve(static_cast<std::size_t>(std::max(resamples, 0)));
    for (int r = 0; r < resamples; ++r) {
        const auto ids = select(runs, Strategy::Random, ratio,
                                split_seed(seed, "random_selection", static_cast<std::uint64_t>(r)));
        out.push_back(cost_report(runs, ids, v_star_rho));
    }
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw Error(ErrorCode::InvalidInput, "spearman needs two equal-length samples");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace dtbsm
