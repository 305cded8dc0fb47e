#include "dtbsm/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dtbsm {

FiniteMdp::FiniteMdp(int n_states, int n_actions, std::vector<double> transitions,
                     std::vector<double> rewards, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      transitions_(std::move(transitions)),
      rewards_(std::move(rewards)),
      gamma_(gamma) {
    if (n_states <= 0 || n_actions <= 0)
        throw Error(ErrorCode::InvalidInput, "n_states and n_actions must be positive");
    const auto sa = static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions);
    if (rewards_.size() != sa)
        throw Error(ErrorCode::ShapeMismatch, "reward matrix must have n_states*n_actions entries");
    if (transitions_.size() != sa * static_cast<std::size_t>(n_states))
        throw Error(ErrorCode::ShapeMismatch,
                    "transition tensor must have n_states*n_actions*n_states entries");
}

std::vector<Violation> validate(const FiniteMdp& mdp) {
    std::vector<Violation> out;
    if (!(mdp.gamma() > 0.0 && mdp.gamma() < 1.0)) {
        std::ostringstream msg;
        msg << "gamma " << mdp.gamma() << " outside (0,1)";
        out.push_back({"gamma", -1, -1, msg.str()});
    }
    for (int s = 0; s < mdp.n_states(); ++s) {
        for (int a = 0; a < mdp.n_actions(); ++a) {
            const double r = mdp.reward(s, a);
            if (!(r >= 0.0 && r <= 1.0)) {
                std::ostringstream msg;
                msg << "reward out of [0,1] at (" << s << "," << a << "): " << r;
                out.push_back({"reward_range", s, a, msg.str()});
            }
            double sum = 0.0;
            bool negative = false;
            for (double p : mdp.row(s, a)) {
                if (!(p >= 0.0)) negative = true;
                sum += p;
            }
            if (negative) {
                std::ostringstream msg;
                msg << "negative or NaN probability at (" << s << "," << a << ")";
                out.push_back({"probability_nonnegative", s, a, msg.str()});
            }
            if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "transition row (" << s << "," << a << ") sums to " << sum;
                out.push_back({"row_sum", s, a, msg.str()});
            }
        }
    }
    return out;
}

void require_valid(const FiniteMdp& mdp) {
    const auto violations = validate(mdp);
    if (!violations.empty()) throw Error(ErrorCode::InvalidInput, violations.front().message);
}

Policy Policy::deterministic(std::vector<int> actions) {
    Policy p;
    p.kind_ = Kind::Deterministic;
    p.actions_ = std::move(actions);
    return p;
}

Policy Policy::stochastic(Matrix probabilities) {
    for (std::size_t s = 0; s < probabilities.rows(); ++s) {
        double sum = 0.0;
        for (double x : probabilities.row(s)) {
            if (!(x >= 0.0)) throw Error(ErrorCode::InvalidInput, "negative action probability");
            sum += x;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            throw Error(ErrorCode::InvalidInput, "action distribution does not sum to 1");
    }
    Policy p;
    p.kind_ = Kind::Stochastic;
    p.probabilities_ = std::move(probabilities);
    return p;
}

Policy Policy::constant(int n_states, int action) {
    return deterministic(std::vector<int>(static_cast<std::size_t>(n_states), action));
}

int Policy::n_states() const noexcept {
    return kind_ == Kind::Deterministic ? static_cast<int>(actions_.size())
                                        : static_cast<int>(probabilities_.rows());
}

int Policy::action(int s) const {
    if (kind_ != Kind::Deterministic)
        throw Error(ErrorCode::InvalidInput, "action() requires a deterministic policy");
    return actions_.at(static_cast<std::size_t>(s));
}

double Policy::probability(int s, int a) const {
    if (kind_ == Kind::Deterministic) return actions_.at(static_cast<std::size_t>(s)) == a ? 1.0 : 0.0;
    return probabilities_(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
}

double ValueFunction::weighted(std::span<const double> rho) const {
    if (rho.size() != values.size())
        throw Error(ErrorCode::ShapeMismatch, "distribution and value function differ in size");
    double total = 0.0;
    for (std::size_t s = 0; s < values.size(); ++s) total += rho[s] * values[s];
    return total;
}

namespace {

double q_value(const FiniteMdp& mdp, std::span<const double> v, int s, int a) {
    const auto row = mdp.row(s, a);
    double expected = 0.0;
    for (std::size_t n = 0; n < row.size(); ++n) expected += row[n] * v[n];
    return mdp.reward(s, a) + mdp.gamma() * expected;
}

void check_policy(const FiniteMdp& mdp, const Policy& policy) {
    if (policy.n_states() != mdp.n_states())
        throw Error(ErrorCode::ShapeMismatch, "policy does not cover every state");
    if (policy.kind() == Policy::Kind::Deterministic) {
        for (int a : policy.actions())
            if (a < 0 || a >= mdp.n_actions())
                throw Error(ErrorCode::IndexOutOfRange, "policy action out of range");
    } else if (static_cast<int>(policy.probabilities().cols()) != mdp.n_actions()) {
        throw Error(ErrorCode::ShapeMismatch, "stochastic policy has wrong action count");
    }
}

}  // namespace

Policy greedy_policy(const FiniteMdp& mdp, std::span<const double> values) {
    std::vector<int> actions(static_cast<std::size_t>(mdp.n_states()), 0);
    for (int s = 0; s < mdp.n_states(); ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < mdp.n_actions(); ++a) {
            const double q = q_value(mdp, values, s, a);
            if (q > best) {
                best = q;
                actions[static_cast<std::size_t>(s)] = a;
            }
        }
    }
    return Policy::deterministic(std::move(actions));
}

PlanningResult value_iteration(const FiniteMdp& mdp, double tol, int max_iter) {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidInput, "tol must be positive");
    const auto n = static_cast<std::size_t>(mdp.n_states());
    std::vector<double> v(n, 0.0), next(n, 0.0);
    PlanningResult result;
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < max_iter) {
        residual = 0.0;
        for (int s = 0; s < mdp.n_states(); ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < mdp.n_actions(); ++a) best = std::max(best, q_value(mdp, v, s, a));
            next[static_cast<std::size_t>(s)] = best;
            residual = std::max(residual, std::abs(best - v[static_cast<std::size_t>(s)]));
        }
        ++it;
        result.residuals.push_back(residual);
        if (residual <= tol) {
            // ||T v - v|| <= tol certifies v itself; keep v, not T v, so the
            // returned pair (V, residual) is consistent.
            break;
        }
        v.swap(next);
    }
    result.converged = residual <= tol;
    result.iterations = it;
    result.residual = residual;
    result.policy = greedy_policy(mdp, v);
    result.value.values = std::move(v);
    return result;
}

EvaluationResult policy_evaluation(const FiniteMdp& mdp, const Policy& policy, double tol,
                                   int max_iter) {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidInput, "tol must be positive");
    check_policy(mdp, policy);
    const auto n = static_cast<std::size_t>(mdp.n_states());
    std::vector<double> v(n, 0.0), next(n, 0.0);
    EvaluationResult result;
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    const bool det = policy.kind() == Policy::Kind::Deterministic;
    while (it < max_iter) {
        residual = 0.0;
        for (int s = 0; s < mdp.n_states(); ++s) {
            double value = 0.0;
            if (det) {
                value = q_value(mdp, v, s, policy.action(s));
            } else {
                for (int a = 0; a < mdp.n_actions(); ++a) {
                    const double w = policy.probability(s, a);
                    if (w != 0.0) value += w * q_value(mdp, v, s, a);
                }
            }
            next[static_cast<std::size_t>(s)] = value;
            residual = std::max(residual, std::abs(value - v[static_cast<std::size_t>(s)]));
        }
        ++it;
        if (residual <= tol) break;
        v.swap(next);
    }
    result.converged = residual <= tol;
    result.iterations = it;
    result.residual = residual;
    result.value.values = std::move(v);
    return result;
}

std::vector<double> uniform_distribution(int n) {
    return std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
}

SuboptimalityResult suboptimality(const FiniteMdp& mdp, const Policy& policy,
                                  std::span<const double> rho, double tol) {
    if (static_cast<int>(rho.size()) != mdp.n_states())
        throw Error(ErrorCode::ShapeMismatch, "rho must cover every state");
    double mass = 0.0;
    for (double x : rho) mass += x;
    if (std::abs(mass - 1.0) > kRowSumTolerance)
        throw Error(ErrorCode::InvalidInput, "rho must sum to 1");

    const auto planned = value_iteration(mdp, tol);
    const auto optimal = policy_evaluation(mdp, planned.policy, tol);
    const auto evaluated = policy == planned.policy ? optimal : policy_evaluation(mdp, policy, tol);

    SuboptimalityResult out;
    out.optimal_value = optimal.value.weighted(rho);
    out.policy_value = evaluated.value.weighted(rho);
    out.gap = out.optimal_value - out.policy_value;
    if (out.gap < 0.0 && out.gap >= -2.0 * tol) out.gap = 0.0;
    out.converged = planned.converged && optimal.converged && evaluated.converged;
    return out;
}

int sample_index(std::span<const double> probabilities, double u) {
    double cumulative = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) continue;
        cumulative += probabilities[i];
        last_positive = static_cast<int>(i);
        if (u < cumulative) return last_positive;
    }
    if (last_positive < 0) throw Error(ErrorCode::InvalidInput, "distribution has no mass");
    return last_positive;
}

StepResult step(const FiniteMdp& mdp, int s, int a, RngState rng) {
    if (s < 0 || s >= mdp.n_states() || a < 0 || a >= mdp.n_actions())
        throw Error(ErrorCode::IndexOutOfRange, "state or action out of range");
    StepResult out;
    const double u = rng.uniform();
    out.next_state = sample_index(mdp.row(s, a), u);
    out.reward = mdp.reward(s, a);
    out.rng = rng;
    return out;
}

QLearningResult q_learning(const FiniteMdp& mdp, const QLearningParams& params,
                           std::span<const double> rho) {
    if (params.episodes < 0 || params.horizon < 1)
        throw Error(ErrorCode::InvalidInput, "episodes must be >= 0 and horizon >= 1");
    if (!(params.lr0 > 0.0 && params.lr0 <= 1.0) || params.lr_decay < 0.0)
        throw Error(ErrorCode::InvalidInput, "invalid learning-rate schedule");
    if (params.epsilon_start < 0.0 || params.epsilon_start > 1.0 || params.epsilon_end < 0.0 ||
        params.epsilon_end > 1.0)
        throw Error(ErrorCode::InvalidInput, "exploration rates must lie in [0,1]");
    if (static_cast<int>(rho.size()) != mdp.n_states())
        throw Error(ErrorCode::ShapeMismatch, "rho must cover every state");

    const auto S = static_cast<std::size_t>(mdp.n_states());
    const auto A = static_cast<std::size_t>(mdp.n_actions());
    Matrix q(S, A, 0.0);
    std::vector<std::uint32_t> visits(S * A, 0);
    RngState rng{params.seed};

    auto greedy = [&](int s) {
        const auto row = q.row(static_cast<std::size_t>(s));
        return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    };

    for (int ep = 0; ep < params.episodes; ++ep) {
        const double frac = params.episodes > 1
                                ? static_cast<double>(ep) / static_cast<double>(params.episodes - 1)
                                : 0.0;
        const double epsilon =
            params.epsilon_start + (params.epsilon_end - params.epsilon_start) * frac;
        int s = sample_index(rho, rng.uniform());
        for (int t = 0; t < params.horizon; ++t) {
            int a = 0;
            if (rng.uniform() < epsilon)
                a = static_cast<int>(rng.below(A));
            else
                a = greedy(s);
            const StepResult st = step(mdp, s, a, rng);
            rng = st.rng;
            const std::size_t cell = static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a);
            const double lr =
                params.lr0 / std::pow(1.0 + static_cast<double>(visits[cell]), params.lr_decay);
            ++visits[cell];
            const auto next_row = q.row(static_cast<std::size_t>(st.next_state));
            const double target =
                st.reward + mdp.gamma() * *std::max_element(next_row.begin(), next_row.end());
            double& entry = q(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
            entry += lr * (target - entry);
            s = st.next_state;
        }
    }

    QLearningResult out;
    std::vector<int> actions(S, 0);
    double estimate = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        actions[s] = greedy(static_cast<int>(s));
        estimate += rho[s] * q(s, static_cast<std::size_t>(actions[s]));
    }
    out.policy = Policy::deterministic(std::move(actions));
    out.q = std::move(q);
    out.return_estimate = estimate;
    return out;
}

}  // namespace dtbsm
