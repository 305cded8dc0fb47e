#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtbsm/common.hpp"
#include "dtbsm/rng.hpp"

namespace dtbsm {

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kDefaultGamma = 0.9;
inline constexpr double kPlanningTolerance = 1e-8;

/**
 * Tabular discounted MDP. Transitions are stored densely as
 * [state][action][next_state], rewards as [state][action].
 *
 * Construction only checks shapes; use validate() for the probabilistic
 * invariants (row sums, reward range, discount range). Instances are never
 * mutated after construction and can be shared read-only between threads.
 */
class FiniteMdp {
public:
    FiniteMdp() = default;
    FiniteMdp(int n_states, int n_actions, std::vector<double> transitions,
              std::vector<double> rewards, double gamma);

    int n_states() const noexcept { return n_states_; }
    int n_actions() const noexcept { return n_actions_; }
    double gamma() const noexcept { return gamma_; }

    double reward(int s, int a) const { return rewards_[index(s, a)]; }
    double transition(int s, int a, int next) const {
        return transitions_[index(s, a) * n_states_ + next];
    }
    /// Next-state distribution for (s, a).
    std::span<const double> row(int s, int a) const {
        return {transitions_.data() + index(s, a) * n_states_,
                static_cast<std::size_t>(n_states_)};
    }

    const std::vector<double>& transitions() const noexcept { return transitions_; }
    const std::vector<double>& rewards() const noexcept { return rewards_; }

    std::vector<std::string> state_labels;
    std::vector<std::string> action_labels;

    bool same_model(const FiniteMdp& other) const noexcept {
        return n_states_ == other.n_states_ && n_actions_ == other.n_actions_ &&
               gamma_ == other.gamma_ && transitions_ == other.transitions_ &&
               rewards_ == other.rewards_;
    }

private:
    std::size_t index(int s, int a) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_) +
               static_cast<std::size_t>(a);
    }

    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> transitions_;
    std::vector<double> rewards_;
    double gamma_ = kDefaultGamma;
};

struct Violation {
    std::string rule;
    int state = -1;
    int action = -1;
    std::string message;
};

/// Lists every broken FiniteMdp invariant; empty iff the model is valid.
std::vector<Violation> validate(const FiniteMdp& mdp);

/// Throws Error(InvalidInput) with the first violation, if any.
void require_valid(const FiniteMdp& mdp);

class Policy {
public:
    enum class Kind { Deterministic, Stochastic };

    static Policy deterministic(std::vector<int> actions);
    /// Rows are action distributions, one per state.
    static Policy stochastic(Matrix probabilities);
    /// Action 0 in every state.
    static Policy constant(int n_states, int action = 0);

    Kind kind() const noexcept { return kind_; }
    int n_states() const noexcept;
    /// Deterministic policies only.
    int action(int s) const;
    double probability(int s, int a) const;
    const std::vector<int>& actions() const noexcept { return actions_; }
    const Matrix& probabilities() const noexcept { return probabilities_; }

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    Kind kind_ = Kind::Deterministic;
    std::vector<int> actions_;
    Matrix probabilities_;
};

struct ValueFunction {
    std::vector<double> values;

    double weighted(std::span<const double> rho) const;
};

struct PlanningResult {
    ValueFunction value;
    Policy policy;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    /// Sup-norm Bellman residual after every sweep.
    std::vector<double> residuals;
};

/// Value iteration from V = 0 until ||T V - V||_inf <= tol. The returned
/// policy is greedy with respect to the returned V, lowest action index on ties.
PlanningResult value_iteration(const FiniteMdp& mdp, double tol = kPlanningTolerance,
                               int max_iter = 100000);

/// Greedy policy with respect to V; ties go to the lowest action index.
Policy greedy_policy(const FiniteMdp& mdp, std::span<const double> values);

struct EvaluationResult {
    ValueFunction value;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Iterative evaluation from V = 0 until ||V - (R^pi + gamma P^pi V)||_inf <= tol.
EvaluationResult policy_evaluation(const FiniteMdp& mdp, const Policy& policy,
                                   double tol = kPlanningTolerance, int max_iter = 100000);

struct SuboptimalityResult {
    double gap = 0.0;
    /// rho-weighted value of the optimal policy and of the evaluated policy.
    double optimal_value = 0.0;
    double policy_value = 0.0;
    bool converged = true;
};

/**
 * sum_s rho(s) (V*(s) - V^pi(s)).
 *
 * V* is obtained by evaluating the greedy policy of value iteration with the
 * same evaluation routine used for pi, so pi == pi* gives exactly zero.
 * Slightly negative results (within 2 tol) are clamped to 0.
 */
SuboptimalityResult suboptimality(const FiniteMdp& mdp, const Policy& policy,
                                  std::span<const double> rho,
                                  double tol = kPlanningTolerance);

/// Uniform distribution over n states.
std::vector<double> uniform_distribution(int n);

struct StepResult {
    double reward = 0.0;
    int next_state = 0;
    RngState rng;
};

/// Samples one transition by inverse CDF over increasing next-state index
/// using a single uniform draw.
StepResult step(const FiniteMdp& mdp, int s, int a, RngState rng);

/// Inverse-CDF draw from a discrete distribution (falls back to the last
/// index with positive mass when rounding leaves u above the total).
int sample_index(std::span<const double> probabilities, double u);

struct QLearningParams {
    int episodes = 1000;
    int horizon = 50;
    /// Learning rate lr0 / (1 + n(s,a))^lr_decay, n = prior visits of (s,a).
    double lr0 = 1.0;
    double lr_decay = 0.6;
    /// Epsilon-greedy exploration decaying linearly across episodes.
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::uint64_t seed = 0;
};

struct QLearningResult {
    Policy policy;
    Matrix q;
    /// rho-weighted max_a Q(s, a).
    double return_estimate = 0.0;
};

/// Tabular Q-learning with the MDP used purely as a simulator. Episodes start
/// from rho and are truncated (not terminated) after `horizon` steps.
QLearningResult q_learning(const FiniteMdp& mdp, const QLearningParams& params,
                           std::span<const double> rho);

}  // namespace dtbsm
