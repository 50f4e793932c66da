#pragma once

#include "gae/common.hpp"
#include "gae/env.hpp"
#include "gae/policy.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gae::oracle {

struct SingularSystemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnumerationTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Refuse to enumerate when (n_actions * n_states)^horizon exceeds this.
inline constexpr double kMaxEnumeratedPaths = 1e7;

// A discrete-action policy evaluated at every state of a tabular MDP.
// features.row(s) is the policy input for state s (one-hot by default).
struct TabularPolicy {
  const policy::StochasticPolicy* pi = nullptr;
  Vec theta;
  Mat features;
  Mat probs;                              // [s][a]
  std::vector<std::vector<Vec>> scores;   // [s][a] = grad log pi(a|s)

  long param_count() const { return theta.size(); }
};

TabularPolicy bind(const policy::StochasticPolicy& pi, const Vec& theta, const Mat& features, int n_actions);
TabularPolicy bind_one_hot(const policy::StochasticPolicy& pi, const Vec& theta, const env::TabularMdp& mdp);

struct TabularSolution {
  Vec v;    // per state
  Mat q;    // [s][a]
  Mat adv;  // q - v
  double gamma = 0.0;
};

// Policy-averaged transition matrix and expected one-step reward.
Mat policy_transition(const env::TabularMdp& mdp, const Mat& probs);
Vec policy_reward(const env::TabularMdp& mdp, const Mat& probs);

// Spectral radius of the transient (non-terminal) block of P_pi is < 1.
bool is_absorbing(const env::TabularMdp& mdp, const Mat& probs);

// Solves V = R_pi + gamma P_pi V with V = 0 on terminal states. gamma = 1 is
// accepted only for absorbing MDPs; otherwise SingularSystemError.
TabularSolution solve_values(const env::TabularMdp& mdp, const Mat& probs, double gamma);

enum class EstimatorTag {
  total_reward,
  reward_to_go,
  baselined_reward_to_go,
  q_value,
  advantage,
  td_residual,
  k_step,
  gae,
  discounted_return,
  shaped_sum,
};

// Advantage estimator A_t. Estimators that need a value function or potential
// take it from the value_fn argument of the functions below.
struct EstimatorKind {
  EstimatorTag tag = EstimatorTag::advantage;
  int k = 1;          // k_step
  double lam = 1.0;   // gae, shaped_sum

  static EstimatorKind of(EstimatorTag tag) { return {tag, 1, 1.0}; }
  static EstimatorKind k_step(int k) { return {EstimatorTag::k_step, k, 1.0}; }
  static EstimatorKind gae(double lam) { return {EstimatorTag::gae, 1, lam}; }
  static EstimatorKind shaped_sum(double lam) { return {EstimatorTag::shaped_sum, 1, lam}; }

  void validate() const;
  std::string name() const;
};

// b_t(s_{0:t}, a_{0:t-1}): anything computed from the history before a_t.
using HistoryBaseline = std::function<double(std::span<const int> states, std::span<const int> actions)>;

struct ExactMoments {
  Vec mean;                    // E[sum_t A_t grad log pi(a_t|s_t)]
  double variance_trace = 0.0; // E||X||^2 - ||E X||^2
  long paths = 0;
};

// Exact expectation of the score-weighted estimator, by enumerating every
// trajectory up to `horizon` steps with its probability.
ExactMoments exact_estimator_moments(const env::TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                     const Vec& value_fn, double gamma, int horizon,
                                     const HistoryBaseline& baseline = {});

Vec exact_estimator_expectation(const env::TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                const Vec& value_fn, double gamma, int horizon,
                                const HistoryBaseline& baseline = {});

// g^gamma = E[sum_t A^{pi,gamma}(s_t,a_t) grad log pi(a_t|s_t)], by enumeration.
Vec exact_policy_gradient(const env::TabularMdp& mdp, const TabularPolicy& tp, double gamma, int horizon);

// E[sum_t gamma^t r_t] by enumeration.
double expected_return(const env::TabularMdp& mdp, const TabularPolicy& tp, double gamma, int horizon);

struct Certification {
  bool certified = false;
  double gap = 0.0;  // ||E[estimator] - g^gamma||_2
};

Certification certify_gamma_just(const env::TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                 const Vec& value_fn, double gamma, int horizon, double tol,
                                 const HistoryBaseline& baseline = {});

// chi(l; s, a) = E[r_l | s_0 = s, a_0 = a] - E[r_l | s_0 = s], l = 0..max_l.
std::vector<double> response_function(const env::TabularMdp& mdp, const Mat& probs, int s, int a, int max_l);

// Reward shaping with potential phi; phi is treated as 0 on terminal states.
env::TabularMdp shape_mdp(const env::TabularMdp& mdp, const Vec& phi, double gamma);

// Expected number of visits to each non-terminal state over the first
// `horizon` steps, starting from the initial distribution.
Vec expected_visits(const env::TabularMdp& mdp, const Mat& probs, int horizon);

// Visit-weighted Fisher matrix sum_s d(s) sum_a pi(a|s) psi psi^T and the
// matching exact gradient sum_s d(s) sum_a pi(a|s) A(s,a) psi.
Mat dense_fisher(const TabularPolicy& tp, const Vec& state_weights);
Vec weighted_gradient(const TabularPolicy& tp, const Vec& state_weights, const Mat& adv);

// Minimum-norm F^+ g through a symmetric eigendecomposition.
Vec pseudo_inverse_solve(const Mat& f, const Vec& g, double rel_tol = 1e-10);

struct CompatibleFit {
  Vec r;
  long rank = 0;
  bool rank_deficient = false;  // the minimum-norm solution was used
};

// argmin_r sum_i w_i (r . psi_i - A_i)^2; minimum-norm when the weighted
// design matrix is rank deficient.
CompatibleFit compatible_features_natural_gradient(std::span<const Vec> scores, std::span<const double> advantages,
                                                   std::span<const double> weights = {});

// Same fit over every (state, action) pair of a tabular problem, weighted by
// d(s) pi(a|s), with targets adv[s][a].
CompatibleFit compatible_features_enumerated(const TabularPolicy& tp, const Vec& state_weights, const Mat& adv);

// Random acyclic MDP: state n_states-1 is terminal and every transition moves
// to a higher-numbered state, so all episodes end within n_states-1 steps.
env::TabularMdp random_absorbing_mdp(Rng& rng, int n_states, int n_actions);
// Random MDP with cycles and no terminal states (use with gamma < 1).
env::TabularMdp random_recurrent_mdp(Rng& rng, int n_states, int n_actions);

// Small acyclic MDP where the first action changes which of two middle states
// is visited, so an error in V at one of them biases the TD-residual gradient.
env::TabularMdp bias_exposure_mdp();

}  // namespace gae::oracle
