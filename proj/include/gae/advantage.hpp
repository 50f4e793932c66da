#pragma once

#include "gae/common.hpp"
#include "gae/env.hpp"
#include "gae/policy.hpp"

#include <span>
#include <vector>

namespace gae::advantage {

using Seq = std::vector<double>;

struct GaeConfig {
  double gamma = 0.99;
  double lam = 0.96;

  void validate() const;
};

// All sequence functions take rewards r_0..r_{T-1} and values V(s_0)..V(s_T).
// When `terminal` is true the episode ended in an absorbing state and V(s_T)
// is taken to be 0 whatever the caller passed; otherwise V(s_T) bootstraps
// the truncated tail.

// delta_t = r_t + gamma V(s_{t+1}) - V(s_t)
Seq td_residuals(std::span<const double> rewards, std::span<const double> values, double gamma, bool terminal);

// sum_{l<k} gamma^l delta_{t+l}, truncated at the end of the episode.
Seq k_step_advantage(std::span<const double> rewards, std::span<const double> values, double gamma, int k,
                     bool terminal);

// The same estimator in telescoped form:
// -V(s_t) + r_t + ... + gamma^{m-1} r_{t+m-1} + gamma^m V(s_{t+m}), m = min(k, T - t).
Seq k_step_advantage_telescoped(std::span<const double> rewards, std::span<const double> values, double gamma,
                                int k, bool terminal);

// GAE(gamma, lambda) by the backward recursion A_t = delta_t + gamma lambda A_{t+1}.
Seq gae(std::span<const double> rewards, std::span<const double> values, const GaeConfig& config, bool terminal);

// lam_v = 1: discounted returns (bootstrapped with V(s_T) on truncation).
// Otherwise the TD(lambda) target V(s_t) + GAE(gamma, lam_v)_t.
Seq value_targets(std::span<const double> rewards, std::span<const double> values, double gamma, double lam_v,
                  bool terminal);

// r_t + gamma Phi(s_{t+1}) - Phi(s_t), with Phi(s_T) = 0 on terminal episodes.
Seq shape_rewards(std::span<const double> rewards, std::span<const double> potentials, double gamma, bool terminal);

// y_t = sum_{l >= 0} discount^l x_{t+l}
Seq discounted_cumsum(std::span<const double> xs, double discount);

struct ProcessedTrajectory {
  env::Trajectory trajectory;
  Seq values;  // T + 1 entries; values.back() is 0 on terminal episodes
  Seq deltas;
  Seq advantages;
  Seq value_targets;
};

// Fills deltas, advantages, and value targets from V(s_0..s_T) computed by the caller.
ProcessedTrajectory process(env::Trajectory traj, Seq values, const GaeConfig& config, double lam_v = 1.0);

// Shifts all advantages in the batch to mean 0 and scales them to std 1.
// Leaves the batch untouched when the std is zero.
void standardize_advantages(std::vector<ProcessedTrajectory>& batch);

struct GradientReport {
  Vec gradient;
  double norm = 0.0;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  long timesteps = 0;
};

// g = (1/N) sum_n sum_t A_t^n grad log pi(a_t^n | s_t^n), N = number of trajectories.
GradientReport batch_policy_gradient(std::span<const ProcessedTrajectory> batch, const policy::StochasticPolicy& pi,
                                     const Vec& theta, Exec exec = Exec::Parallel);

}  // namespace gae::advantage
