#pragma once

#include "gae/advantage.hpp"
#include "gae/common.hpp"
#include "gae/policy.hpp"

#include <functional>
#include <span>
#include <vector>

namespace gae::trpo {

struct TrustRegionConfig {
  double epsilon = 0.01;  // mean-KL radius
  int cg_iters = 10;
  double cg_tol = 1e-10;
  double damping = 1e-5;
  double backtrack_ratio = 0.8;
  int max_backtracks = 10;

  void validate() const;
};

// Timestep-flattened batch used by the surrogate objective.
struct SampleBatch {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  Vec old_log_probs;
  Vec advantages;

  long size() const { return static_cast<long>(states.size()); }
};

SampleBatch flatten(std::span<const advantage::ProcessedTrajectory> batch);

// L(theta) = (1/N) sum_n [pi_theta(a_n|s_n) / pi_old(a_n|s_n)] A_n, N = timesteps.
double surrogate_loss(const policy::StochasticPolicy& pi, const Vec& theta, const SampleBatch& batch,
                      Exec exec = Exec::Parallel);
Vec surrogate_gradient(const policy::StochasticPolicy& pi, const Vec& theta, const SampleBatch& batch,
                       Exec exec = Exec::Parallel);

struct CgResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;  // ||A x - b|| / ||b||, from the CG recurrence
};

// Solves A x = b for symmetric positive (semi)definite A given as a product.
// Throws DivergenceError when a non-finite value appears.
CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& apply_a, const Vec& b, int iters, double tol);

struct StepDiagnostics {
  bool accepted = false;
  bool zero_gradient = false;
  double kl = 0.0;                    // mean KL of the returned parameters
  double full_step_kl = 0.0;          // mean KL of the unbacktracked step
  double surrogate_improvement = 0.0;
  double expected_improvement = 0.0;  // linear model g . step for the full step
  double step_fraction = 0.0;         // backtrack_ratio^k of the accepted step
  double cg_residual = 0.0;
  int cg_iterations = 0;
  double gradient_norm = 0.0;
};

struct StepResult {
  Vec theta;
  Vec direction;  // unscaled CG solution s ~ F^{-1} g
  StepDiagnostics diagnostics;
};

// Natural-gradient step scaled so that 0.5 s^T F s = epsilon, followed by a
// backtracking search that accepts the first candidate improving the
// surrogate and keeping mean KL <= epsilon. Returns theta_old when no
// candidate qualifies.
StepResult trpo_step(const policy::StochasticPolicy& pi, const Vec& theta_old, const SampleBatch& batch,
                     const TrustRegionConfig& config, Exec exec = Exec::Parallel);

}  // namespace gae::trpo
