#pragma once

#include "gae/common.hpp"
#include "gae/nn.hpp"

#include <span>
#include <vector>

namespace gae::valuefit {

struct ValueFitConfig {
  double epsilon = 0.01;  // bound on (1/N) sum (V_new - V_old)^2 / (2 sigma^2)
  int cg_iters = 10;
  double cg_tol = 1e-10;
  double damping = 1e-5;
  int steps = 1;  // trust-region steps per call, targets held fixed
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;

  void validate() const;
};

// sigma^2 = (1/N) sum (V_old(s_n) - target_n)^2
double compute_sigma_sq(std::span<const double> values_old, std::span<const double> targets);

// (1/N) sum (V_new - V_old)^2 / (2 sigma^2)
double value_constraint(std::span<const double> values_old, std::span<const double> values_new, double sigma_sq);

std::vector<double> predict(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states,
                            Exec exec = Exec::Parallel);

// Gauss-Newton matrix H = (1/N) sum_n j_n j_n^T, j_n = grad_phi V_phi(s_n),
// applied matrix-free. The linearization is computed once at construction.
class GaussNewton {
 public:
  GaussNewton(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states, Exec exec = Exec::Parallel);

  long size() const { return static_cast<long>(traces_.size()); }
  const std::vector<double>& values() const { return values_; }
  Vec apply(const Vec& v, double damping = 0.0) const;
  // sum_n w_n j_n
  Vec weighted_gradient(std::span<const double> weights) const;

 private:
  std::shared_ptr<const nn::Mlp> net_;
  std::vector<std::vector<Vec>> traces_;
  std::vector<double> values_;
  Exec exec_;
};

struct ValueStepDiagnostics {
  bool skipped = false;  // sigma^2 == 0 or zero gradient: nothing to do
  bool accepted = false;
  double sigma_sq = 0.0;
  double objective_before = 0.0;  // sum (V - target)^2
  double objective_after = 0.0;
  double constraint = 0.0;        // realized value_constraint of the returned params
  double step_scale = 0.0;        // alpha finally applied to s
  double cg_residual = 0.0;
};

struct ValueStepResult {
  Vec params;
  Vec direction;  // CG solution s ~ -H^{-1} g
  ValueStepDiagnostics diagnostics;
};

// One trust-region step on sum_n (V_phi(s_n) - target_n)^2. The step length
// is the smaller of the trust-region boundary (0.5 alpha^2 s^T H s / sigma^2 = epsilon)
// and the Gauss-Newton minimizer along s; it is then halved until the
// objective does not increase and the realized constraint holds.
ValueStepResult value_trust_region_step(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states,
                                        std::span<const double> targets, const ValueFitConfig& config,
                                        Exec exec = Exec::Parallel);

struct FitResult {
  Vec params;
  std::vector<ValueStepDiagnostics> steps;
};

FitResult fit_value_function(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states,
                             std::span<const double> targets, const ValueFitConfig& config,
                             Exec exec = Exec::Parallel);

}  // namespace gae::valuefit
