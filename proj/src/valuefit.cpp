#include "gae/valuefit.hpp"

#include "gae/parallel.hpp"
#include "gae/trpo.hpp"

#include <cmath>
#include <stdexcept>

namespace gae::valuefit {

namespace {

double sum_sq_error(std::span<const double> values, std::span<const double> targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) total += (values[i] - targets[i]) * (values[i] - targets[i]);
  return total;
}

}  // namespace

void ValueFitConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("valuefit: epsilon must be > 0");
  if (cg_iters < 1 || !(cg_tol > 0.0) || !(damping >= 0.0)) throw std::invalid_argument("valuefit: bad CG settings");
  if (steps < 1) throw std::invalid_argument("valuefit: steps must be >= 1");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0) || max_backtracks < 0) {
    throw std::invalid_argument("valuefit: bad backtracking settings");
  }
}

double compute_sigma_sq(std::span<const double> values_old, std::span<const double> targets) {
  if (values_old.size() != targets.size()) throw DimensionError("compute_sigma_sq: length mismatch");
  if (values_old.empty()) throw std::invalid_argument("compute_sigma_sq: empty batch");
  return sum_sq_error(values_old, targets) / static_cast<double>(values_old.size());
}

double value_constraint(std::span<const double> values_old, std::span<const double> values_new, double sigma_sq) {
  if (values_old.size() != values_new.size()) throw DimensionError("value_constraint: length mismatch");
  if (values_old.empty()) throw std::invalid_argument("value_constraint: empty batch");
  return sum_sq_error(values_new, values_old) / (2.0 * sigma_sq * static_cast<double>(values_old.size()));
}

std::vector<double> predict(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states, Exec exec) {
  require_dim(spec.output_dim, 1, "value net output");
  const nn::Mlp net(spec, params);
  std::vector<double> out(states.size());
  parallel::for_each_index(exec, static_cast<long>(states.size()), [&](long i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = net.forward(states[k])[0];
  });
  return out;
}

GaussNewton::GaussNewton(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states, Exec exec)
    : net_(std::make_shared<const nn::Mlp>(spec, params)),
      traces_(states.size()),
      values_(states.size()),
      exec_(exec) {
  require_dim(spec.output_dim, 1, "value net output");
  if (states.empty()) throw std::invalid_argument("GaussNewton: empty batch");
  parallel::for_each_index(exec, static_cast<long>(states.size()), [&](long i) {
    const auto k = static_cast<std::size_t>(i);
    traces_[k] = net_->forward_trace(states[k]);
    values_[k] = traces_[k].back()[0];
  });
}

Vec GaussNewton::apply(const Vec& v, double damping) const {
  require_dim(v.size(), net_->param_count(), "GaussNewton::apply");
  const Vec total = parallel::reduce(exec_, size(), net_->param_count(), [&](long i, Vec& acc) {
    const auto& trace = traces_[static_cast<std::size_t>(i)];
    const Vec jv = net_->tangent(trace, v);
    net_->backward(trace, jv, acc);
  });
  return total / static_cast<double>(size()) + damping * v;
}

Vec GaussNewton::weighted_gradient(std::span<const double> weights) const {
  if (static_cast<long>(weights.size()) != size()) throw DimensionError("GaussNewton::weighted_gradient");
  return parallel::reduce(exec_, size(), net_->param_count(), [&](long i, Vec& acc) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w != 0.0) net_->backward(traces_[static_cast<std::size_t>(i)], Vec::Constant(1, w), acc);
  });
}

ValueStepResult value_trust_region_step(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states,
                                        std::span<const double> targets, const ValueFitConfig& config, Exec exec) {
  config.validate();
  if (states.size() != targets.size()) throw DimensionError("value_trust_region_step: states/targets mismatch");

  ValueStepResult out;
  out.params = params;
  out.direction = Vec::Zero(params.size());
  auto& diag = out.diagnostics;

  const GaussNewton gn(spec, params, states, exec);
  const auto& v_old = gn.values();
  const double n = static_cast<double>(states.size());
  diag.sigma_sq = compute_sigma_sq(v_old, targets);
  diag.objective_before = diag.sigma_sq * n;
  diag.objective_after = diag.objective_before;
  if (diag.sigma_sq == 0.0) {
    diag.skipped = true;
    return out;
  }

  std::vector<double> residual_weights(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) residual_weights[i] = 2.0 * (v_old[i] - targets[i]);
  const Vec g = gn.weighted_gradient(residual_weights);
  if (g.squaredNorm() == 0.0) {
    diag.skipped = true;
    return out;
  }

  const auto h = [&](const Vec& v) { return gn.apply(v, config.damping); };
  const trpo::CgResult cg = trpo::conjugate_gradient(h, -g, config.cg_iters, config.cg_tol);
  diag.cg_residual = cg.relative_residual;
  out.direction = cg.x;
  if (!cg.x.allFinite()) throw DivergenceError("value_trust_region_step: non-finite CG solution");

  const double s_h_s = cg.x.dot(gn.apply(cg.x));
  if (!(s_h_s > 0.0)) return out;
  const double alpha_region = std::sqrt(2.0 * config.epsilon * diag.sigma_sq / s_h_s);
  // Along s = -H^{-1} g the Gauss-Newton model of the sum-of-squares objective
  // (Hessian 2 N H) is minimized at alpha = 1 / (2N).
  const double alpha_model = 1.0 / (2.0 * n);
  double alpha = std::min(alpha_region, alpha_model);

  for (int k = 0; k <= config.max_backtracks; ++k, alpha *= config.backtrack_ratio) {
    const Vec candidate = params + alpha * cg.x;
    const auto v_new = predict(spec, candidate, states, exec);
    const double objective = sum_sq_error(v_new, targets);
    const double constraint = value_constraint(v_old, v_new, diag.sigma_sq);
    if (std::isfinite(objective) && objective <= diag.objective_before && constraint <= config.epsilon) {
      out.params = candidate;
      diag.accepted = true;
      diag.objective_after = objective;
      diag.constraint = constraint;
      diag.step_scale = alpha;
      return out;
    }
  }
  return out;
}

FitResult fit_value_function(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states,
                             std::span<const double> targets, const ValueFitConfig& config, Exec exec) {
  config.validate();
  FitResult out;
  out.params = params;
  for (int i = 0; i < config.steps; ++i) {
    auto step = value_trust_region_step(spec, out.params, states, targets, config, exec);
    out.params = std::move(step.params);
    out.steps.push_back(step.diagnostics);
    if (step.diagnostics.skipped) break;
  }
  return out;
}

}  // namespace gae::valuefit
