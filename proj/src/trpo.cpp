#include "gae/trpo.hpp"

#include "gae/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace gae::trpo {

void TrustRegionConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("trpo: epsilon must be > 0");
  if (!(cg_tol > 0.0)) throw std::invalid_argument("trpo: cg_tol must be > 0");
  if (cg_iters < 1) throw std::invalid_argument("trpo: cg_iters must be >= 1");
  if (!(damping >= 0.0)) throw std::invalid_argument("trpo: damping must be >= 0");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) throw std::invalid_argument("trpo: backtrack_ratio in (0,1)");
  if (max_backtracks < 0) throw std::invalid_argument("trpo: max_backtracks must be >= 0");
}

SampleBatch flatten(std::span<const advantage::ProcessedTrajectory> batch) {
  SampleBatch out;
  long n = 0;
  for (const auto& p : batch) n += static_cast<long>(p.advantages.size());
  out.old_log_probs.resize(n);
  out.advantages.resize(n);
  out.states.reserve(static_cast<std::size_t>(n));
  out.actions.reserve(static_cast<std::size_t>(n));
  long i = 0;
  for (const auto& p : batch) {
    const auto& traj = p.trajectory;
    for (std::size_t t = 0; t < p.advantages.size(); ++t, ++i) {
      out.states.push_back(traj.states[t]);
      out.actions.push_back(traj.actions[t]);
      out.old_log_probs[i] = traj.log_probs[t];
      out.advantages[i] = p.advantages[t];
    }
  }
  return out;
}

double surrogate_loss(const policy::StochasticPolicy& pi, const Vec& theta, const SampleBatch& batch, Exec exec) {
  if (batch.size() == 0) throw std::invalid_argument("surrogate_loss: empty batch");
  const double total = parallel::reduce_scalar(exec, batch.size(), [&](long i) {
    const auto k = static_cast<std::size_t>(i);
    const double ratio = std::exp(pi.log_prob(theta, batch.states[k], batch.actions[k]) - batch.old_log_probs[i]);
    return ratio * batch.advantages[i];
  });
  return total / static_cast<double>(batch.size());
}

Vec surrogate_gradient(const policy::StochasticPolicy& pi, const Vec& theta, const SampleBatch& batch, Exec exec) {
  if (batch.size() == 0) throw std::invalid_argument("surrogate_gradient: empty batch");
  const Vec total = parallel::reduce(exec, batch.size(), pi.param_count(), [&](long i, Vec& acc) {
    if (batch.advantages[i] == 0.0) return;
    const auto k = static_cast<std::size_t>(i);
    const double ratio = std::exp(pi.log_prob(theta, batch.states[k], batch.actions[k]) - batch.old_log_probs[i]);
    acc += ratio * batch.advantages[i] * pi.log_prob_grad(theta, batch.states[k], batch.actions[k]);
  });
  return total / static_cast<double>(batch.size());
}

CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& apply_a, const Vec& b, int iters, double tol) {
  CgResult out;
  out.x = Vec::Zero(b.size());
  const double b_norm = b.norm();
  if (!std::isfinite(b_norm)) throw DivergenceError("conjugate_gradient: non-finite right-hand side");
  if (b_norm == 0.0) return out;

  Vec r = b;
  Vec p = b;
  double rr = r.squaredNorm();
  out.relative_residual = 1.0;
  for (int i = 0; i < iters; ++i) {
    const Vec ap = apply_a(p);
    const double p_ap = p.dot(ap);
    if (!std::isfinite(p_ap)) throw DivergenceError("conjugate_gradient: non-finite curvature");
    if (p_ap <= 0.0) break;  // no curvature left along p
    const double alpha = rr / p_ap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    out.iterations = i + 1;
    out.relative_residual = std::sqrt(rr_next) / b_norm;
    if (!std::isfinite(rr_next) || !out.x.allFinite()) throw DivergenceError("conjugate_gradient: diverged");
    if (out.relative_residual <= tol) break;
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return out;
}

StepResult trpo_step(const policy::StochasticPolicy& pi, const Vec& theta_old, const SampleBatch& batch,
                     const TrustRegionConfig& config, Exec exec) {
  config.validate();
  if (batch.size() == 0) throw std::invalid_argument("trpo_step: empty batch");
  require_dim(theta_old.size(), pi.param_count(), "trpo_step theta");

  StepResult out;
  out.theta = theta_old;
  out.direction = Vec::Zero(theta_old.size());
  auto& diag = out.diagnostics;

  const Vec g = surrogate_gradient(pi, theta_old, batch, exec);
  diag.gradient_norm = g.norm();
  if (diag.gradient_norm == 0.0) {
    diag.zero_gradient = true;
    return out;
  }

  const auto fvp = [&](const Vec& v) {
    return policy::fisher_vector_product(pi, theta_old, batch.states, v, config.damping, exec);
  };
  const CgResult cg = conjugate_gradient(fvp, g, config.cg_iters, config.cg_tol);
  diag.cg_residual = cg.relative_residual;
  diag.cg_iterations = cg.iterations;
  out.direction = cg.x;

  const double s_f_s = cg.x.dot(fvp(cg.x));
  if (!(s_f_s > 0.0) || !std::isfinite(s_f_s)) return out;
  const double alpha = std::sqrt(2.0 * config.epsilon / s_f_s);
  const Vec full_step = alpha * cg.x;
  diag.expected_improvement = g.dot(full_step);

  const double loss_old = surrogate_loss(pi, theta_old, batch, exec);
  double fraction = 1.0;
  for (int k = 0; k <= config.max_backtracks; ++k, fraction *= config.backtrack_ratio) {
    const Vec candidate = theta_old + fraction * full_step;
    const double kl = policy::mean_kl(pi, theta_old, candidate, batch.states, exec);
    if (k == 0) diag.full_step_kl = kl;
    const double improvement = surrogate_loss(pi, candidate, batch, exec) - loss_old;
    if (std::isfinite(kl) && kl <= config.epsilon && improvement > 0.0) {
      out.theta = candidate;
      diag.accepted = true;
      diag.kl = kl;
      diag.surrogate_improvement = improvement;
      diag.step_fraction = fraction;
      return out;
    }
  }
  return out;
}

}  // namespace gae::trpo
