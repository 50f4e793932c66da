#include "gae/advantage.hpp"

#include "gae/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace gae::advantage {

namespace {

void check_lengths(std::span<const double> rewards, std::span<const double> values, const char* what) {
  if (values.size() != rewards.size() + 1) {
    throw DimensionError(std::string(what) + ": need len(values) == len(rewards) + 1, got " +
                         std::to_string(values.size()) + " and " + std::to_string(rewards.size()));
  }
}

void check_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

double final_value(std::span<const double> values, bool terminal) { return terminal ? 0.0 : values.back(); }

}  // namespace

void GaeConfig::validate() const {
  check_unit(gamma, "gamma");
  check_unit(lam, "lambda");
}

Seq td_residuals(std::span<const double> rewards, std::span<const double> values, double gamma, bool terminal) {
  check_lengths(rewards, values, "td_residuals");
  const std::size_t T = rewards.size();
  Seq delta(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double next = t + 1 == T ? final_value(values, terminal) : values[t + 1];
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  return delta;
}

Seq k_step_advantage(std::span<const double> rewards, std::span<const double> values, double gamma, int k,
                     bool terminal) {
  if (k < 1) throw std::invalid_argument("k_step_advantage: k must be >= 1");
  const Seq delta = td_residuals(rewards, values, gamma, terminal);
  const std::size_t T = delta.size();
  Seq out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double discount = 1.0;
    for (std::size_t l = 0; l < static_cast<std::size_t>(k) && t + l < T; ++l) {
      out[t] += discount * delta[t + l];
      discount *= gamma;
    }
  }
  return out;
}

Seq k_step_advantage_telescoped(std::span<const double> rewards, std::span<const double> values, double gamma,
                                int k, bool terminal) {
  if (k < 1) throw std::invalid_argument("k_step_advantage: k must be >= 1");
  check_lengths(rewards, values, "k_step_advantage");
  const std::size_t T = rewards.size();
  Seq out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(k), T - t);
    double ret = 0.0, discount = 1.0;
    for (std::size_t l = 0; l < m; ++l) {
      ret += discount * rewards[t + l];
      discount *= gamma;
    }
    const double tail = t + m == T ? final_value(values, terminal) : values[t + m];
    out[t] = -values[t] + ret + discount * tail;
  }
  return out;
}

Seq discounted_cumsum(std::span<const double> xs, double discount) {
  Seq out(xs.size());
  double running = 0.0;
  for (std::size_t t = xs.size(); t-- > 0;) {
    running = xs[t] + discount * running;
    out[t] = running;
  }
  return out;
}

Seq gae(std::span<const double> rewards, std::span<const double> values, const GaeConfig& config, bool terminal) {
  config.validate();
  const Seq delta = td_residuals(rewards, values, config.gamma, terminal);
  return discounted_cumsum(delta, config.gamma * config.lam);
}

Seq value_targets(std::span<const double> rewards, std::span<const double> values, double gamma, double lam_v,
                  bool terminal) {
  check_unit(lam_v, "lam_v");
  check_lengths(rewards, values, "value_targets");
  const std::size_t T = rewards.size();
  Seq out(T);
  if (lam_v == 1.0) {
    double running = final_value(values, terminal);
    for (std::size_t t = T; t-- > 0;) {
      running = rewards[t] + gamma * running;
      out[t] = running;
    }
    return out;
  }
  const Seq adv = gae(rewards, values, GaeConfig{gamma, lam_v}, terminal);
  for (std::size_t t = 0; t < T; ++t) out[t] = values[t] + adv[t];
  return out;
}

Seq shape_rewards(std::span<const double> rewards, std::span<const double> potentials, double gamma, bool terminal) {
  check_lengths(rewards, potentials, "shape_rewards");
  const std::size_t T = rewards.size();
  Seq out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double next = t + 1 == T ? final_value(potentials, terminal) : potentials[t + 1];
    out[t] = rewards[t] + gamma * next - potentials[t];
  }
  return out;
}

ProcessedTrajectory process(env::Trajectory traj, Seq values, const GaeConfig& config, double lam_v) {
  if (traj.terminal && !values.empty()) values.back() = 0.0;
  ProcessedTrajectory out;
  out.deltas = td_residuals(traj.rewards, values, config.gamma, traj.terminal);
  out.advantages = discounted_cumsum(out.deltas, config.gamma * config.lam);
  out.value_targets = value_targets(traj.rewards, values, config.gamma, lam_v, traj.terminal);
  out.values = std::move(values);
  out.trajectory = std::move(traj);
  return out;
}

void standardize_advantages(std::vector<ProcessedTrajectory>& batch) {
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (const auto& p : batch) {
    for (double a : p.advantages) {
      sum += a;
      ++n;
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  for (const auto& p : batch) {
    for (double a : p.advantages) sum_sq += (a - mean) * (a - mean);
  }
  const double std = std::sqrt(sum_sq / static_cast<double>(n));
  if (!(std > 0.0)) return;
  for (auto& p : batch) {
    for (double& a : p.advantages) a = (a - mean) / std;
  }
}

GradientReport batch_policy_gradient(std::span<const ProcessedTrajectory> batch, const policy::StochasticPolicy& pi,
                                     const Vec& theta, Exec exec) {
  GradientReport report;
  report.gradient = Vec::Zero(pi.param_count());
  if (batch.empty()) return report;

  // flatten (trajectory, step) pairs so the reduction parallelizes over timesteps
  std::vector<std::pair<std::size_t, std::size_t>> index;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& p = batch[n];
    if (p.advantages.size() != p.trajectory.actions.size()) {
      throw DimensionError("batch_policy_gradient: advantages not populated");
    }
    for (std::size_t t = 0; t < p.advantages.size(); ++t) {
      index.emplace_back(n, t);
      sum += p.advantages[t];
      sum_sq += p.advantages[t] * p.advantages[t];
    }
  }
  report.timesteps = static_cast<long>(index.size());
  const Vec total = parallel::reduce(exec, report.timesteps, pi.param_count(), [&](long i, Vec& acc) {
    const auto [n, t] = index[static_cast<std::size_t>(i)];
    const auto& p = batch[n];
    const double a = p.advantages[t];
    if (a != 0.0) acc += a * pi.log_prob_grad(theta, p.trajectory.states[t], p.trajectory.actions[t]);
  });
  report.gradient = total / static_cast<double>(batch.size());
  report.norm = report.gradient.norm();
  if (report.timesteps > 0) {
    const double count = static_cast<double>(report.timesteps);
    report.advantage_mean = sum / count;
    report.advantage_std = std::sqrt(std::max(0.0, sum_sq / count - report.advantage_mean * report.advantage_mean));
  }
  return report;
}

}  // namespace gae::advantage
