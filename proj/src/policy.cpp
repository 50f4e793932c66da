#include "gae/policy.hpp"

#include "gae/parallel.hpp"

#include <cmath>

namespace gae::policy {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec p = (logits.array() - m).exp();
  return p / p.sum();
}

// ---------------------------------------------------------------- Gaussian

GaussianPolicy::GaussianPolicy(nn::MlpSpec mean_spec, double init_log_std)
    : spec_(std::move(mean_spec)), init_log_std_(init_log_std) {
  spec_.validate();
}

Vec GaussianPolicy::init_params(Rng& rng) const {
  Vec theta(param_count());
  theta.head(spec_.param_count()) = nn::init_params(spec_, rng, 0.01);
  theta.tail(action_dim()).setConstant(init_log_std_);
  return theta;
}

Vec GaussianPolicy::net_params(const Vec& theta) const {
  require_dim(theta.size(), param_count(), "GaussianPolicy theta");
  return theta.head(spec_.param_count());
}

Vec GaussianPolicy::mean(const Vec& theta, const Vec& state) const {
  return nn::forward(spec_, net_params(theta), state);
}

ActionSample GaussianPolicy::sample(const Vec& theta, const Vec& state, Rng& rng) const {
  std::normal_distribution<double> normal;
  const Vec mu = mean(theta, state);
  const Vec log_std = theta.tail(action_dim());
  Vec z(action_dim());
  for (long i = 0; i < z.size(); ++i) z[i] = normal(rng);
  ActionSample out;
  out.action = mu.array() + log_std.array().exp() * z.array();
  out.log_prob = -0.5 * z.squaredNorm() - log_std.sum() - kHalfLog2Pi * static_cast<double>(action_dim());
  return out;
}

double GaussianPolicy::log_prob(const Vec& theta, const Vec& state, const Vec& action) const {
  require_dim(action.size(), action_dim(), "GaussianPolicy action");
  const Vec mu = mean(theta, state);
  const Vec log_std = theta.tail(action_dim());
  const Vec z = (action - mu).array() / log_std.array().exp();
  return -0.5 * z.squaredNorm() - log_std.sum() - kHalfLog2Pi * static_cast<double>(action_dim());
}

Vec GaussianPolicy::log_prob_grad(const Vec& theta, const Vec& state, const Vec& action) const {
  require_dim(action.size(), action_dim(), "GaussianPolicy action");
  const nn::Mlp net(spec_, net_params(theta));
  const auto trace = net.forward_trace(state);
  const Vec log_std = theta.tail(action_dim());
  const Vec inv_var = (-2.0 * log_std).array().exp();
  const Vec diff = action - trace.back();

  Vec g = Vec::Zero(param_count());
  Vec head = Vec::Zero(spec_.param_count());
  net.backward(trace, diff.cwiseProduct(inv_var), head);
  g.head(spec_.param_count()) = head;
  g.tail(action_dim()) = diff.array().square() * inv_var.array() - 1.0;
  return g;
}

double GaussianPolicy::kl(const Vec& theta_old, const Vec& theta_new, const Vec& state) const {
  const Vec mu_old = mean(theta_old, state);
  const Vec mu_new = mean(theta_new, state);
  const Vec ls_old = theta_old.tail(action_dim());
  const Vec ls_new = theta_new.tail(action_dim());
  double total = 0.0;
  for (long i = 0; i < mu_old.size(); ++i) {
    const double var_old = std::exp(2.0 * ls_old[i]);
    const double var_new = std::exp(2.0 * ls_new[i]);
    const double d = mu_old[i] - mu_new[i];
    total += ls_new[i] - ls_old[i] + (var_old + d * d) / (2.0 * var_new) - 0.5;
  }
  return total;
}

Vec GaussianPolicy::kl_grad(const Vec& theta_old, const Vec& theta_new, const Vec& state) const {
  const Vec mu_old = mean(theta_old, state);
  const nn::Mlp net(spec_, net_params(theta_new));
  const auto trace = net.forward_trace(state);
  const Vec& mu_new = trace.back();
  const Vec ls_old = theta_old.tail(action_dim());
  const Vec ls_new = theta_new.tail(action_dim());
  const Vec var_old = (2.0 * ls_old).array().exp();
  const Vec var_new = (2.0 * ls_new).array().exp();
  const Vec d = mu_new - mu_old;

  Vec g = Vec::Zero(param_count());
  Vec head = Vec::Zero(spec_.param_count());
  net.backward(trace, d.cwiseQuotient(var_new), head);
  g.head(spec_.param_count()) = head;
  g.tail(action_dim()) = 1.0 - (var_old.array() + d.array().square()) / var_new.array();
  return g;
}

void GaussianPolicy::fisher_accumulate(const Vec& theta, const Vec& state, const Vec& v, Vec& out,
                                       double scale) const {
  const auto net = std::make_shared<const nn::Mlp>(spec_, net_params(theta));
  const nn::JacobianProducts jac(net, state);
  const long n_net = spec_.param_count();
  const Vec inv_var = (-2.0 * theta.tail(action_dim())).array().exp();
  const Vec jv = jac.jvp(v.head(n_net));
  Vec head = out.head(n_net);
  jac.vjp_accumulate(jv.cwiseProduct(inv_var), head, scale);
  out.head(n_net) = head;
  // Fisher information of a Gaussian with respect to log sigma is 2.
  out.tail(action_dim()) += scale * 2.0 * v.tail(action_dim());
}

// ------------------------------------------------------------- Categorical

CategoricalPolicy::CategoricalPolicy(nn::MlpSpec logits_spec, double init_scale)
    : spec_(std::move(logits_spec)), init_scale_(init_scale) {
  spec_.validate();
}

Vec CategoricalPolicy::init_params(Rng& rng) const { return nn::init_params(spec_, rng, init_scale_); }

int CategoricalPolicy::action_index(const Vec& action) const {
  require_dim(action.size(), 1, "CategoricalPolicy action");
  const int a = static_cast<int>(std::lround(action[0]));
  if (a < 0 || a >= n_actions()) throw DimensionError("CategoricalPolicy: action index out of range");
  return a;
}

Vec CategoricalPolicy::probabilities(const Vec& theta, const Vec& state) const {
  return softmax(nn::forward(spec_, theta, state));
}

ActionSample CategoricalPolicy::sample(const Vec& theta, const Vec& state, Rng& rng) const {
  const Vec logits = nn::forward(spec_, theta, state);
  const Vec p = softmax(logits);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  int a = n_actions() - 1;
  double cumulative = 0.0;
  for (int i = 0; i < n_actions(); ++i) {
    cumulative += p[i];
    if (u < cumulative) {
      a = i;
      break;
    }
  }
  const double m = logits.maxCoeff();
  ActionSample out;
  out.action = Vec::Constant(1, a);
  out.log_prob = logits[a] - m - std::log((logits.array() - m).exp().sum());
  return out;
}

Vec CategoricalPolicy::greedy_action(const Vec& theta, const Vec& state) const {
  Eigen::Index best = 0;
  nn::forward(spec_, theta, state).maxCoeff(&best);
  return Vec::Constant(1, static_cast<double>(best));
}

double CategoricalPolicy::log_prob(const Vec& theta, const Vec& state, const Vec& action) const {
  const Vec logits = nn::forward(spec_, theta, state);
  const double m = logits.maxCoeff();
  return logits[action_index(action)] - m - std::log((logits.array() - m).exp().sum());
}

Vec CategoricalPolicy::log_prob_grad(const Vec& theta, const Vec& state, const Vec& action) const {
  const nn::Mlp net(spec_, theta);
  const auto trace = net.forward_trace(state);
  Vec cot = -softmax(trace.back());
  cot[action_index(action)] += 1.0;
  Vec g = Vec::Zero(param_count());
  net.backward(trace, cot, g);
  return g;
}

double CategoricalPolicy::kl(const Vec& theta_old, const Vec& theta_new, const Vec& state) const {
  const Vec l_old = nn::forward(spec_, theta_old, state);
  const Vec l_new = nn::forward(spec_, theta_new, state);
  const Vec p_old = softmax(l_old);
  const auto log_softmax = [](const Vec& l) {
    const double m = l.maxCoeff();
    return Vec(l.array() - m - std::log((l.array() - m).exp().sum()));
  };
  const Vec diff = log_softmax(l_old) - log_softmax(l_new);
  return p_old.dot(diff);
}

Vec CategoricalPolicy::kl_grad(const Vec& theta_old, const Vec& theta_new, const Vec& state) const {
  const Vec p_old = probabilities(theta_old, state);
  const nn::Mlp net(spec_, theta_new);
  const auto trace = net.forward_trace(state);
  Vec g = Vec::Zero(param_count());
  net.backward(trace, softmax(trace.back()) - p_old, g);
  return g;
}

void CategoricalPolicy::fisher_accumulate(const Vec& theta, const Vec& state, const Vec& v, Vec& out,
                                          double scale) const {
  const auto net = std::make_shared<const nn::Mlp>(spec_, theta);
  const nn::JacobianProducts jac(net, state);
  const Vec p = softmax(jac.output());
  const Vec jv = jac.jvp(v);
  // (diag(p) - p p^T) jv
  const Vec m = p.cwiseProduct(jv) - p * p.dot(jv);
  jac.vjp_accumulate(m, out, scale);
}

CategoricalPolicy tabular_softmax(int n_states, int n_actions) {
  return CategoricalPolicy(nn::MlpSpec{n_states, {}, n_actions});
}

// ------------------------------------------------------------- batch ops

double mean_kl(const StochasticPolicy& pi, const Vec& theta_old, const Vec& theta_new, std::span<const Vec> states,
               Exec exec) {
  if (states.empty()) throw std::invalid_argument("mean_kl: empty state batch");
  const long n = static_cast<long>(states.size());
  const double total = parallel::reduce_scalar(exec, n, [&](long i) {
    return pi.kl(theta_old, theta_new, states[static_cast<std::size_t>(i)]);
  });
  return total / static_cast<double>(n);
}

Vec mean_kl_gradient(const StochasticPolicy& pi, const Vec& theta_old, const Vec& theta_new,
                     std::span<const Vec> states, Exec exec) {
  if (states.empty()) throw std::invalid_argument("mean_kl_gradient: empty state batch");
  const long n = static_cast<long>(states.size());
  const Vec total = parallel::reduce(exec, n, pi.param_count(), [&](long i, Vec& acc) {
    acc += pi.kl_grad(theta_old, theta_new, states[static_cast<std::size_t>(i)]);
  });
  return total / static_cast<double>(n);
}

Vec fisher_vector_product(const StochasticPolicy& pi, const Vec& theta, std::span<const Vec> states, const Vec& v,
                          double damping, Exec exec) {
  require_dim(v.size(), pi.param_count(), "fisher_vector_product v");
  if (states.empty()) throw std::invalid_argument("fisher_vector_product: empty state batch");
  const long n = static_cast<long>(states.size());
  const Vec total = parallel::reduce(exec, n, pi.param_count(), [&](long i, Vec& acc) {
    pi.fisher_accumulate(theta, states[static_cast<std::size_t>(i)], v, acc, 1.0);
  });
  return total / static_cast<double>(n) + damping * v;
}

nn::Checkpoint to_checkpoint(const StochasticPolicy& pi, const Vec& theta) {
  require_dim(theta.size(), pi.param_count(), "to_checkpoint theta");
  return nn::Checkpoint{pi.kind(), pi.net_spec(), theta};
}

std::unique_ptr<StochasticPolicy> from_checkpoint(const nn::Checkpoint& ckpt, Vec& theta) {
  std::unique_ptr<StochasticPolicy> pi;
  if (ckpt.kind == "gaussian_policy") {
    pi = std::make_unique<GaussianPolicy>(ckpt.spec);
  } else if (ckpt.kind == "categorical_policy") {
    pi = std::make_unique<CategoricalPolicy>(ckpt.spec);
  } else {
    throw std::runtime_error("checkpoint: '" + ckpt.kind + "' is not a policy");
  }
  require_dim(ckpt.values.size(), pi->param_count(), "policy checkpoint values");
  theta = ckpt.values;
  return pi;
}

}  // namespace gae::policy
