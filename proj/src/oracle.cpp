#include "gae/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace gae::oracle {

using env::TabularMdp;

// --------------------------------------------------------------- policies

TabularPolicy bind(const policy::StochasticPolicy& pi, const Vec& theta, const Mat& features, int n_actions) {
  require_dim(features.cols(), pi.state_dim(), "oracle::bind features");
  TabularPolicy tp;
  tp.pi = &pi;
  tp.theta = theta;
  tp.features = features;
  const auto n_states = static_cast<int>(features.rows());
  tp.probs.resize(n_states, n_actions);
  tp.scores.assign(static_cast<std::size_t>(n_states), {});
  for (int s = 0; s < n_states; ++s) {
    const Vec x = features.row(s).transpose();
    for (int a = 0; a < n_actions; ++a) {
      const Vec action = Vec::Constant(1, a);
      tp.probs(s, a) = std::exp(pi.log_prob(theta, x, action));
      tp.scores[static_cast<std::size_t>(s)].push_back(pi.log_prob_grad(theta, x, action));
    }
  }
  return tp;
}

TabularPolicy bind_one_hot(const policy::StochasticPolicy& pi, const Vec& theta, const TabularMdp& mdp) {
  return bind(pi, theta, Mat::Identity(mdp.n_states, mdp.n_states), mdp.n_actions);
}

// ----------------------------------------------------------------- values

Mat policy_transition(const TabularMdp& mdp, const Mat& probs) {
  Mat p = Mat::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int sn = 0; sn < mdp.n_states; ++sn) p(s, sn) += probs(s, a) * mdp.p(s, a, sn);
    }
  }
  return p;
}

Vec policy_reward(const TabularMdp& mdp, const Mat& probs) {
  Vec r = Vec::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int sn = 0; sn < mdp.n_states; ++sn) r[s] += probs(s, a) * mdp.p(s, a, sn) * mdp.r(s, a, sn);
    }
  }
  return r;
}

namespace {

std::vector<int> transient_states(const TabularMdp& mdp) {
  std::vector<int> idx;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!mdp.is_terminal(s)) idx.push_back(s);
  }
  return idx;
}

Mat submatrix(const Mat& m, const std::vector<int>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace

bool is_absorbing(const TabularMdp& mdp, const Mat& probs) {
  const auto idx = transient_states(mdp);
  if (idx.empty()) return true;
  const Mat p = submatrix(policy_transition(mdp, probs), idx);
  Eigen::EigenSolver<Mat> eig(p, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - 1e-12;
}

TabularSolution solve_values(const TabularMdp& mdp, const Mat& probs, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("solve_values: gamma must lie in [0, 1]");
  if (probs.rows() != mdp.n_states || probs.cols() != mdp.n_actions) throw DimensionError("solve_values: probs");
  if (gamma == 1.0 && !is_absorbing(mdp, probs)) {
    throw SingularSystemError("solve_values: gamma = 1 needs every state to reach a terminal state");
  }
  const auto idx = transient_states(mdp);
  const Mat p_pi = policy_transition(mdp, probs);
  const Vec r_pi = policy_reward(mdp, probs);

  TabularSolution sol;
  sol.gamma = gamma;
  sol.v = Vec::Zero(mdp.n_states);
  if (!idx.empty()) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    const Mat a = Mat::Identity(n, n) - gamma * submatrix(p_pi, idx);
    Vec b(n);
    for (Eigen::Index i = 0; i < n; ++i) b[i] = r_pi[idx[static_cast<std::size_t>(i)]];
    Eigen::FullPivLU<Mat> lu(a);
    if (!lu.isInvertible()) throw SingularSystemError("solve_values: singular Bellman system");
    const Vec v = lu.solve(b);
    for (Eigen::Index i = 0; i < n; ++i) sol.v[idx[static_cast<std::size_t>(i)]] = v[i];
  }
  sol.q = Mat::Zero(mdp.n_states, mdp.n_actions);
  for (int s : idx) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double q = 0.0;
      for (int sn = 0; sn < mdp.n_states; ++sn) q += mdp.p(s, a, sn) * (mdp.r(s, a, sn) + gamma * sol.v[sn]);
      sol.q(s, a) = q;
    }
  }
  sol.adv = sol.q;
  for (int s = 0; s < mdp.n_states; ++s) sol.adv.row(s).array() -= sol.v[s];
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) sol.adv.row(s).setZero();
  }
  return sol;
}

// ------------------------------------------------------------- estimators

void EstimatorKind::validate() const {
  if (tag == EstimatorTag::k_step && k < 1) throw std::invalid_argument("EstimatorKind: k must be >= 1");
  if ((tag == EstimatorTag::gae || tag == EstimatorTag::shaped_sum) && !(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("EstimatorKind: lambda must lie in [0, 1]");
  }
}

std::string EstimatorKind::name() const {
  std::ostringstream out;
  switch (tag) {
    case EstimatorTag::total_reward: out << "total_reward"; break;
    case EstimatorTag::reward_to_go: out << "reward_to_go"; break;
    case EstimatorTag::baselined_reward_to_go: out << "baselined_reward_to_go"; break;
    case EstimatorTag::q_value: out << "q_value"; break;
    case EstimatorTag::advantage: out << "advantage"; break;
    case EstimatorTag::td_residual: out << "td_residual"; break;
    case EstimatorTag::k_step: out << "k_step(" << k << ")"; break;
    case EstimatorTag::gae: out << "gae(" << lam << ")"; break;
    case EstimatorTag::discounted_return: out << "discounted_return"; break;
    case EstimatorTag::shaped_sum: out << "shaped_sum(" << lam << ")"; break;
  }
  return out.str();
}

namespace {

void check_enumeration(const TabularMdp& mdp, int horizon) {
  if (horizon < 1) throw std::invalid_argument("enumeration: horizon must be >= 1");
  const double bound = std::pow(static_cast<double>(mdp.n_actions) * mdp.n_states, horizon);
  if (bound > kMaxEnumeratedPaths) {
    throw EnumerationTooLarge("enumeration: (|A||S|)^horizon = " + std::to_string(bound) + " exceeds the limit");
  }
}

struct Path {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
};

// Calls on_path(probability, path, terminal) for every trajectory that either
// reaches a terminal state or runs for `horizon` steps.
template <class OnPath>
void enumerate_paths(const TabularMdp& mdp, const Mat& probs, int horizon, OnPath&& on_path) {
  check_enumeration(mdp, horizon);
  Path path;
  auto visit = [&](auto&& self, double prob) -> void {
    const int s = path.states.back();
    if (mdp.is_terminal(s) || static_cast<int>(path.actions.size()) == horizon) {
      on_path(prob, path, mdp.is_terminal(s));
      return;
    }
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = probs(s, a);
      if (pa == 0.0) continue;
      for (int sn = 0; sn < mdp.n_states; ++sn) {
        const double ps = mdp.p(s, a, sn);
        if (ps == 0.0) continue;
        path.actions.push_back(a);
        path.rewards.push_back(mdp.r(s, a, sn));
        path.states.push_back(sn);
        self(self, prob * pa * ps);
        path.states.pop_back();
        path.rewards.pop_back();
        path.actions.pop_back();
      }
    }
  };
  for (int s0 = 0; s0 < mdp.n_states; ++s0) {
    if (mdp.initial_dist[s0] == 0.0) continue;
    path.states.assign(1, s0);
    visit(visit, mdp.initial_dist[s0]);
  }
}

// A_t for every step of one path, straight from the defining sums.
std::vector<double> path_estimates(const Path& path, bool terminal, const EstimatorKind& kind, const Vec& value_fn,
                                   const TabularSolution* sol, double gamma) {
  const auto T = path.actions.size();
  // V along the path, with V(s_T) = 0 when s_T is terminal
  std::vector<double> v(T + 1);
  if (value_fn.size() > 0) {
    for (std::size_t t = 0; t <= T; ++t) v[t] = value_fn[path.states[t]];
    if (terminal) v[T] = 0.0;
  }
  auto delta = [&](std::size_t t) { return path.rewards[t] + gamma * v[t + 1] - v[t]; };
  auto discounted = [&](std::size_t t, std::size_t steps, double discount, auto&& term) {
    double sum = 0.0;
    for (std::size_t l = 0; l < steps && t + l < T; ++l) sum += std::pow(discount, static_cast<double>(l)) * term(t + l);
    return sum;
  };
  auto reward = [&](std::size_t i) { return path.rewards[i]; };

  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    switch (kind.tag) {
      case EstimatorTag::total_reward:
        out[t] = discounted(0, T, 1.0, reward);
        break;
      case EstimatorTag::reward_to_go:
        out[t] = discounted(t, T, 1.0, reward);
        break;
      case EstimatorTag::baselined_reward_to_go:
        out[t] = discounted(t, T, 1.0, reward) - v[t];
        break;
      case EstimatorTag::q_value:
        out[t] = sol->q(path.states[t], path.actions[t]);
        break;
      case EstimatorTag::advantage:
        out[t] = sol->adv(path.states[t], path.actions[t]);
        break;
      case EstimatorTag::td_residual:
        out[t] = delta(t);
        break;
      case EstimatorTag::k_step:
        out[t] = discounted(t, static_cast<std::size_t>(kind.k), gamma, delta);
        break;
      case EstimatorTag::gae:
        out[t] = discounted(t, T, gamma * kind.lam, delta);
        break;
      case EstimatorTag::discounted_return:
        out[t] = discounted(t, T, gamma, reward);
        break;
      case EstimatorTag::shaped_sum: {
        auto shaped = [&](std::size_t i) { return path.rewards[i] + gamma * v[i + 1] - v[i]; };
        out[t] = discounted(t, T, gamma * kind.lam, shaped);
        break;
      }
    }
  }
  return out;
}

bool needs_value_fn(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::baselined_reward_to_go:
    case EstimatorTag::td_residual:
    case EstimatorTag::k_step:
    case EstimatorTag::gae:
    case EstimatorTag::shaped_sum:
      return true;
    default:
      return false;
  }
}

}  // namespace

ExactMoments exact_estimator_moments(const TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                     const Vec& value_fn, double gamma, int horizon, const HistoryBaseline& baseline) {
  kind.validate();
  if (needs_value_fn(kind.tag)) require_dim(value_fn.size(), mdp.n_states, "oracle value_fn");
  TabularSolution sol;
  const bool needs_solution = kind.tag == EstimatorTag::q_value || kind.tag == EstimatorTag::advantage;
  if (needs_solution) sol = solve_values(mdp, tp.probs, gamma);

  ExactMoments out;
  out.mean = Vec::Zero(tp.param_count());
  double second = 0.0;
  Vec x(tp.param_count());
  enumerate_paths(mdp, tp.probs, horizon, [&](double prob, const Path& path, bool terminal) {
    auto est = path_estimates(path, terminal, kind, value_fn, needs_solution ? &sol : nullptr, gamma);
    x.setZero();
    for (std::size_t t = 0; t < est.size(); ++t) {
      double a = est[t];
      if (baseline) {
        a -= baseline(std::span<const int>(path.states.data(), t + 1), std::span<const int>(path.actions.data(), t));
      }
      x += a * tp.scores[static_cast<std::size_t>(path.states[t])][static_cast<std::size_t>(path.actions[t])];
    }
    out.mean += prob * x;
    second += prob * x.squaredNorm();
    ++out.paths;
  });
  out.variance_trace = std::max(0.0, second - out.mean.squaredNorm());
  return out;
}

Vec exact_estimator_expectation(const TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                const Vec& value_fn, double gamma, int horizon, const HistoryBaseline& baseline) {
  return exact_estimator_moments(mdp, tp, kind, value_fn, gamma, horizon, baseline).mean;
}

Vec exact_policy_gradient(const TabularMdp& mdp, const TabularPolicy& tp, double gamma, int horizon) {
  const TabularSolution sol = solve_values(mdp, tp.probs, gamma);
  Vec g = Vec::Zero(tp.param_count());
  enumerate_paths(mdp, tp.probs, horizon, [&](double prob, const Path& path, bool) {
    for (std::size_t t = 0; t < path.actions.size(); ++t) {
      const auto s = static_cast<std::size_t>(path.states[t]);
      const auto a = static_cast<std::size_t>(path.actions[t]);
      g += prob * sol.adv(path.states[t], path.actions[t]) * tp.scores[s][a];
    }
  });
  return g;
}

double expected_return(const TabularMdp& mdp, const TabularPolicy& tp, double gamma, int horizon) {
  double total = 0.0;
  enumerate_paths(mdp, tp.probs, horizon, [&](double prob, const Path& path, bool) {
    double ret = 0.0, discount = 1.0;
    for (double r : path.rewards) {
      ret += discount * r;
      discount *= gamma;
    }
    total += prob * ret;
  });
  return total;
}

Certification certify_gamma_just(const TabularMdp& mdp, const TabularPolicy& tp, const EstimatorKind& kind,
                                 const Vec& value_fn, double gamma, int horizon, double tol,
                                 const HistoryBaseline& baseline) {
  const Vec expected = exact_estimator_expectation(mdp, tp, kind, value_fn, gamma, horizon, baseline);
  const Vec exact = exact_policy_gradient(mdp, tp, gamma, horizon);
  Certification c;
  c.gap = (expected - exact).norm();
  c.certified = c.gap <= tol;
  return c;
}

// ---------------------------------------------------------------- shaping

std::vector<double> response_function(const TabularMdp& mdp, const Mat& probs, int s, int a, int max_l) {
  if (max_l < 0) throw std::invalid_argument("response_function: max_l must be >= 0");
  if (s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions) throw std::invalid_argument("response_function: bad (s, a)");
  const Mat p_pi = policy_transition(mdp, probs);
  const Vec r_pi = policy_reward(mdp, probs);

  // row vectors: state distributions at step l with and without conditioning on a
  Eigen::RowVectorXd with_action(mdp.n_states);
  for (int sn = 0; sn < mdp.n_states; ++sn) with_action[sn] = mdp.p(s, a, sn);
  Eigen::RowVectorXd without = Eigen::RowVectorXd::Zero(mdp.n_states);
  without[s] = 1.0;

  double r0 = 0.0;
  for (int sn = 0; sn < mdp.n_states; ++sn) r0 += mdp.p(s, a, sn) * mdp.r(s, a, sn);

  std::vector<double> chi;
  chi.push_back(r0 - r_pi[s]);
  without = without * p_pi;
  for (int l = 1; l <= max_l; ++l) {
    chi.push_back(with_action.dot(r_pi) - without.dot(r_pi));
    with_action = with_action * p_pi;
    without = without * p_pi;
  }
  return chi;
}

TabularMdp shape_mdp(const TabularMdp& mdp, const Vec& phi, double gamma) {
  require_dim(phi.size(), mdp.n_states, "shape_mdp potential");
  Vec potential = phi;
  for (int s : mdp.terminal_states) potential[s] = 0.0;
  TabularMdp out = mdp;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int sn = 0; sn < mdp.n_states; ++sn) {
        out.r(s, a, sn) = mdp.r(s, a, sn) + gamma * potential[sn] - potential[s];
      }
    }
  }
  return out;
}

// ------------------------------------------------------- natural gradient

Vec expected_visits(const TabularMdp& mdp, const Mat& probs, int horizon) {
  const Mat p_pi = policy_transition(mdp, probs);
  Eigen::RowVectorXd d = mdp.initial_dist.transpose();
  Vec visits = Vec::Zero(mdp.n_states);
  for (int t = 0; t < horizon; ++t) {
    for (int s : mdp.terminal_states) d[s] = 0.0;
    visits += d.transpose();
    d = d * p_pi;
  }
  return visits;
}

Mat dense_fisher(const TabularPolicy& tp, const Vec& state_weights) {
  const long n = tp.param_count();
  Mat f = Mat::Zero(n, n);
  for (Eigen::Index s = 0; s < tp.probs.rows(); ++s) {
    if (state_weights[s] == 0.0) continue;
    for (Eigen::Index a = 0; a < tp.probs.cols(); ++a) {
      const Vec& psi = tp.scores[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      f += state_weights[s] * tp.probs(s, a) * psi * psi.transpose();
    }
  }
  return f;
}

Vec weighted_gradient(const TabularPolicy& tp, const Vec& state_weights, const Mat& adv) {
  Vec g = Vec::Zero(tp.param_count());
  for (Eigen::Index s = 0; s < tp.probs.rows(); ++s) {
    for (Eigen::Index a = 0; a < tp.probs.cols(); ++a) {
      g += state_weights[s] * tp.probs(s, a) * adv(s, a) *
           tp.scores[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    }
  }
  return g;
}

Vec pseudo_inverse_solve(const Mat& f, const Vec& g, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(f);
  const Vec& lambda = eig.eigenvalues();
  const double cutoff = rel_tol * std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  const Vec coeffs = eig.eigenvectors().transpose() * g;
  Vec scaled = Vec::Zero(coeffs.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > cutoff) scaled[i] = coeffs[i] / lambda[i];
  }
  return eig.eigenvectors() * scaled;
}

CompatibleFit compatible_features_natural_gradient(std::span<const Vec> scores, std::span<const double> advantages,
                                                   std::span<const double> weights) {
  if (scores.size() != advantages.size()) throw DimensionError("compatible_features: scores/advantages mismatch");
  if (!weights.empty() && weights.size() != scores.size()) throw DimensionError("compatible_features: weights");
  if (scores.empty()) throw std::invalid_argument("compatible_features: empty design");
  const auto n = static_cast<Eigen::Index>(scores.size());
  const Eigen::Index d = scores.front().size();
  Mat design(n, d);
  Vec target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double w = weights.empty() ? 1.0 : std::sqrt(weights[k]);
    require_dim(scores[k].size(), d, "compatible_features score");
    design.row(i) = w * scores[k].transpose();
    target[i] = w * advantages[k];
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod;
  cod.setThreshold(1e-10);
  cod.compute(design);
  CompatibleFit fit;
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < d;
  fit.r = cod.solve(target);
  return fit;
}

CompatibleFit compatible_features_enumerated(const TabularPolicy& tp, const Vec& state_weights, const Mat& adv) {
  std::vector<Vec> scores;
  std::vector<double> targets, weights;
  for (Eigen::Index s = 0; s < tp.probs.rows(); ++s) {
    for (Eigen::Index a = 0; a < tp.probs.cols(); ++a) {
      const double w = state_weights[s] * tp.probs(s, a);
      if (w == 0.0) continue;
      scores.push_back(tp.scores[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]);
      targets.push_back(adv(s, a));
      weights.push_back(w);
    }
  }
  return compatible_features_natural_gradient(scores, targets, weights);
}

// ------------------------------------------------------------ generators

namespace {

void normalize(double* p, int n) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += p[i];
  for (int i = 0; i < n; ++i) p[i] /= total;
}

}  // namespace

TabularMdp random_absorbing_mdp(Rng& rng, int n_states, int n_actions) {
  if (n_states < 2) throw std::invalid_argument("random_absorbing_mdp: need at least 2 states");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  TabularMdp mdp = TabularMdp::zeros(n_states, n_actions);
  const int terminal = n_states - 1;
  mdp.terminal_states.insert(terminal);
  for (int s = 0; s < terminal; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      std::vector<double> w(static_cast<std::size_t>(n_states), 0.0);
      for (int sn = s + 1; sn < n_states; ++sn) w[static_cast<std::size_t>(sn)] = unit(rng) < 0.25 ? 0.0 : unit(rng);
      w[static_cast<std::size_t>(s + 1 + static_cast<int>(unit(rng) * (n_states - s - 1)) % (n_states - s - 1))] += 0.1;
      normalize(w.data(), n_states);
      for (int sn = 0; sn < n_states; ++sn) {
        mdp.p(s, a, sn) = w[static_cast<std::size_t>(sn)];
        mdp.r(s, a, sn) = reward(rng);
      }
    }
  }
  for (int s = 0; s < terminal; ++s) mdp.initial_dist[s] = 0.2 + unit(rng);
  normalize(mdp.initial_dist.data(), n_states);
  mdp.horizon_cap = n_states;
  mdp.close_terminals();
  mdp.validate();
  return mdp;
}

TabularMdp random_recurrent_mdp(Rng& rng, int n_states, int n_actions) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  TabularMdp mdp = TabularMdp::zeros(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      for (int sn = 0; sn < n_states; ++sn) {
        mdp.p(s, a, sn) = 0.05 + unit(rng);
        mdp.r(s, a, sn) = reward(rng);
      }
      normalize(&mdp.transition[mdp.index(s, a, 0)], n_states);
    }
    mdp.initial_dist[s] = 0.2 + unit(rng);
  }
  normalize(mdp.initial_dist.data(), n_states);
  mdp.validate();
  return mdp;
}

TabularMdp bias_exposure_mdp() {
  TabularMdp mdp = TabularMdp::zeros(4, 2);
  mdp.terminal_states.insert(3);
  mdp.p(0, 0, 1) = 0.9;
  mdp.p(0, 0, 2) = 0.1;
  mdp.p(0, 1, 1) = 0.1;
  mdp.p(0, 1, 2) = 0.9;
  for (int a = 0; a < 2; ++a) {
    mdp.p(1, a, 3) = 1.0;
    mdp.p(2, a, 3) = 1.0;
  }
  mdp.r(1, 0, 3) = 1.0;
  mdp.r(2, 1, 3) = 2.0;
  mdp.initial_dist[0] = 1.0;
  mdp.horizon_cap = 3;
  mdp.close_terminals();
  mdp.validate();
  return mdp;
}

}  // namespace gae::oracle
