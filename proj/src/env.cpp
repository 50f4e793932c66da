#include "gae/env.hpp"

#include "gae/parallel.hpp"
#include "gae/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gae::env {

// ---------------------------------------------------------------- CartPole

CartPole::CartPole(CartPoleParams params) : params_(params) {
  if (params_.substeps < 1 || params_.dt <= 0.0) throw std::invalid_argument("CartPole: bad integration settings");
}

Vec CartPole::reset(std::uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> noise(-params_.init_noise, params_.init_noise);
  for (int i = 0; i < 4; ++i) state_[i] = noise(rng_);
  steps_ = 0;
  done_ = false;
  return state_;
}

void CartPole::set_state(const Vec& state) {
  require_dim(state.size(), 4, "CartPole::set_state");
  state_ = state;
  steps_ = 0;
  done_ = false;
}

Vec CartPole::derivative(const Vec& s, double force) const {
  const double total_mass = params_.cart_mass + params_.pole_mass;
  const double pml = params_.pole_mass * params_.half_length;
  const double sin_t = std::sin(s[2]);
  const double cos_t = std::cos(s[2]);
  const double temp = (force + pml * s[3] * s[3] * sin_t) / total_mass;
  const double theta_acc = (params_.gravity * sin_t - cos_t * temp) /
                           (params_.half_length * (4.0 / 3.0 - params_.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pml * theta_acc * cos_t / total_mass;
  Vec d(4);
  d << s[1], x_acc, s[3], theta_acc;
  return d;
}

Vec CartPole::advance(const Vec& state, double force) const {
  Vec s = state;
  const double h = params_.dt / params_.substeps;
  for (int k = 0; k < params_.substeps; ++k) {
    const Vec d = derivative(s, force);
    s[1] += h * d[1];
    s[0] += h * s[1];
    s[3] += h * d[3];
    s[2] += h * s[3];
  }
  return s;
}

double CartPole::energy(const Vec& s) const {
  const double m = params_.pole_mass;
  const double l = params_.half_length;
  const double total_mass = params_.cart_mass + m;
  const double kinetic = 0.5 * total_mass * s[1] * s[1] + m * l * s[1] * s[3] * std::cos(s[2]) +
                         0.5 * (4.0 / 3.0) * m * l * l * s[3] * s[3];
  return kinetic + m * params_.gravity * l * std::cos(s[2]);
}

EnvStep CartPole::step(const Vec& action) {
  if (done_) throw UsageError("CartPole::step called on a finished episode; call reset first");
  require_dim(action.size(), 1, "CartPole action");
  if (!std::isfinite(action[0])) throw std::invalid_argument("CartPole: non-finite action");
  const double force = std::clamp(action[0], -params_.max_force, params_.max_force);
  state_ = advance(state_, force);
  ++steps_;

  EnvStep out;
  out.next_state = state_;
  out.terminal = std::abs(state_[2]) > params_.angle_limit || std::abs(state_[0]) > params_.position_limit;
  out.reward = out.terminal ? 0.0 : 1.0;
  out.truncated = !out.terminal && steps_ >= params_.time_limit;
  done_ = out.terminal || out.truncated;
  return out;
}

// -------------------------------------------------------------- TabularMdp

TabularMdp TabularMdp::zeros(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMdp: need at least one state and action");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  const auto n = static_cast<std::size_t>(n_states) * n_actions * n_states;
  mdp.transition.assign(n, 0.0);
  mdp.reward.assign(n, 0.0);
  mdp.initial_dist = Vec::Zero(n_states);
  return mdp;
}

void TabularMdp::close_terminals() {
  for (int s : terminal_states) {
    for (int a = 0; a < n_actions; ++a) {
      for (int sn = 0; sn < n_states; ++sn) {
        p(s, a, sn) = sn == s ? 1.0 : 0.0;
        r(s, a, sn) = 0.0;
      }
    }
  }
}

void TabularMdp::validate() const {
  const auto n = static_cast<std::size_t>(n_states) * n_actions * n_states;
  if (n_states < 1 || n_actions < 1 || transition.size() != n || reward.size() != n ||
      initial_dist.size() != n_states) {
    throw std::invalid_argument("TabularMdp: inconsistent tensor sizes");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int sn = 0; sn < n_states; ++sn) {
        if (p(s, a, sn) < 0.0) throw std::invalid_argument("TabularMdp: negative probability");
        if (!std::isfinite(r(s, a, sn))) throw std::invalid_argument("TabularMdp: non-finite reward");
        total += p(s, a, sn);
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("TabularMdp: P[" + std::to_string(s) + "][" + std::to_string(a) +
                                    "] does not sum to 1");
      }
      if (is_terminal(s) && (p(s, a, s) != 1.0 || r(s, a, s) != 0.0)) {
        throw std::invalid_argument("TabularMdp: terminal state " + std::to_string(s) +
                                    " must be a zero-reward self loop");
      }
    }
  }
  if ((initial_dist.array() < 0.0).any() || std::abs(initial_dist.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("TabularMdp: initial distribution must sum to 1");
  }
  for (int s : terminal_states) {
    if (s < 0 || s >= n_states) throw std::invalid_argument("TabularMdp: terminal index out of range");
  }
}

namespace {

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

}  // namespace

TabularMdp parse_tabular_mdp(std::istream& in) {
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    return std::invalid_argument("tabular MDP line " + std::to_string(line_no) + ": " + why);
  };

  std::string line;
  TabularMdp mdp;
  bool have_header = false, have_init = false;
  std::vector<char> seen;

  while (std::getline(in, line)) {
    ++line_no;
    line = strip_comment(line);
    if (blank(line)) continue;
    std::istringstream ls(line);

    if (!have_header) {
      std::string w1, w2;
      int s = 0, a = 0;
      if (!(ls >> w1 >> s >> w2 >> a) || w1 != "states" || w2 != "actions") {
        throw fail("expected header 'states S actions A'");
      }
      if (s < 1 || a < 1) throw fail("state and action counts must be positive");
      mdp = TabularMdp::zeros(s, a);
      seen.assign(static_cast<std::size_t>(s) * a, 0);
      have_header = true;
      continue;
    }

    std::string first;
    ls >> first;
    if (first == "init:") {
      for (int s = 0; s < mdp.n_states; ++s) {
        if (!(ls >> mdp.initial_dist[s])) throw fail("init: expected " + std::to_string(mdp.n_states) + " values");
      }
      have_init = true;
    } else if (first == "terminal:") {
      for (int s; ls >> s;) {
        if (s < 0 || s >= mdp.n_states) throw fail("terminal state out of range");
        mdp.terminal_states.insert(s);
      }
    } else if (first == "horizon:") {
      if (!(ls >> mdp.horizon_cap) || mdp.horizon_cap < 1) throw fail("bad horizon");
    } else {
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw fail("expected 's a : s' p r ; ...'");
      std::istringstream head(line.substr(0, colon));
      int s = -1, a = -1;
      if (!(head >> s >> a) || s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions) {
        throw fail("bad state/action pair");
      }
      auto& mark = seen[static_cast<std::size_t>(s) * mdp.n_actions + a];
      if (mark) throw fail("duplicate row for state/action pair");
      mark = 1;
      std::istringstream body(line.substr(colon + 1));
      std::string entry;
      while (std::getline(body, entry, ';')) {
        if (blank(entry)) continue;
        std::istringstream es(entry);
        int sn = -1;
        double prob = 0.0, rew = 0.0;
        if (!(es >> sn >> prob >> rew) || sn < 0 || sn >= mdp.n_states) throw fail("bad transition entry");
        mdp.p(s, a, sn) += prob;
        mdp.r(s, a, sn) = rew;
      }
    }
  }
  if (!have_header) throw std::invalid_argument("tabular MDP: missing header");
  if (!have_init) throw std::invalid_argument("tabular MDP: missing init line");
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (!seen[static_cast<std::size_t>(s) * mdp.n_actions + a]) {
        throw std::invalid_argument("tabular MDP: no row for state " + std::to_string(s) + " action " +
                                    std::to_string(a));
      }
    }
  }
  mdp.close_terminals();
  mdp.validate();
  return mdp;
}

TabularMdp load_tabular_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_tabular_mdp(in);
}

void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp) {
  out << std::setprecision(17);
  out << "states " << mdp.n_states << " actions " << mdp.n_actions << "\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      out << s << " " << a << " :";
      bool first = true;
      for (int sn = 0; sn < mdp.n_states; ++sn) {
        if (mdp.p(s, a, sn) == 0.0) continue;
        out << (first ? " " : " ; ") << sn << " " << mdp.p(s, a, sn) << " " << mdp.r(s, a, sn);
        first = false;
      }
      out << "\n";
    }
  }
  out << "init:";
  for (int s = 0; s < mdp.n_states; ++s) out << " " << mdp.initial_dist[s];
  out << "\nterminal:";
  for (int s : mdp.terminal_states) out << " " << s;
  out << "\nhorizon: " << mdp.horizon_cap << "\n";
}

// -------------------------------------------------------------- TabularEnv

namespace {

int sample_index(const double* probs, int n, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (int i = 0; i < n; ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return last_positive;
}

}  // namespace

TabularEnv::TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

Vec TabularEnv::one_hot(int s) const {
  Vec v = Vec::Zero(mdp_.n_states);
  v[s] = 1.0;
  return v;
}

Vec TabularEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  state_ = sample_index(mdp_.initial_dist.data(), mdp_.n_states, rng_);
  steps_ = 0;
  done_ = mdp_.is_terminal(state_);
  return one_hot(state_);
}

EnvStep TabularEnv::step(const Vec& action) {
  if (done_) throw UsageError("TabularEnv::step called on a finished episode; call reset first");
  require_dim(action.size(), 1, "TabularEnv action");
  const long a = std::lround(action[0]);
  if (a < 0 || a >= mdp_.n_actions) throw std::invalid_argument("TabularEnv: action index out of range");
  const int act = static_cast<int>(a);
  const int next = sample_index(&mdp_.transition[mdp_.index(state_, act, 0)], mdp_.n_states, rng_);

  EnvStep out;
  out.reward = mdp_.r(state_, act, next);
  state_ = next;
  ++steps_;
  out.next_state = one_hot(state_);
  out.terminal = mdp_.is_terminal(state_);
  out.truncated = !out.terminal && steps_ >= mdp_.horizon_cap;
  done_ = out.terminal || out.truncated;
  return out;
}

// ----------------------------------------------------------------- rollout

double Trajectory::total_reward() const {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

Trajectory rollout(Env& env, const policy::StochasticPolicy& pi, const Vec& theta, int max_steps,
                   std::uint64_t seed) {
  if (max_steps < 1) throw std::invalid_argument("rollout: max_steps must be >= 1");
  Rng rng(derive_seed(seed, 0x5eed));
  Trajectory traj;
  traj.states.push_back(env.reset(seed));
  if (env.done()) {
    traj.terminal = true;
    return traj;
  }
  for (int t = 0; t < max_steps; ++t) {
    auto sample = pi.sample(theta, traj.states.back(), rng);
    const EnvStep step = env.step(sample.action);
    traj.actions.push_back(std::move(sample.action));
    traj.log_probs.push_back(sample.log_prob);
    traj.rewards.push_back(step.reward);
    traj.states.push_back(step.next_state);
    if (step.terminal) {
      traj.terminal = true;
      break;
    }
    if (step.truncated) break;
  }
  return traj;
}

std::vector<Trajectory> rollout_batch(const Env& proto, const policy::StochasticPolicy& pi, const Vec& theta,
                                      int n_trajectories, int max_steps, std::uint64_t base_seed, Exec exec) {
  std::vector<Trajectory> out(static_cast<std::size_t>(std::max(0, n_trajectories)));
  parallel::for_each_index(exec, n_trajectories, [&](long i) {
    auto env = proto.clone();
    out[static_cast<std::size_t>(i)] = rollout(*env, pi, theta, max_steps, derive_seed(base_seed, i));
  });
  return out;
}

std::vector<Trajectory> rollout_timesteps(const Env& proto, const policy::StochasticPolicy& pi, const Vec& theta,
                                          long min_timesteps, int max_steps, std::uint64_t base_seed, Exec exec) {
  constexpr int kChunk = 16;
  std::vector<Trajectory> out;
  long collected = 0;
  while (collected < min_timesteps) {
    std::vector<Trajectory> chunk(kChunk);
    const auto offset = static_cast<long>(out.size());
    parallel::for_each_index(exec, kChunk, [&](long i) {
      auto env = proto.clone();
      chunk[static_cast<std::size_t>(i)] = rollout(*env, pi, theta, max_steps, derive_seed(base_seed, offset + i));
    });
    for (auto& traj : chunk) {
      if (collected >= min_timesteps) break;
      collected += std::max(1L, traj.length());
      out.push_back(std::move(traj));
    }
  }
  return out;
}

}  // namespace gae::env
