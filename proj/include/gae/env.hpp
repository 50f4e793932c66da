#pragma once

#include "gae/common.hpp"

#include <iosfwd>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace gae::policy {
class StochasticPolicy;
}

namespace gae::env {

struct EnvStep {
  Vec next_state;
  double reward = 0.0;
  bool terminal = false;   // reached a true terminal (absorbing) state
  bool truncated = false;  // hit the environment's time limit
};

struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// Episodic environment. One instance must not be stepped from several threads
// at once; use clone() to give each worker its own copy.
class Env {
 public:
  virtual ~Env() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;

  // Samples an initial state. Seeds the instance's private RNG, so the whole
  // episode is a function of the seed and the actions.
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual EnvStep step(const Vec& action) = 0;
  // True once the episode has ended (terminal or truncated) and until reset.
  virtual bool done() const = 0;

  virtual std::unique_ptr<Env> clone() const = 0;
};

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double dt = 0.02;
  double max_force = 10.0;
  double angle_limit = 0.2095;  // 12 degrees
  double position_limit = 2.4;
  double init_noise = 0.05;
  int time_limit = 1000;
  // Semi-implicit Euler substeps per dt.
  int substeps = 50;
};

// Physical state order: cart position, cart velocity, pole angle, pole angular velocity.
class CartPole final : public Env {
 public:
  explicit CartPole(CartPoleParams params = {});

  int state_dim() const override { return 4; }
  int action_dim() const override { return 1; }
  Vec reset(std::uint64_t seed) override;
  EnvStep step(const Vec& action) override;
  bool done() const override { return done_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<CartPole>(*this); }

  const CartPoleParams& params() const { return params_; }
  const Vec& state() const { return state_; }
  void set_state(const Vec& state);
  int steps_taken() const { return steps_; }

  // Time derivative of the state under a horizontal force (no clipping).
  Vec derivative(const Vec& state, double force) const;
  // One dt of semi-implicit Euler (velocities first), split into substeps.
  Vec advance(const Vec& state, double force) const;
  double energy(const Vec& state) const;

 private:
  CartPoleParams params_;
  Vec state_ = Vec::Zero(4);
  int steps_ = 0;
  bool done_ = false;
  Rng rng_;
};

// Finite MDP with explicit transition and reward tensors, stored flat as
// [s][a][s'] in row-major order.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  Vec initial_dist;
  std::set<int> terminal_states;
  int horizon_cap = 1000;

  std::size_t index(int s, int a, int sn) const {
    return (static_cast<std::size_t>(s) * n_actions + a) * n_states + sn;
  }
  double p(int s, int a, int sn) const { return transition[index(s, a, sn)]; }
  double r(int s, int a, int sn) const { return reward[index(s, a, sn)]; }
  double& p(int s, int a, int sn) { return transition[index(s, a, sn)]; }
  double& r(int s, int a, int sn) { return reward[index(s, a, sn)]; }
  bool is_terminal(int s) const { return terminal_states.count(s) > 0; }

  static TabularMdp zeros(int n_states, int n_actions);
  // Makes every terminal state a zero-reward self loop.
  void close_terminals();
  // Throws std::invalid_argument when a distribution is off by more than 1e-12
  // or a terminal state is not a zero-reward self loop.
  void validate() const;
};

// Parses the plain-text MDP format:
//   states S actions A
//   s a : s'_1 p_1 r_1 ; s'_2 p_2 r_2 ; ...
//   init: p_0 ... p_{S-1}
//   terminal: i j ...
// Blank lines and '#' comments are ignored. An optional `horizon: H` line
// sets horizon_cap. Rows for terminal states may be omitted.
TabularMdp parse_tabular_mdp(std::istream& in);
TabularMdp load_tabular_mdp(const std::string& path);
void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp);

// States are presented to policies as one-hot vectors; actions as a
// one-element vector holding the action index.
class TabularEnv final : public Env {
 public:
  explicit TabularEnv(TabularMdp mdp);

  int state_dim() const override { return mdp_.n_states; }
  int action_dim() const override { return 1; }
  Vec reset(std::uint64_t seed) override;
  EnvStep step(const Vec& action) override;
  bool done() const override { return done_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<TabularEnv>(*this); }

  const TabularMdp& mdp() const { return mdp_; }
  int state_index() const { return state_; }
  Vec one_hot(int s) const;

 private:
  TabularMdp mdp_;
  int state_ = 0;
  int steps_ = 0;
  bool done_ = false;
  Rng rng_;
};

struct Trajectory {
  std::vector<Vec> states;  // T + 1 entries, including the final state
  std::vector<Vec> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;
  bool terminal = false;  // true only when the env reported a true terminal

  long length() const { return static_cast<long>(rewards.size()); }
  double total_reward() const;
};

Trajectory rollout(Env& env, const policy::StochasticPolicy& pi, const Vec& theta, int max_steps,
                   std::uint64_t seed);

// Collects n trajectories, trajectory i seeded with derive_seed(base_seed, i).
// The result does not depend on exec or on the number of threads.
std::vector<Trajectory> rollout_batch(const Env& proto, const policy::StochasticPolicy& pi, const Vec& theta,
                                      int n_trajectories, int max_steps, std::uint64_t base_seed,
                                      Exec exec = Exec::Parallel);

// Keeps adding trajectories until at least min_timesteps steps are collected.
std::vector<Trajectory> rollout_timesteps(const Env& proto, const policy::StochasticPolicy& pi, const Vec& theta,
                                          long min_timesteps, int max_steps, std::uint64_t base_seed,
                                          Exec exec = Exec::Parallel);

}  // namespace gae::env
