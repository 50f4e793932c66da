#pragma once

#include "gae/advantage.hpp"
#include "gae/common.hpp"
#include "gae/env.hpp"
#include "gae/nn.hpp"
#include "gae/policy.hpp"
#include "gae/trpo.hpp"
#include "gae/valuefit.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gae::harness {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when an iteration fails; the message carries the iteration index.
struct TrainingError : std::runtime_error {
  TrainingError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what), iteration(iteration) {}
  int iteration;
};

enum class BaselineMode { value_function, time_dependent, none };

std::string to_string(BaselineMode mode);
BaselineMode parse_baseline_mode(const std::string& text);

// Flat key=value configuration. Every field has a dotted key (see keys());
// the same names are accepted as command-line overrides.
struct ExperimentConfig {
  std::string env_name = "cartpole";  // cartpole | tabular
  std::string env_file;               // tabular MDP file
  int max_episode_steps = 1000;

  std::vector<int> policy_hidden;       // empty: linear policy
  double policy_init_log_std = 0.0;     // Gaussian policies only
  std::vector<int> value_hidden{20};

  advantage::GaeConfig gae;
  double lam_v = 1.0;  // 1: Monte Carlo value targets, else TD(lam_v)
  trpo::TrustRegionConfig trpo;
  valuefit::ValueFitConfig vf;

  // Exactly one of these must be positive.
  long trajectories_per_batch = 20;
  long batch_timesteps = 0;

  int iterations = 100;
  std::uint64_t seed = 0;
  bool normalize_advantages = true;
  BaselineMode baseline = BaselineMode::value_function;
  bool parallel = true;
  int threads = 0;  // 0: OpenMP default

  std::string out;         // CSV path for train
  std::string checkpoint;  // policy checkpoint written after training

  void validate() const;
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  Exec exec() const { return parallel ? Exec::Parallel : Exec::Serial; }
};

// Lines are `key = value`; blank lines and `#` comments are skipped.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path);
void write_config(std::ostream& out, const ExperimentConfig& config);

struct IterationRecord {
  int iter = 0;
  double mean_cost = 0.0;  // minus the mean undiscounted episode reward
  double mean_ep_len = 0.0;
  double kl = 0.0;
  double surrogate_improve = 0.0;
  double vf_loss_pre = 0.0;  // mean squared error against the value targets
  double vf_loss_post = 0.0;
  double wall_s = 0.0;
  long timesteps = 0;
  int episodes = 0;
};

// Equal in every field except wall time.
bool same_outcome(const IterationRecord& a, const IterationRecord& b);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const IterationRecord& rec);

std::unique_ptr<env::Env> make_env(const ExperimentConfig& config);
std::unique_ptr<policy::StochasticPolicy> make_policy(const ExperimentConfig& config, const env::Env& env);
nn::MlpSpec value_spec(const ExperimentConfig& config, const env::Env& env);

// Everything an observer may want to look at after one iteration.
struct IterationEvent {
  int iteration = 0;
  const Vec* theta_before = nullptr;
  const Vec* theta_after = nullptr;
  const Vec* phi_used = nullptr;  // value parameters that produced the advantages
  const Vec* phi_after = nullptr;
  const std::vector<advantage::ProcessedTrajectory>* batch = nullptr;
  const trpo::StepResult* step = nullptr;
  const IterationRecord* record = nullptr;
};

// Policy-then-value training loop. Each iteration collects a batch with the
// current policy, computes advantages from the value function left by the
// previous iteration, takes a TRPO step and then fits the value function.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const env::Env& environment() const { return *env_; }
  const policy::StochasticPolicy& policy() const { return *policy_; }
  const nn::MlpSpec& value_net() const { return value_spec_; }
  const Vec& theta() const { return theta_; }
  const Vec& phi() const { return phi_; }
  int iterations_done() const { return iter_; }

  void set_theta(const Vec& theta);
  void set_phi(const Vec& phi);
  void set_observer(std::function<void(const IterationEvent&)> observer) { observer_ = std::move(observer); }

  IterationRecord iterate();
  std::vector<IterationRecord> run();

 private:
  std::vector<advantage::ProcessedTrajectory> process_batch(std::vector<env::Trajectory> trajs) const;

  ExperimentConfig config_;
  std::unique_ptr<env::Env> env_;
  std::unique_ptr<policy::StochasticPolicy> policy_;
  nn::MlpSpec value_spec_;
  Vec theta_;
  Vec phi_;
  int iter_ = 0;
  std::function<void(const IterationEvent&)> observer_;
};

struct TrainResult {
  std::vector<IterationRecord> records;
  Vec theta;
  Vec phi;
};

// Runs the configured number of iterations; writes config.out (CSV) and
// config.checkpoint when they are set.
TrainResult train(const ExperimentConfig& config);

// Time-dependent baseline: b_t is the mean over the batch of the discounted
// return-to-go at step t, over the trajectories that last beyond t.
std::vector<double> time_dependent_baseline(const std::vector<env::Trajectory>& batch, double gamma);

struct SweepCell {
  int gamma_index = 0;
  int lambda_index = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  std::vector<std::vector<IterationRecord>> runs;  // one per seed
  std::vector<IterationRecord> mean_curve;         // seed-averaged
  double cost_at_k = 0.0;
  std::vector<std::string> errors;
};

struct SweepResult {
  std::vector<double> gammas;
  std::vector<double> lambdas;
  int k = 20;
  std::vector<SweepCell> cells;  // gamma-major

  const SweepCell& cell(int gi, int li) const { return cells[static_cast<std::size_t>(gi * lambdas.size() + li)]; }
  // summary(gi, li) = seed-averaged cost after k iterations
  Mat summary() const;
  const SweepCell& best() const;
};

// Seed for run (seed, gamma index, lambda index) of a sweep.
inline std::uint64_t cell_seed(std::uint64_t seed, int gi, int li) {
  return derive_seed(seed, static_cast<std::uint64_t>(gi), static_cast<std::uint64_t>(li));
}

// Trains every (gamma, lambda, seed) combination. When out_dir is nonempty it
// receives one CSV per cell (seed-averaged curve) and summary.csv.
SweepResult sweep(const ExperimentConfig& base, const std::vector<double>& gammas,
                  const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds, int k = 20,
                  const std::string& out_dir = {});

void write_summary(std::ostream& out, const SweepResult& result);

struct EvalResult {
  double mean_return = 0.0;
  double mean_length = 0.0;
  std::vector<double> returns;
};

// Runs episodes with the greedy action (the Gaussian mean or the most likely
// category).
EvalResult evaluate_greedy(const env::Env& proto, const policy::StochasticPolicy& pi, const Vec& theta,
                           int episodes, int max_steps, std::uint64_t seed);

}  // namespace gae::harness
