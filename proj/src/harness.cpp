#include "gae/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace gae::harness {

std::string to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::value_function: return "value_function";
    case BaselineMode::time_dependent: return "time_dependent";
    case BaselineMode::none: return "none";
  }
  return "?";
}

BaselineMode parse_baseline_mode(const std::string& text) {
  if (text == "value_function") return BaselineMode::value_function;
  if (text == "time_dependent") return BaselineMode::time_dependent;
  if (text == "none") return BaselineMode::none;
  throw ConfigError("unknown baseline mode '" + text + "'");
}

// ----------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// Comma-separated layer widths; empty means no hidden layers.
std::vector<int> to_sizes(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(static_cast<int>(to_long(key, trim(item))));
  return out;
}

std::string from_sizes(const std::vector<int>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) out += (i ? "," : "") + std::to_string(sizes[i]);
  return out.empty() ? "none" : out;
}

std::string from_double(double x) {
  std::ostringstream out;
  out << std::setprecision(17) << x;
  return out.str();
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

#define GAE_DOUBLE(path) \
  Field { [](const ExperimentConfig& c) { return from_double(c.path); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.path = to_double(k, v); } }
#define GAE_INT(path) \
  Field { [](const ExperimentConfig& c) { return std::to_string(c.path); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
            c.path = static_cast<decltype(c.path)>(to_long(k, v)); } }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"env.name", {[](const ExperimentConfig& c) { return c.env_name; },
                    [](ExperimentConfig& c, const std::string&, const std::string& v) { c.env_name = v; }}},
      {"env.file", {[](const ExperimentConfig& c) { return c.env_file; },
                    [](ExperimentConfig& c, const std::string&, const std::string& v) { c.env_file = v; }}},
      {"env.max_steps", GAE_INT(max_episode_steps)},
      {"gae.gamma", GAE_DOUBLE(gae.gamma)},
      {"gae.lambda", GAE_DOUBLE(gae.lam)},
      {"gae.lam_v", GAE_DOUBLE(lam_v)},
      {"trpo.hidden", {[](const ExperimentConfig& c) { return from_sizes(c.policy_hidden); },
                       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                         c.policy_hidden = to_sizes(k, v);
                       }}},
      {"trpo.init_log_std", GAE_DOUBLE(policy_init_log_std)},
      {"trpo.epsilon", GAE_DOUBLE(trpo.epsilon)},
      {"trpo.cg_iters", GAE_INT(trpo.cg_iters)},
      {"trpo.cg_tol", GAE_DOUBLE(trpo.cg_tol)},
      {"trpo.damping", GAE_DOUBLE(trpo.damping)},
      {"trpo.backtrack_ratio", GAE_DOUBLE(trpo.backtrack_ratio)},
      {"trpo.max_backtracks", GAE_INT(trpo.max_backtracks)},
      {"vf.hidden", {[](const ExperimentConfig& c) { return from_sizes(c.value_hidden); },
                     [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       c.value_hidden = to_sizes(k, v);
                     }}},
      {"vf.epsilon", GAE_DOUBLE(vf.epsilon)},
      {"vf.cg_iters", GAE_INT(vf.cg_iters)},
      {"vf.cg_tol", GAE_DOUBLE(vf.cg_tol)},
      {"vf.damping", GAE_DOUBLE(vf.damping)},
      {"vf.steps", GAE_INT(vf.steps)},
      {"vf.backtrack_ratio", GAE_DOUBLE(vf.backtrack_ratio)},
      {"vf.max_backtracks", GAE_INT(vf.max_backtracks)},
      {"run.iterations", GAE_INT(iterations)},
      {"run.seed", {[](const ExperimentConfig& c) { return std::to_string(c.seed); },
                    [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }}},
      {"run.trajectories_per_batch", GAE_INT(trajectories_per_batch)},
      {"run.batch_timesteps", GAE_INT(batch_timesteps)},
      {"run.normalize_advantages",
       {[](const ExperimentConfig& c) { return std::string(c.normalize_advantages ? "true" : "false"); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.normalize_advantages = to_bool(k, v);
        }}},
      {"run.baseline", {[](const ExperimentConfig& c) { return to_string(c.baseline); },
                        [](ExperimentConfig& c, const std::string&, const std::string& v) {
                          c.baseline = parse_baseline_mode(v);
                        }}},
      {"run.parallel", {[](const ExperimentConfig& c) { return std::string(c.parallel ? "true" : "false"); },
                        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.parallel = to_bool(k, v);
                        }}},
      {"run.threads", GAE_INT(threads)},
      {"run.out", {[](const ExperimentConfig& c) { return c.out; },
                   [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = v; }}},
      {"run.checkpoint", {[](const ExperimentConfig& c) { return c.checkpoint; },
                          [](ExperimentConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }}},
  };
  return table;
}

#undef GAE_DOUBLE
#undef GAE_INT

}  // namespace

void ExperimentConfig::validate() const {
  if (env_name != "cartpole" && env_name != "tabular") throw ConfigError("env.name must be cartpole or tabular");
  if (env_name == "tabular" && env_file.empty()) throw ConfigError("env.file is required for tabular runs");
  if (max_episode_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (iterations < 1) throw ConfigError("run.iterations must be >= 1");
  if (trajectories_per_batch < 0 || batch_timesteps < 0) throw ConfigError("batch sizes must be non-negative");
  if ((trajectories_per_batch > 0) == (batch_timesteps > 0)) {
    throw ConfigError("set exactly one of run.trajectories_per_batch and run.batch_timesteps");
  }
  if (!(lam_v >= 0.0 && lam_v <= 1.0)) throw ConfigError("gae.lam_v must lie in [0, 1]");
  for (int h : policy_hidden) {
    if (h < 1) throw ConfigError("trpo.hidden sizes must be positive");
  }
  for (int h : value_hidden) {
    if (h < 1) throw ConfigError("vf.hidden sizes must be positive");
  }
  if (threads < 0) throw ConfigError("run.threads must be >= 0");
  try {
    gae.validate();
    trpo.validate();
    vf.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

std::string ExperimentConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  auto config = parse_config(in);
  // Relative MDP paths are resolved against the config file's directory.
  if (!config.env_file.empty() && std::filesystem::path(config.env_file).is_relative()) {
    const auto candidate = std::filesystem::path(path).parent_path() / config.env_file;
    if (std::filesystem::exists(candidate)) config.env_file = candidate.string();
  }
  return config;
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& key : ExperimentConfig::keys()) out << key << " = " << config.get(key) << '\n';
}

// ---------------------------------------------------------------- records

bool same_outcome(const IterationRecord& a, const IterationRecord& b) {
  return a.iter == b.iter && a.mean_cost == b.mean_cost && a.mean_ep_len == b.mean_ep_len && a.kl == b.kl &&
         a.surrogate_improve == b.surrogate_improve && a.vf_loss_pre == b.vf_loss_pre &&
         a.vf_loss_post == b.vf_loss_post && a.timesteps == b.timesteps && a.episodes == b.episodes;
}

void write_csv_header(std::ostream& out) {
  out << "iter,mean_cost,mean_ep_len,kl,surrogate_improve,vf_loss_pre,vf_loss_post,wall_s\n";
}

void write_csv_row(std::ostream& out, const IterationRecord& rec) {
  out << rec.iter << ',' << std::setprecision(10) << rec.mean_cost << ',' << rec.mean_ep_len << ',' << rec.kl << ','
      << rec.surrogate_improve << ',' << rec.vf_loss_pre << ',' << rec.vf_loss_post << ',' << rec.wall_s << '\n';
}

// ------------------------------------------------------------- factories

std::unique_ptr<env::Env> make_env(const ExperimentConfig& config) {
  if (config.env_name == "cartpole") {
    env::CartPoleParams params;
    params.time_limit = config.max_episode_steps;
    return std::make_unique<env::CartPole>(params);
  }
  if (config.env_name == "tabular") return std::make_unique<env::TabularEnv>(env::load_tabular_mdp(config.env_file));
  throw ConfigError("unknown environment '" + config.env_name + "'");
}

std::unique_ptr<policy::StochasticPolicy> make_policy(const ExperimentConfig& config, const env::Env& e) {
  if (const auto* tab = dynamic_cast<const env::TabularEnv*>(&e)) {
    return std::make_unique<policy::CategoricalPolicy>(
        nn::MlpSpec{tab->state_dim(), config.policy_hidden, tab->mdp().n_actions});
  }
  return std::make_unique<policy::GaussianPolicy>(nn::MlpSpec{e.state_dim(), config.policy_hidden, e.action_dim()},
                                                  config.policy_init_log_std);
}

nn::MlpSpec value_spec(const ExperimentConfig& config, const env::Env& e) {
  return nn::MlpSpec{e.state_dim(), config.value_hidden, 1};
}

// ----------------------------------------------------------------- trainer

Trainer::Trainer(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  env_ = make_env(config_);
  policy_ = make_policy(config_, *env_);
  value_spec_ = value_spec(config_, *env_);
  Rng policy_rng(derive_seed(config_.seed, 0x9011));
  theta_ = policy_->init_params(policy_rng);
  Rng value_rng(derive_seed(config_.seed, 0x7a1e));
  phi_ = nn::init_params(value_spec_, value_rng);
}

void Trainer::set_theta(const Vec& theta) {
  require_dim(theta.size(), policy_->param_count(), "Trainer::set_theta");
  theta_ = theta;
}

void Trainer::set_phi(const Vec& phi) {
  require_dim(phi.size(), value_spec_.param_count(), "Trainer::set_phi");
  phi_ = phi;
}

std::vector<double> time_dependent_baseline(const std::vector<env::Trajectory>& batch, double gamma) {
  std::vector<double> sum, count;
  for (const auto& traj : batch) {
    const auto ret = advantage::discounted_cumsum(traj.rewards, gamma);
    if (ret.size() > sum.size()) {
      sum.resize(ret.size(), 0.0);
      count.resize(ret.size(), 0.0);
    }
    for (std::size_t t = 0; t < ret.size(); ++t) {
      sum[t] += ret[t];
      count[t] += 1.0;
    }
  }
  for (std::size_t t = 0; t < sum.size(); ++t) sum[t] /= count[t];
  return sum;
}

std::vector<advantage::ProcessedTrajectory> Trainer::process_batch(std::vector<env::Trajectory> trajs) const {
  std::vector<advantage::ProcessedTrajectory> out;
  out.reserve(trajs.size());
  const Exec exec = config_.exec();

  if (config_.baseline == BaselineMode::value_function) {
    for (auto& traj : trajs) {
      auto values = valuefit::predict(value_spec_, phi_, traj.states, exec);
      out.push_back(advantage::process(std::move(traj), std::move(values), config_.gae, config_.lam_v));
    }
    return out;
  }

  // Without a state-dependent baseline the advantage is the discounted
  // return-to-go, minus the per-timestep batch mean in time_dependent mode.
  const auto baseline = config_.baseline == BaselineMode::time_dependent
                            ? time_dependent_baseline(trajs, config_.gae.gamma)
                            : std::vector<double>{};
  for (auto& traj : trajs) {
    advantage::ProcessedTrajectory p;
    const auto ret = advantage::discounted_cumsum(traj.rewards, config_.gae.gamma);
    p.advantages = ret;
    if (!baseline.empty()) {
      for (std::size_t t = 0; t < ret.size(); ++t) p.advantages[t] -= baseline[t];
    }
    p.value_targets = ret;
    p.values.assign(traj.states.size(), 0.0);
    p.trajectory = std::move(traj);
    out.push_back(std::move(p));
  }
  return out;
}

IterationRecord Trainer::iterate() {
  const int iteration = iter_;
  const auto start = std::chrono::steady_clock::now();
  const Exec exec = config_.exec();
  try {
    // (1) rollouts with the current policy
    const auto batch_seed = derive_seed(config_.seed, 0xba7c, static_cast<std::uint64_t>(iteration));
    auto trajs = config_.trajectories_per_batch > 0
                     ? env::rollout_batch(*env_, *policy_, theta_, static_cast<int>(config_.trajectories_per_batch),
                                          config_.max_episode_steps, batch_seed, exec)
                     : env::rollout_timesteps(*env_, *policy_, theta_, config_.batch_timesteps,
                                              config_.max_episode_steps, batch_seed, exec);

    IterationRecord rec;
    rec.iter = iteration;
    rec.episodes = static_cast<int>(trajs.size());
    double total_reward = 0.0;
    for (const auto& traj : trajs) {
      total_reward += traj.total_reward();
      rec.timesteps += traj.length();
    }
    rec.mean_cost = -total_reward / static_cast<double>(trajs.size());
    rec.mean_ep_len = static_cast<double>(rec.timesteps) / static_cast<double>(trajs.size());

    // (2)-(3) residuals and advantages from the value function of the previous iteration
    const Vec phi_used = phi_;
    auto batch = process_batch(std::move(trajs));
    if (config_.normalize_advantages) advantage::standardize_advantages(batch);

    // (4) policy step
    const Vec theta_before = theta_;
    const auto samples = trpo::flatten(batch);
    const auto step = trpo::trpo_step(*policy_, theta_, samples, config_.trpo, exec);
    theta_ = step.theta;
    rec.kl = step.diagnostics.kl;
    rec.surrogate_improve = step.diagnostics.surrogate_improvement;

    // (5) value fit on the targets of this batch
    if (config_.baseline == BaselineMode::value_function) {
      std::vector<Vec> states;
      std::vector<double> targets, old_values;
      states.reserve(samples.states.size());
      for (const auto& p : batch) {
        for (long t = 0; t < p.trajectory.length(); ++t) {
          states.push_back(p.trajectory.states[static_cast<std::size_t>(t)]);
          targets.push_back(p.value_targets[static_cast<std::size_t>(t)]);
          old_values.push_back(p.values[static_cast<std::size_t>(t)]);
        }
      }
      const auto fit = valuefit::fit_value_function(value_spec_, phi_, states, targets, config_.vf, exec);
      phi_ = fit.params;
      const auto new_values = valuefit::predict(value_spec_, phi_, states, exec);
      rec.vf_loss_pre = valuefit::compute_sigma_sq(old_values, targets);
      rec.vf_loss_post = valuefit::compute_sigma_sq(new_values, targets);
    }

    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++iter_;
    if (observer_) {
      IterationEvent event;
      event.iteration = iteration;
      event.theta_before = &theta_before;
      event.theta_after = &theta_;
      event.phi_used = &phi_used;
      event.phi_after = &phi_;
      event.batch = &batch;
      event.step = &step;
      event.record = &rec;
      observer_(event);
    }
    return rec;
  } catch (const TrainingError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainingError(iteration, e.what());
  }
}

std::vector<IterationRecord> Trainer::run() {
  std::vector<IterationRecord> records;
  while (iter_ < config_.iterations) records.push_back(iterate());
  return records;
}

TrainResult train(const ExperimentConfig& config) {
  Trainer trainer(config);
  std::ofstream csv;
  if (!config.out.empty()) {
    csv.open(config.out);
    if (!csv) throw ConfigError("cannot write '" + config.out + "'");
    write_csv_header(csv);
  }
  TrainResult result;
  while (trainer.iterations_done() < config.iterations) {
    result.records.push_back(trainer.iterate());
    if (csv.is_open()) {
      write_csv_row(csv, result.records.back());
      csv.flush();
    }
  }
  result.theta = trainer.theta();
  result.phi = trainer.phi();
  if (!config.checkpoint.empty()) nn::save_checkpoint(config.checkpoint, policy::to_checkpoint(trainer.policy(), result.theta));
  return result;
}

// ------------------------------------------------------------------- sweep

namespace {

std::vector<IterationRecord> average_curves(const std::vector<std::vector<IterationRecord>>& runs) {
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.size());
  std::vector<IterationRecord> mean(len);
  for (std::size_t i = 0; i < len; ++i) {
    double n = 0.0;
    IterationRecord& m = mean[i];
    m.iter = static_cast<int>(i);
    for (const auto& r : runs) {
      if (i >= r.size()) continue;
      const auto& x = r[i];
      m.mean_cost += x.mean_cost;
      m.mean_ep_len += x.mean_ep_len;
      m.kl += x.kl;
      m.surrogate_improve += x.surrogate_improve;
      m.vf_loss_pre += x.vf_loss_pre;
      m.vf_loss_post += x.vf_loss_post;
      m.wall_s += x.wall_s;
      m.timesteps += x.timesteps;
      m.episodes += x.episodes;
      n += 1.0;
    }
    m.mean_cost /= n;
    m.mean_ep_len /= n;
    m.kl /= n;
    m.surrogate_improve /= n;
    m.vf_loss_pre /= n;
    m.vf_loss_post /= n;
    m.wall_s /= n;
  }
  return mean;
}

std::string cell_name(double gamma, double lambda) {
  std::ostringstream out;
  out << "cell_g" << gamma << "_l" << lambda << ".csv";
  return out.str();
}

}  // namespace

Mat SweepResult::summary() const {
  Mat grid(static_cast<Eigen::Index>(gammas.size()), static_cast<Eigen::Index>(lambdas.size()));
  for (const auto& c : cells) grid(c.gamma_index, c.lambda_index) = c.cost_at_k;
  return grid;
}

const SweepCell& SweepResult::best() const {
  const SweepCell* best = nullptr;
  for (const auto& c : cells) {
    if (!std::isfinite(c.cost_at_k)) continue;
    if (best == nullptr || c.cost_at_k < best->cost_at_k) best = &c;
  }
  if (best == nullptr) throw std::runtime_error("sweep: every cell failed");
  return *best;
}

SweepResult sweep(const ExperimentConfig& base, const std::vector<double>& gammas, const std::vector<double>& lambdas,
                  const std::vector<std::uint64_t>& seeds, int k, const std::string& out_dir) {
  if (gammas.empty() || lambdas.empty() || seeds.empty()) throw ConfigError("sweep: empty gamma, lambda or seed list");
  if (k < 1) throw ConfigError("sweep: k must be >= 1");
  base.validate();
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  SweepResult result;
  result.gammas = gammas;
  result.lambdas = lambdas;
  result.k = k;
  for (int gi = 0; gi < static_cast<int>(gammas.size()); ++gi) {
    for (int li = 0; li < static_cast<int>(lambdas.size()); ++li) {
      SweepCell cell;
      cell.gamma_index = gi;
      cell.lambda_index = li;
      cell.gamma = gammas[static_cast<std::size_t>(gi)];
      cell.lambda = lambdas[static_cast<std::size_t>(li)];
      for (const auto seed : seeds) {
        ExperimentConfig config = base;
        config.gae.gamma = cell.gamma;
        config.gae.lam = cell.lambda;
        config.seed = cell_seed(seed, gi, li);
        config.out.clear();
        config.checkpoint.clear();
        try {
          Trainer trainer(config);
          cell.runs.push_back(trainer.run());
        } catch (const std::exception& e) {
          cell.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
        }
      }
      cell.mean_curve = average_curves(cell.runs);
      if (cell.runs.empty()) {
        cell.cost_at_k = std::numeric_limits<double>::quiet_NaN();
      } else {
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(k), cell.mean_curve.size()) - 1;
        cell.cost_at_k = cell.mean_curve[idx].mean_cost;
      }
      if (!out_dir.empty()) {
        std::ofstream csv(std::filesystem::path(out_dir) / cell_name(cell.gamma, cell.lambda));
        write_csv_header(csv);
        for (const auto& rec : cell.mean_curve) write_csv_row(csv, rec);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  if (!out_dir.empty()) {
    std::ofstream summary(std::filesystem::path(out_dir) / "summary.csv");
    write_summary(summary, result);
  }
  return result;
}

void write_summary(std::ostream& out, const SweepResult& result) {
  out << "gamma\\lambda";
  for (double lam : result.lambdas) out << ',' << lam;
  out << '\n';
  const Mat grid = result.summary();
  for (std::size_t gi = 0; gi < result.gammas.size(); ++gi) {
    out << result.gammas[gi];
    for (std::size_t li = 0; li < result.lambdas.size(); ++li) {
      out << ',' << std::setprecision(10) << grid(static_cast<Eigen::Index>(gi), static_cast<Eigen::Index>(li));
    }
    out << '\n';
  }
}

// -------------------------------------------------------------------- eval

EvalResult evaluate_greedy(const env::Env& proto, const policy::StochasticPolicy& pi, const Vec& theta, int episodes,
                           int max_steps, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_greedy: episodes must be >= 1");
  EvalResult result;
  double total_len = 0.0;
  for (int i = 0; i < episodes; ++i) {
    auto e = proto.clone();
    Vec state = e->reset(derive_seed(seed, static_cast<std::uint64_t>(i)));
    double ret = 0.0;
    int steps = 0;
    while (!e->done() && steps < max_steps) {
      const auto next = e->step(pi.greedy_action(theta, state));
      ret += next.reward;
      state = next.next_state;
      ++steps;
    }
    result.returns.push_back(ret);
    total_len += steps;
  }
  for (double r : result.returns) result.mean_return += r;
  result.mean_return /= episodes;
  result.mean_length = total_len / episodes;
  return result;
}

}  // namespace gae::harness
