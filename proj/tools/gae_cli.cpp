#include "gae/certify.hpp"
#include "gae/harness.hpp"

#include <CLI11.hpp>

#include <omp.h>

#include <fstream>
#include <iostream>
#include <map>

using namespace gae;

namespace {

// Registers --<key> for every config key; the values are applied on top of
// the config file in apply_overrides.
void add_overrides(CLI::App* cmd, std::map<std::string, std::string>& overrides) {
  for (const auto& key : harness::ExperimentConfig::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "override " + key);
  }
}

harness::ExperimentConfig load_with_overrides(const std::string& path, const std::map<std::string, std::string>& overrides) {
  auto config = harness::load_config(path);
  for (const auto& [key, value] : overrides) config.set(key, value);
  config.validate();
  if (config.threads > 0) omp_set_num_threads(config.threads);
  return config;
}

int run_train(const std::string& path, const std::map<std::string, std::string>& overrides) {
  const auto config = load_with_overrides(path, overrides);
  harness::Trainer trainer(config);
  std::ofstream csv;
  if (!config.out.empty()) {
    csv.open(config.out);
    harness::write_csv_header(csv);
  }
  harness::write_csv_header(std::cout);
  while (trainer.iterations_done() < config.iterations) {
    const auto rec = trainer.iterate();
    harness::write_csv_row(std::cout, rec);
    if (csv.is_open()) {
      harness::write_csv_row(csv, rec);
      csv.flush();
    }
  }
  if (!config.checkpoint.empty()) {
    nn::save_checkpoint(config.checkpoint, policy::to_checkpoint(trainer.policy(), trainer.theta()));
    std::cerr << "checkpoint written to " << config.checkpoint << '\n';
  }
  return 0;
}

int run_sweep(const std::string& path, const std::map<std::string, std::string>& overrides,
              const std::vector<double>& gammas, const std::vector<double>& lambdas,
              const std::vector<std::uint64_t>& seeds, int k, const std::string& out_dir) {
  const auto config = load_with_overrides(path, overrides);
  const auto result = harness::sweep(config, gammas, lambdas, seeds, k, out_dir);
  int failures = 0;
  for (const auto& cell : result.cells) {
    for (const auto& err : cell.errors) {
      std::cerr << "cell gamma=" << cell.gamma << " lambda=" << cell.lambda << ": " << err << '\n';
      ++failures;
    }
  }
  std::cout << "cost after " << result.k << " iterations (rows: gamma, columns: lambda)\n";
  harness::write_summary(std::cout, result);
  const auto& best = result.best();
  std::cout << "best cell: gamma=" << best.gamma << " lambda=" << best.lambda << " cost=" << best.cost_at_k << '\n';
  return failures == 0 ? 0 : 1;
}

int run_verify(double tol) {
  certify::SuiteOptions options;
  options.tol = tol;
  const auto report = certify::run_suite(options);
  report.print(std::cout);
  const bool ok = report.all_pass();
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << '\n';
  return ok ? 0 : 1;
}

int run_eval(const std::string& checkpoint, int episodes, const std::string& config_path, std::uint64_t seed) {
  Vec theta;
  const auto pi = policy::from_checkpoint(nn::load_checkpoint(checkpoint), theta);
  harness::ExperimentConfig config;
  if (!config_path.empty()) config = harness::load_config(config_path);
  const auto env = harness::make_env(config);
  if (env->state_dim() != pi->state_dim()) {
    std::cerr << "checkpoint expects state dimension " << pi->state_dim() << ", environment has " << env->state_dim()
              << " (pass --config for tabular policies)\n";
    return 2;
  }
  const auto result = harness::evaluate_greedy(*env, *pi, theta, episodes, config.max_episode_steps, seed);
  std::cout << "episodes " << episodes << "\nmean_return " << result.mean_return << "\nmean_length "
            << result.mean_length << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Advantage estimation and trust-region policy optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;

  auto* train = app.add_subcommand("train", "train a policy and print one CSV row per iteration");
  train->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  add_overrides(train, overrides);

  std::vector<double> gammas, lambdas;
  std::vector<std::uint64_t> seeds;
  int k = 20;
  std::string out_dir;
  auto* sweep = app.add_subcommand("sweep", "train over a gamma x lambda grid, averaged over seeds");
  sweep->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--gammas", gammas, "discount factors")->required();
  sweep->add_option("--lambdas", lambdas, "GAE lambdas")->required();
  sweep->add_option("--seeds", seeds, "base seeds")->required();
  sweep->add_option("--k", k, "iteration at which the summary cost is read")->capture_default_str();
  sweep->add_option("--out-dir", out_dir, "directory for per-cell CSVs and summary.csv");
  add_overrides(sweep, overrides);

  double tol = 1e-9;
  auto* verify = app.add_subcommand("verify", "run the exact tabular certification suite");
  verify->add_option("--tol", tol, "bound on the gamma-just gap")->capture_default_str();

  std::string checkpoint;
  int episodes = 10;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "evaluate the greedy policy from a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "number of episodes")->required()->check(CLI::PositiveNumber);
  eval->add_option("--config", config_path, "config describing the environment (default: cart-pole)");
  eval->add_option("--seed", eval_seed, "seed for initial states")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config_path, overrides);
    if (*sweep) return run_sweep(config_path, overrides, gammas, lambdas, seeds, k, out_dir);
    if (*verify) return run_verify(tol);
    if (*eval) return run_eval(checkpoint, episodes, config_path, eval_seed);
  } catch (const harness::TrainingError& e) {
    std::cerr << "training aborted at " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
