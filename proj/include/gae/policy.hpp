#pragma once

#include "gae/common.hpp"
#include "gae/nn.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gae::policy {

struct ActionSample {
  Vec action;
  double log_prob = 0.0;
};

// A parameterized stochastic policy pi_theta(a | s). The object holds only the
// architecture; parameters are passed in as flat vectors so that old and new
// parameter sets can be compared side by side.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;

  virtual std::string kind() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual long param_count() const = 0;
  virtual const nn::MlpSpec& net_spec() const = 0;
  virtual Vec init_params(Rng& rng) const = 0;

  virtual ActionSample sample(const Vec& theta, const Vec& state, Rng& rng) const = 0;
  // Most likely action: the Gaussian mean, or the argmax category.
  virtual Vec greedy_action(const Vec& theta, const Vec& state) const = 0;
  virtual double log_prob(const Vec& theta, const Vec& state, const Vec& action) const = 0;
  virtual Vec log_prob_grad(const Vec& theta, const Vec& state, const Vec& action) const = 0;

  // KL(pi_old(.|s) || pi_new(.|s)) and its gradient with respect to theta_new.
  virtual double kl(const Vec& theta_old, const Vec& theta_new, const Vec& state) const = 0;
  virtual Vec kl_grad(const Vec& theta_old, const Vec& theta_new, const Vec& state) const = 0;

  // out += scale * F_s v, F_s being the Fisher information of pi_theta(.|s),
  // written in Gauss-Newton form J^T M J with J the net Jacobian.
  virtual void fisher_accumulate(const Vec& theta, const Vec& state, const Vec& v, Vec& out,
                                 double scale) const = 0;
};

// Diagonal Gaussian with a state-independent log standard deviation.
// theta = [mean-net parameters, log_std (action_dim entries)].
class GaussianPolicy final : public StochasticPolicy {
 public:
  explicit GaussianPolicy(nn::MlpSpec mean_spec, double init_log_std = 0.0);

  std::string kind() const override { return "gaussian_policy"; }
  int state_dim() const override { return spec_.input_dim; }
  int action_dim() const override { return spec_.output_dim; }
  long param_count() const override { return spec_.param_count() + spec_.output_dim; }
  const nn::MlpSpec& net_spec() const override { return spec_; }
  // Mean net uses the standard init with the output layer scaled by 0.01.
  Vec init_params(Rng& rng) const override;

  ActionSample sample(const Vec& theta, const Vec& state, Rng& rng) const override;
  Vec greedy_action(const Vec& theta, const Vec& state) const override { return mean(theta, state); }
  double log_prob(const Vec& theta, const Vec& state, const Vec& action) const override;
  Vec log_prob_grad(const Vec& theta, const Vec& state, const Vec& action) const override;
  double kl(const Vec& theta_old, const Vec& theta_new, const Vec& state) const override;
  Vec kl_grad(const Vec& theta_old, const Vec& theta_new, const Vec& state) const override;
  void fisher_accumulate(const Vec& theta, const Vec& state, const Vec& v, Vec& out, double scale) const override;

  Vec mean(const Vec& theta, const Vec& state) const;
  Vec log_std(const Vec& theta) const { return theta.tail(action_dim()); }

 private:
  Vec net_params(const Vec& theta) const;

  nn::MlpSpec spec_;
  double init_log_std_;
};

// Softmax over the outputs of a logits net. Actions are one-element vectors
// holding the category index.
class CategoricalPolicy final : public StochasticPolicy {
 public:
  explicit CategoricalPolicy(nn::MlpSpec logits_spec, double init_scale = 0.01);

  std::string kind() const override { return "categorical_policy"; }
  int state_dim() const override { return spec_.input_dim; }
  int action_dim() const override { return 1; }
  int n_actions() const { return spec_.output_dim; }
  long param_count() const override { return spec_.param_count(); }
  const nn::MlpSpec& net_spec() const override { return spec_; }
  Vec init_params(Rng& rng) const override;

  ActionSample sample(const Vec& theta, const Vec& state, Rng& rng) const override;
  Vec greedy_action(const Vec& theta, const Vec& state) const override;
  double log_prob(const Vec& theta, const Vec& state, const Vec& action) const override;
  Vec log_prob_grad(const Vec& theta, const Vec& state, const Vec& action) const override;
  double kl(const Vec& theta_old, const Vec& theta_new, const Vec& state) const override;
  Vec kl_grad(const Vec& theta_old, const Vec& theta_new, const Vec& state) const override;
  void fisher_accumulate(const Vec& theta, const Vec& state, const Vec& v, Vec& out, double scale) const override;

  Vec probabilities(const Vec& theta, const Vec& state) const;

 private:
  int action_index(const Vec& action) const;

  nn::MlpSpec spec_;
  double init_scale_;
};

// Linear softmax policy over one-hot tabular states (no hidden layers).
CategoricalPolicy tabular_softmax(int n_states, int n_actions);

Vec softmax(const Vec& logits);

double mean_kl(const StochasticPolicy& pi, const Vec& theta_old, const Vec& theta_new, std::span<const Vec> states,
               Exec exec = Exec::Parallel);

Vec mean_kl_gradient(const StochasticPolicy& pi, const Vec& theta_old, const Vec& theta_new,
                     std::span<const Vec> states, Exec exec = Exec::Parallel);

// (F + damping I) v, F being the state-averaged Fisher matrix at theta, which
// equals the Hessian of mean_kl(theta, .) at theta.
Vec fisher_vector_product(const StochasticPolicy& pi, const Vec& theta, std::span<const Vec> states, const Vec& v,
                          double damping = 1e-5, Exec exec = Exec::Parallel);

nn::Checkpoint to_checkpoint(const StochasticPolicy& pi, const Vec& theta);
// Rebuilds the policy object described by a checkpoint; theta is returned via out.
std::unique_ptr<StochasticPolicy> from_checkpoint(const nn::Checkpoint& ckpt, Vec& theta);

}  // namespace gae::policy
