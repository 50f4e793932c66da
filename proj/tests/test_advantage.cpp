#include "gae/advantage.hpp"
#include "gae/oracle.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace gae;
using namespace gae::testing;
using advantage::Seq;

namespace {

struct Instance {
  Seq rewards;
  Seq values;
  double gamma;
  double lam;
  bool terminal;
};

Instance random_instance(Rng& rng) {
  const int T = uniform_int(rng, 1, 12);
  Instance in;
  for (int t = 0; t < T; ++t) in.rewards.push_back(uniform(rng, -2, 2));
  for (int t = 0; t <= T; ++t) in.values.push_back(uniform(rng, -3, 3));
  in.gamma = uniform(rng, 0, 1);
  in.lam = uniform(rng, 0, 1);
  in.terminal = uniform_int(rng, 0, 1) == 1;
  return in;
}

// Sum_{l >= 0} w^l x_{t+l}, written as a double loop.
Seq direct_discounted_sum(const Seq& x, double w) {
  Seq out(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t l = 0; t + l < x.size(); ++l) out[t] += std::pow(w, static_cast<double>(l)) * x[t + l];
  }
  return out;
}

void expect_seq_near(const Seq& a, const Seq& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(TdResiduals, HandExample) {
  const Seq d = advantage::td_residuals(Seq{1, 1}, Seq{0.5, 0.5, 0}, 0.9, true);
  EXPECT_NEAR(d[0], 0.95, 1e-15);
  EXPECT_NEAR(d[1], 0.5, 1e-15);
}

TEST(TdResiduals, ZeroValuesGiveRewards) {
  Rng rng(1);
  auto in = random_instance(rng);
  const Seq zeros(in.values.size(), 0.0);
  EXPECT_EQ(advantage::td_residuals(in.rewards, zeros, in.gamma, in.terminal), in.rewards);
}

TEST(TdResiduals, TerminalIgnoresFinalValue) {
  const Seq a = advantage::td_residuals(Seq{1, 2}, Seq{0.3, 0.4, 99}, 0.9, true);
  const Seq b = advantage::td_residuals(Seq{1, 2}, Seq{0.3, 0.4, 0}, 0.9, true);
  EXPECT_EQ(a, b);
  const Seq c = advantage::td_residuals(Seq{1, 2}, Seq{0.3, 0.4, 99}, 0.9, false);
  EXPECT_NEAR(c[1], 2 + 0.9 * 99 - 0.4, 1e-12);
}

TEST(TdResiduals, LengthMismatchThrows) {
  EXPECT_THROW(advantage::td_residuals(Seq{1, 2}, Seq{0, 0}, 0.9, true), DimensionError);
  EXPECT_THROW(advantage::gae(Seq{1}, Seq{0, 0, 0}, {0.9, 0.5}, true), DimensionError);
}

TEST(TdResiduals, ExpectedResidualIsTheTrueAdvantage) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mdp = oracle::random_absorbing_mdp(rng, uniform_int(rng, 2, 5), uniform_int(rng, 2, 3));
    const auto pi = policy::tabular_softmax(mdp.n_states, mdp.n_actions);
    const auto tp = oracle::bind_one_hot(pi, normal_vec(rng, pi.param_count()), mdp);
    const double gamma = uniform(rng, 0.5, 1.0);
    const auto sol = oracle::solve_values(mdp, tp.probs, gamma);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_terminal(s)) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        double expected = 0.0;
        for (int sn = 0; sn < mdp.n_states; ++sn) {
          if (mdp.p(s, a, sn) == 0.0) continue;
          const Seq d = advantage::td_residuals(Seq{mdp.r(s, a, sn)}, Seq{sol.v[s], sol.v[sn]}, gamma,
                                                mdp.is_terminal(sn));
          expected += mdp.p(s, a, sn) * d[0];
        }
        ASSERT_NEAR(expected, sol.adv(s, a), 1e-12);
      }
    }
  }
}

TEST(KStep, HandExampleBothForms) {
  const Seq r{1, 1}, v{0.5, 0.5, 0};
  EXPECT_NEAR(advantage::k_step_advantage(r, v, 0.9, 2, true)[0], 1.4, 1e-15);
  EXPECT_NEAR(advantage::k_step_advantage_telescoped(r, v, 0.9, 2, true)[0], 1.4, 1e-15);
}

TEST(KStep, OneStepIsTdResidual) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_instance(rng);
    EXPECT_EQ(advantage::k_step_advantage(in.rewards, in.values, in.gamma, 1, in.terminal),
              advantage::td_residuals(in.rewards, in.values, in.gamma, in.terminal));
  }
}

TEST(KStep, LongHorizonIsReturnMinusBaseline) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_instance(rng);
    const int T = static_cast<int>(in.rewards.size());
    const Seq a = advantage::k_step_advantage(in.rewards, in.values, in.gamma, T, true);
    const Seq ret = direct_discounted_sum(in.rewards, in.gamma);
    for (int t = 0; t < T; ++t) ASSERT_NEAR(a[static_cast<std::size_t>(t)], ret[static_cast<std::size_t>(t)] - in.values[static_cast<std::size_t>(t)], 1e-12);
  }
}

TEST(KStep, ZeroKThrows) {
  EXPECT_THROW(advantage::k_step_advantage(Seq{1}, Seq{0, 0}, 0.9, 0, true), std::invalid_argument);
  EXPECT_THROW(advantage::k_step_advantage_telescoped(Seq{1}, Seq{0, 0}, 0.9, 0, true), std::invalid_argument);
}

TEST(KStep, TelescopingIdentityOnRandomInputs) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = random_instance(rng);
    const int k = uniform_int(rng, 1, 14);
    expect_seq_near(advantage::k_step_advantage(in.rewards, in.values, in.gamma, k, in.terminal),
                    advantage::k_step_advantage_telescoped(in.rewards, in.values, in.gamma, k, in.terminal), 1e-12);
  }
}

TEST(Gae, HandExample) {
  const Seq a = advantage::gae(Seq{1, 1}, Seq{0.5, 0.5, 0}, {0.9, 0.5}, true);
  EXPECT_NEAR(a[0], 1.175, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
}

TEST(Gae, SpecialCases) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    EXPECT_EQ(advantage::gae(in.rewards, in.values, {in.gamma, 0.0}, in.terminal),
              advantage::td_residuals(in.rewards, in.values, in.gamma, in.terminal));
    const Seq mc = advantage::gae(in.rewards, in.values, {in.gamma, 1.0}, true);
    const Seq ret = direct_discounted_sum(in.rewards, in.gamma);
    for (std::size_t t = 0; t < ret.size(); ++t) ASSERT_NEAR(mc[t], ret[t] - in.values[t], 1e-12);
  }
}

TEST(Gae, MatchesDirectDeltaSum) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng);
    const Seq delta = advantage::td_residuals(in.rewards, in.values, in.gamma, in.terminal);
    expect_seq_near(advantage::gae(in.rewards, in.values, {in.gamma, in.lam}, in.terminal),
                    direct_discounted_sum(delta, in.gamma * in.lam), 1e-12);
  }
}

// GAE is the (1 - lambda)-weighted mixture of k-step estimators; on a finite
// episode every k >= T - t gives the same estimator, which absorbs the tail weight.
TEST(Gae, EqualsExponentialMixtureOfKStepEstimators) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_instance(rng);
    const auto T = static_cast<int>(in.rewards.size());
    std::vector<Seq> by_k(static_cast<std::size_t>(T + 1));
    for (int k = 1; k <= T; ++k) {
      by_k[static_cast<std::size_t>(k)] =
          advantage::k_step_advantage_telescoped(in.rewards, in.values, in.gamma, k, in.terminal);
    }
    const Seq a = advantage::gae(in.rewards, in.values, {in.gamma, in.lam}, in.terminal);
    for (int t = 0; t < T; ++t) {
      const int K = T - t;
      double mix = 0.0;
      for (int k = 1; k < K; ++k) mix += (1 - in.lam) * std::pow(in.lam, k - 1) * by_k[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
      mix += std::pow(in.lam, K - 1) * by_k[static_cast<std::size_t>(K)][static_cast<std::size_t>(t)];
      ASSERT_NEAR(a[static_cast<std::size_t>(t)], mix, 1e-10);
    }
  }
}

TEST(Gae, ContinuousInLambda) {
  Rng rng(9);
  auto in = random_instance(rng);
  for (double lam : {0.0, 0.3, 0.999}) {
    const Seq a = advantage::gae(in.rewards, in.values, {in.gamma, lam}, in.terminal);
    const Seq b = advantage::gae(in.rewards, in.values, {in.gamma, lam + 1e-9}, in.terminal);
    for (std::size_t t = 0; t < a.size(); ++t) ASSERT_NEAR(a[t], b[t], 1e-7);
  }
  EXPECT_THROW(advantage::gae(in.rewards, in.values, {in.gamma, 1.5}, true), std::invalid_argument);
  EXPECT_THROW(advantage::gae(in.rewards, in.values, {-0.1, 0.5}, true), std::invalid_argument);
}

TEST(ValueTargets, HandExampleAndMyopic) {
  const Seq t = advantage::value_targets(Seq{1, 2, 3}, Seq{9, 9, 9, 9}, 0.5, 1.0, true);
  EXPECT_NEAR(t[0], 2.75, 1e-15);
  EXPECT_NEAR(t[1], 3.5, 1e-15);
  EXPECT_NEAR(t[2], 3.0, 1e-15);
  const Seq myopic = advantage::value_targets(Seq{1, 2, 3}, Seq{9, 9, 9, 9}, 0.0, 1.0, false);
  EXPECT_EQ(myopic, (Seq{1, 2, 3}));
}

TEST(ValueTargets, IdentitiesWithGae) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    const Seq mc = advantage::value_targets(in.rewards, in.values, in.gamma, 1.0, in.terminal);
    const Seq a1 = advantage::gae(in.rewards, in.values, {in.gamma, 1.0}, in.terminal);
    for (std::size_t t = 0; t < mc.size(); ++t) ASSERT_NEAR(mc[t] - in.values[t], a1[t], 1e-12);
    const Seq td = advantage::value_targets(in.rewards, in.values, in.gamma, in.lam, in.terminal);
    const Seq al = advantage::gae(in.rewards, in.values, {in.gamma, in.lam}, in.terminal);
    for (std::size_t t = 0; t < td.size(); ++t) ASSERT_NEAR(td[t], in.values[t] + al[t], 1e-12);
  }
}

TEST(ValueTargets, TruncatedEpisodeBootstraps) {
  const Seq t = advantage::value_targets(Seq{1, 1}, Seq{0, 0, 10}, 0.5, 1.0, false);
  EXPECT_NEAR(t[1], 1 + 0.5 * 10, 1e-15);
  EXPECT_NEAR(t[0], 1 + 0.5 * 6, 1e-15);
}

TEST(Shaping, ZeroPotentialAndValuePotential) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    const Seq zeros(in.values.size(), 0.0);
    EXPECT_EQ(advantage::shape_rewards(in.rewards, zeros, in.gamma, in.terminal), in.rewards);
    const Seq shaped = advantage::shape_rewards(in.rewards, in.values, in.gamma, in.terminal);
    expect_seq_near(shaped, advantage::td_residuals(in.rewards, in.values, in.gamma, in.terminal), 1e-15);
  }
}

TEST(Shaping, DiscountedShapedSumEqualsGae) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = random_instance(rng);
    const Seq shaped = advantage::shape_rewards(in.rewards, in.values, in.gamma, in.terminal);
    expect_seq_near(direct_discounted_sum(shaped, in.gamma * in.lam),
                    advantage::gae(in.rewards, in.values, {in.gamma, in.lam}, in.terminal), 1e-12);
  }
}

TEST(Standardize, MeanZeroStdOne) {
  Rng rng(13);
  std::vector<advantage::ProcessedTrajectory> batch(3);
  for (auto& p : batch) {
    for (int t = 0; t < 7; ++t) p.advantages.push_back(uniform(rng, -5, 8));
  }
  advantage::standardize_advantages(batch);
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& p : batch) {
    for (double a : p.advantages) {
      sum += a;
      sum_sq += a * a;
    }
  }
  EXPECT_NEAR(sum / 21, 0.0, 1e-12);
  EXPECT_NEAR(sum_sq / 21, 1.0, 1e-12);

  std::vector<advantage::ProcessedTrajectory> flat(1);
  flat[0].advantages = {2.0, 2.0};
  advantage::standardize_advantages(flat);
  EXPECT_EQ(flat[0].advantages, (Seq{2.0, 2.0}));
}

TEST(BatchPolicyGradient, ZeroAdvantagesAndSingleStep) {
  Rng rng(14);
  policy::GaussianPolicy pi(nn::MlpSpec{2, {}, 1});
  const Vec theta = normal_vec(rng, pi.param_count());
  env::Trajectory traj;
  traj.states = {random_vec(rng, 2), random_vec(rng, 2)};
  traj.actions = {random_vec(rng, 1)};
  traj.rewards = {1.0};
  traj.log_probs = {pi.log_prob(theta, traj.states[0], traj.actions[0])};
  traj.terminal = true;

  advantage::ProcessedTrajectory p;
  p.trajectory = traj;
  p.advantages = {0.0};
  std::vector<advantage::ProcessedTrajectory> batch{p};
  EXPECT_EQ(advantage::batch_policy_gradient(batch, pi, theta).gradient, Vec::Zero(pi.param_count()));

  batch[0].advantages = {1.7};
  const auto rep = advantage::batch_policy_gradient(batch, pi, theta);
  EXPECT_LT((rep.gradient - 1.7 * pi.log_prob_grad(theta, traj.states[0], traj.actions[0])).norm(), 1e-14);
  EXPECT_EQ(rep.timesteps, 1);
}

namespace {

// Every trajectory of an acyclic MDP under a one-hot tabular policy, with its probability.
void enumerate(const env::TabularMdp& mdp, const Mat& probs, env::Trajectory& cur, int s, double prob,
               std::vector<std::pair<double, env::Trajectory>>& out) {
  if (mdp.is_terminal(s)) {
    cur.terminal = true;
    out.emplace_back(prob, cur);
    return;
  }
  for (int a = 0; a < mdp.n_actions; ++a) {
    for (int sn = 0; sn < mdp.n_states; ++sn) {
      const double q = probs(s, a) * mdp.p(s, a, sn);
      if (q == 0.0) continue;
      cur.actions.push_back(Vec::Constant(1, a));
      cur.rewards.push_back(mdp.r(s, a, sn));
      cur.log_probs.push_back(std::log(probs(s, a)));
      cur.states.push_back(Vec::Unit(mdp.n_states, sn));
      enumerate(mdp, probs, cur, sn, prob * q, out);
      cur.actions.pop_back();
      cur.rewards.pop_back();
      cur.log_probs.pop_back();
      cur.states.pop_back();
    }
  }
}

}  // namespace

TEST(BatchPolicyGradient, ExactExpectationIsTheDiscountedGradient) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mdp = oracle::random_absorbing_mdp(rng, uniform_int(rng, 2, 4), uniform_int(rng, 2, 3));
    const auto pi = policy::tabular_softmax(mdp.n_states, mdp.n_actions);
    const Vec theta = normal_vec(rng, pi.param_count());
    const auto tp = oracle::bind_one_hot(pi, theta, mdp);
    const double gamma = uniform(rng, 0.6, 1.0);
    const auto sol = oracle::solve_values(mdp, tp.probs, gamma);

    std::vector<std::pair<double, env::Trajectory>> paths;
    for (int s0 = 0; s0 < mdp.n_states; ++s0) {
      if (mdp.initial_dist[s0] == 0.0) continue;
      env::Trajectory cur;
      cur.states.push_back(Vec::Unit(mdp.n_states, s0));
      enumerate(mdp, tp.probs, cur, s0, mdp.initial_dist[s0], paths);
    }
    Vec expected = Vec::Zero(pi.param_count());
    for (auto& [prob, traj] : paths) {
      Seq values;
      for (const auto& s : traj.states) {
        Eigen::Index idx;
        s.maxCoeff(&idx);
        values.push_back(sol.v[idx]);
      }
      std::vector<advantage::ProcessedTrajectory> batch{advantage::process(traj, values, {gamma, 1.0})};
      expected += prob * advantage::batch_policy_gradient(batch, pi, theta, Exec::Serial).gradient;
    }
    const Vec exact = oracle::exact_policy_gradient(mdp, tp, gamma, mdp.n_states);
    ASSERT_LT((expected - exact).norm(), 1e-10);
  }
}

TEST(BatchPolicyGradient, ParallelMatchesSerial) {
  Rng rng(16);
  policy::GaussianPolicy pi(nn::MlpSpec{3, {5}, 1});
  const Vec theta = normal_vec(rng, pi.param_count(), 0.5);
  std::vector<advantage::ProcessedTrajectory> batch(4);
  for (auto& p : batch) {
    const int T = uniform_int(rng, 50, 300);
    for (int t = 0; t <= T; ++t) p.trajectory.states.push_back(random_vec(rng, 3));
    for (int t = 0; t < T; ++t) {
      p.trajectory.actions.push_back(random_vec(rng, 1));
      p.advantages.push_back(uniform(rng, -1, 1));
    }
  }
  EXPECT_EQ(advantage::batch_policy_gradient(batch, pi, theta, Exec::Serial).gradient,
            advantage::batch_policy_gradient(batch, pi, theta, Exec::Parallel).gradient);
}
