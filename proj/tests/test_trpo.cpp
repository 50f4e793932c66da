#include "gae/oracle.hpp"
#include "gae/trpo.hpp"

#include "problems.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace gae;
using namespace gae::testing;

namespace {

std::vector<advantage::ProcessedTrajectory> to_trajectories(const trpo::SampleBatch& b, int n_traj) {
  std::vector<advantage::ProcessedTrajectory> out(static_cast<std::size_t>(n_traj));
  for (long i = 0; i < b.size(); ++i) {
    auto& p = out[static_cast<std::size_t>(i % n_traj)];
    p.trajectory.states.push_back(b.states[static_cast<std::size_t>(i)]);
    p.trajectory.actions.push_back(b.actions[static_cast<std::size_t>(i)]);
    p.trajectory.log_probs.push_back(b.old_log_probs[i]);
    p.trajectory.rewards.push_back(0.0);
    p.advantages.push_back(b.advantages[i]);
  }
  for (auto& p : out) p.trajectory.states.push_back(p.trajectory.states.back());
  return out;
}

Mat dense_fisher_from_fvp(const policy::StochasticPolicy& pi, const Vec& theta, std::span<const Vec> states) {
  const long n = pi.param_count();
  Mat f(n, n);
  for (long j = 0; j < n; ++j) f.col(j) = policy::fisher_vector_product(pi, theta, states, Vec::Unit(n, j), 0.0);
  return f;
}

}  // namespace

TEST(Surrogate, AtOldParamsIsMeanAdvantage) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_policy_problem(rng);
    EXPECT_NEAR(trpo::surrogate_loss(*p.pi, p.theta, p.batch), p.batch.advantages.mean(), 1e-12);
  }
}

TEST(Surrogate, ZeroAdvantagesGiveZeroLossAndGradient) {
  Rng rng(2);
  auto p = random_policy_problem(rng);
  p.batch.advantages.setZero();
  const Vec other = p.theta + normal_vec(rng, p.theta.size(), 0.1);
  EXPECT_EQ(trpo::surrogate_loss(*p.pi, other, p.batch), 0.0);
  EXPECT_EQ(trpo::surrogate_gradient(*p.pi, other, p.batch), Vec::Zero(p.theta.size()));
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_policy_problem(rng);
    const Vec at = p.theta + normal_vec(rng, p.theta.size(), 0.05);
    const Vec fd = fd_gradient([&](const Vec& t) { return trpo::surrogate_loss(*p.pi, t, p.batch); }, at);
    ASSERT_LT(rel_error(trpo::surrogate_gradient(*p.pi, at, p.batch), fd), 1e-6);
  }
}

// grad L at theta_old is the score-weighted mean over timesteps, while the
// batch gradient averages over trajectories.
TEST(Surrogate, GradientAtOldParamsIsTheBatchGradient) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_policy_problem(rng);
    const int n_traj = uniform_int(rng, 1, 7);
    const auto trajs = to_trajectories(p.batch, n_traj);
    const Vec g_batch = advantage::batch_policy_gradient(trajs, *p.pi, p.theta).gradient;
    const Vec g_surr = trpo::surrogate_gradient(*p.pi, p.theta, p.batch);
    ASSERT_LT((g_surr - g_batch * n_traj / static_cast<double>(p.batch.size())).norm(), 1e-10 * (1 + g_surr.norm()));
  }
}

TEST(Flatten, PreservesOrderAndLogProbs) {
  Rng rng(5);
  auto p = random_policy_problem(rng);
  const auto trajs = to_trajectories(p.batch, 3);
  const auto flat = trpo::flatten(trajs);
  ASSERT_EQ(flat.size(), p.batch.size());
  long i = 0;
  for (const auto& t : trajs) {
    for (std::size_t k = 0; k < t.advantages.size(); ++k, ++i) {
      EXPECT_EQ(flat.states[static_cast<std::size_t>(i)], t.trajectory.states[k]);
      EXPECT_EQ(flat.old_log_probs[i], t.trajectory.log_probs[k]);
      EXPECT_EQ(flat.advantages[i], t.advantages[k]);
    }
  }
}

TEST(ConjugateGradient, IdentityConvergesInOneIteration) {
  Rng rng(6);
  const Vec b = normal_vec(rng, 7);
  const auto res = trpo::conjugate_gradient([](const Vec& v) { return v; }, b, 10, 1e-10);
  EXPECT_LT((res.x - b).norm(), 1e-14);
  EXPECT_EQ(res.iterations, 1);
}

TEST(ConjugateGradient, MatchesDenseSolve) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat m = normal_vec(rng, 64).reshaped(8, 8);
    const Mat a = m * m.transpose() + 0.5 * Mat::Identity(8, 8);
    const Vec b = normal_vec(rng, 8);
    const auto res = trpo::conjugate_gradient([&](const Vec& v) { return Vec(a * v); }, b, 50, 1e-14);
    const Vec x = a.ldlt().solve(b);
    ASSERT_LT((res.x - x).norm(), 1e-8 * (1 + x.norm()));
  }
}

TEST(ConjugateGradient, ZeroRightHandSide) {
  int calls = 0;
  const auto res = trpo::conjugate_gradient(
      [&](const Vec& v) {
        ++calls;
        return v;
      },
      Vec::Zero(4), 10, 1e-10);
  EXPECT_EQ(res.x, Vec::Zero(4));
  EXPECT_EQ(calls, 0);
}

TEST(ConjugateGradient, NonFiniteSignalsDivergence) {
  const auto bad = [](const Vec& v) { return Vec(v * std::numeric_limits<double>::quiet_NaN()); };
  EXPECT_THROW(trpo::conjugate_gradient(bad, Vec::Ones(3), 10, 1e-10), DivergenceError);
}

TEST(TrpoStep, ZeroGradientIsANoOp) {
  Rng rng(8);
  auto p = random_policy_problem(rng);
  p.batch.advantages.setZero();
  const auto res = trpo::trpo_step(*p.pi, p.theta, p.batch, {});
  EXPECT_EQ(res.theta, p.theta);
  EXPECT_TRUE(res.diagnostics.zero_gradient);
  EXPECT_FALSE(res.diagnostics.accepted);
}

TEST(TrpoStep, EmptyBatchRejected) {
  policy::GaussianPolicy pi(nn::MlpSpec{2, {}, 1});
  EXPECT_THROW(trpo::trpo_step(pi, Vec::Zero(pi.param_count()), trpo::SampleBatch{}, {}), std::invalid_argument);
}

TEST(TrpoStep, AcceptedStepsAreFeasibleAndImproving) {
  Rng rng(9);
  int accepted = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_policy_problem(rng);
    trpo::TrustRegionConfig cfg;
    cfg.epsilon = uniform(rng, 0.001, 0.1);
    const auto res = trpo::trpo_step(*p.pi, p.theta, p.batch, cfg);
    const double kl = policy::mean_kl(*p.pi, p.theta, res.theta, p.batch.states);
    ASSERT_LE(kl, cfg.epsilon + 1e-6);
    const double improve =
        trpo::surrogate_loss(*p.pi, res.theta, p.batch) - trpo::surrogate_loss(*p.pi, p.theta, p.batch);
    ASSERT_GE(improve, 0.0);
    if (res.diagnostics.accepted) {
      ++accepted;
      EXPECT_NEAR(res.diagnostics.kl, kl, 1e-12);
      EXPECT_NEAR(res.diagnostics.surrogate_improvement, improve, 1e-12);
    } else {
      EXPECT_EQ(res.theta, p.theta);
    }
  }
  EXPECT_GE(accepted, 45);
}

TEST(TrpoStep, FullStepKlMatchesQuadraticModel) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_policy_problem(rng, true);
    trpo::TrustRegionConfig cfg;
    cfg.epsilon = 0.01;
    cfg.cg_iters = 50;
    const auto res = trpo::trpo_step(*p.pi, p.theta, p.batch, cfg);
    ASSERT_GE(res.diagnostics.full_step_kl, 0.5 * cfg.epsilon);
    ASSERT_LE(res.diagnostics.full_step_kl, 1.5 * cfg.epsilon);
  }
}

// Categorical bandit with two logits: the state is the zero vector, so only
// the two bias parameters act. The Fisher matrix is singular and the natural
// gradient is the minimum-norm F^+ g.
TEST(TrpoStep, BanditDirectionIsTheNaturalGradient) {
  Rng rng(11);
  policy::CategoricalPolicy pi(nn::MlpSpec{1, {}, 2});
  for (int trial = 0; trial < 20; ++trial) {
    const Vec theta = normal_vec(rng, pi.param_count());
    trpo::SampleBatch batch;
    const int n = 64;
    batch.old_log_probs.resize(n);
    batch.advantages = normal_vec(rng, n);
    for (int i = 0; i < n; ++i) {
      batch.states.push_back(Vec::Zero(1));
      const auto s = pi.sample(theta, batch.states.back(), rng);
      batch.actions.push_back(s.action);
      batch.old_log_probs[i] = s.log_prob;
    }
    const auto res = trpo::trpo_step(pi, theta, batch, {});
    const Vec g = trpo::surrogate_gradient(pi, theta, batch);
    const Vec natural = oracle::pseudo_inverse_solve(dense_fisher_from_fvp(pi, theta, batch.states), g);
    ASSERT_LT(angle(res.direction, natural), 1e-4);
  }
}

TEST(TrpoStep, DirectionMatchesDenseSolveOnFullRankProblems) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_policy_problem(rng, true);
    trpo::TrustRegionConfig cfg;
    cfg.cg_iters = 100;
    cfg.damping = 0.0;
    const auto res = trpo::trpo_step(*p.pi, p.theta, p.batch, cfg);
    const Mat f = dense_fisher_from_fvp(*p.pi, p.theta, p.batch.states);
    const Vec g = trpo::surrogate_gradient(*p.pi, p.theta, p.batch);
    ASSERT_LT(angle(res.direction, f.ldlt().solve(g)), 1e-6);
  }
}

TEST(TrpoStep, SerialAndParallelAgree) {
  Rng rng(13);
  auto p = random_policy_problem(rng);
  const auto a = trpo::trpo_step(*p.pi, p.theta, p.batch, {}, Exec::Serial);
  const auto b = trpo::trpo_step(*p.pi, p.theta, p.batch, {}, Exec::Parallel);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(TrustRegionConfig, Validation) {
  trpo::TrustRegionConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.backtrack_ratio = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.cg_tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
