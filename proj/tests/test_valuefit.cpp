#include "gae/valuefit.hpp"

#include "problems.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace gae;
using namespace gae::testing;

namespace {

// Dense Jacobian of the predictions with respect to the parameters, by central differences.
Mat fd_jacobian(const nn::MlpSpec& spec, const Vec& params, std::span<const Vec> states) {
  Mat j(static_cast<long>(states.size()), params.size());
  const double h = 1e-5;
  for (long c = 0; c < params.size(); ++c) {
    Vec p = params, m = params;
    p[c] += h;
    m[c] -= h;
    const auto vp = valuefit::predict(spec, p, states);
    const auto vm = valuefit::predict(spec, m, states);
    for (long r = 0; r < j.rows(); ++r) j(r, c) = (vp[static_cast<std::size_t>(r)] - vm[static_cast<std::size_t>(r)]) / (2 * h);
  }
  return j;
}

double gaussian_kl(double mu1, double var1, double mu2, double var2) {
  return 0.5 * std::log(var2 / var1) + (var1 + (mu1 - mu2) * (mu1 - mu2)) / (2 * var2) - 0.5;
}

double sum_sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(SigmaSq, Examples) {
  EXPECT_EQ(valuefit::compute_sigma_sq(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0);
  EXPECT_EQ(valuefit::compute_sigma_sq(std::vector<double>{0, 0}, std::vector<double>{1, -1}), 1.0);
  EXPECT_THROW(valuefit::compute_sigma_sq(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(valuefit::compute_sigma_sq(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST(SigmaSq, MatchesDirectFormula) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = uniform_int(rng, 1, 40);
    const Vec a = normal_vec(rng, n), b = normal_vec(rng, n);
    const std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
    ASSERT_NEAR(valuefit::compute_sigma_sq(va, vb), (a - b).squaredNorm() / n, 1e-12);
  }
}

TEST(Constraint, EqualsMeanGaussianKl) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = uniform_int(rng, 1, 30);
    const double var = uniform(rng, 0.1, 5.0);
    std::vector<double> old_v, new_v;
    double kl = 0.0;
    for (int i = 0; i < n; ++i) {
      old_v.push_back(uniform(rng, -3, 3));
      new_v.push_back(uniform(rng, -3, 3));
      kl += gaussian_kl(old_v.back(), var, new_v.back(), var);
    }
    ASSERT_NEAR(valuefit::value_constraint(old_v, new_v, var), kl / n, 1e-10);
  }
}

TEST(GaussNewton, MatchesFiniteDifferenceJacobian) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_value_problem(rng);
    p.states.resize(std::min<std::size_t>(p.states.size(), 30));
    const valuefit::GaussNewton gn(p.spec, p.params, p.states);
    const Mat j = fd_jacobian(p.spec, p.params, p.states);
    const Vec v = normal_vec(rng, p.params.size());
    const Vec expected = j.transpose() * (j * v) / static_cast<double>(p.states.size());
    ASSERT_LT(rel_error(gn.apply(v), expected), 1e-4);
    EXPECT_LT((gn.apply(v, 0.3) - gn.apply(v) - 0.3 * v).norm(), 1e-12 * (1 + v.norm()));
  }
}

TEST(GaussNewton, WeightedGradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_value_problem(rng);
    const std::vector<double> w = [&] {
      std::vector<double> out;
      for (std::size_t i = 0; i < p.states.size(); ++i) out.push_back(uniform(rng, -1, 1));
      return out;
    }();
    const valuefit::GaussNewton gn(p.spec, p.params, p.states);
    const Vec fd = fd_gradient(
        [&](const Vec& phi) {
          const auto v = valuefit::predict(p.spec, phi, p.states);
          return std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
        },
        p.params);
    ASSERT_LT(rel_error(gn.weighted_gradient(w), fd), 1e-6);
  }
}

TEST(GaussNewton, SerialAndParallelAgree) {
  Rng rng(5);
  auto p = random_value_problem(rng);
  const Vec v = normal_vec(rng, p.params.size());
  EXPECT_EQ(valuefit::GaussNewton(p.spec, p.params, p.states, Exec::Serial).apply(v),
            valuefit::GaussNewton(p.spec, p.params, p.states, Exec::Parallel).apply(v));
  EXPECT_EQ(valuefit::predict(p.spec, p.params, p.states, Exec::Serial),
            valuefit::predict(p.spec, p.params, p.states, Exec::Parallel));
}

TEST(ValueStep, PerfectFitIsANoOp) {
  Rng rng(6);
  auto p = random_value_problem(rng);
  const auto targets = valuefit::predict(p.spec, p.params, p.states);
  const auto res = valuefit::value_trust_region_step(p.spec, p.params, p.states, targets, {});
  EXPECT_TRUE(res.diagnostics.skipped);
  EXPECT_EQ(res.params, p.params);
}

// Linear model V = w.x + b with residuals orthogonal to the Jacobian columns:
// the gradient vanishes although the fit is imperfect.
TEST(ValueStep, StationaryPointIsANoOp) {
  Rng rng(7);
  const nn::MlpSpec spec{2, {}, 1};
  const Vec params = normal_vec(rng, spec.param_count());
  std::vector<Vec> states;
  for (int i = 0; i < 10; ++i) states.push_back(normal_vec(rng, 2));
  Mat j(10, 3);
  for (int i = 0; i < 10; ++i) j.row(i) << states[static_cast<std::size_t>(i)].transpose(), 1.0;
  const Vec z = normal_vec(rng, 10);
  const Vec resid = z - j * j.colPivHouseholderQr().solve(z);
  auto targets = valuefit::predict(spec, params, states);
  for (int i = 0; i < 10; ++i) targets[static_cast<std::size_t>(i)] += resid[i];

  // g is zero up to rounding, so any step taken is negligible
  const auto res = valuefit::value_trust_region_step(spec, params, states, targets, {});
  EXPECT_LT((res.params - params).norm(), 1e-10);
}

TEST(ValueStep, LinearModelFollowsNormalEquations) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int in = uniform_int(rng, 1, 4);
    const nn::MlpSpec spec{in, {}, 1};
    const Vec params = normal_vec(rng, spec.param_count());
    const int n = uniform_int(rng, 8, 30);
    std::vector<Vec> states;
    std::vector<double> targets;
    Mat j(n, spec.param_count());
    for (int i = 0; i < n; ++i) {
      states.push_back(normal_vec(rng, in));
      targets.push_back(uniform(rng, -2, 2));
      j.row(i) << states.back().transpose(), 1.0;
    }
    const auto v = valuefit::predict(spec, params, states);
    Vec r(n);
    for (int i = 0; i < n; ++i) r[i] = targets[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)];
    const Vec normal = (j.transpose() * j).ldlt().solve(j.transpose() * r);
    const auto res = valuefit::value_trust_region_step(spec, params, states, targets, {});
    ASSERT_LT(angle(res.direction, normal), 1e-4);
  }
}

TEST(ValueStep, ConstraintAndDescentOnRandomMlps) {
  Rng rng(9);
  int accepted = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_value_problem(rng);
    valuefit::ValueFitConfig cfg;
    cfg.epsilon = uniform(rng, 0.001, 0.2);
    const auto res = valuefit::value_trust_region_step(p.spec, p.params, p.states, p.targets, cfg);
    const auto v_old = valuefit::predict(p.spec, p.params, p.states);
    const auto v_new = valuefit::predict(p.spec, res.params, p.states);
    const double sigma_sq = valuefit::compute_sigma_sq(v_old, p.targets);
    ASSERT_LE(valuefit::value_constraint(v_old, v_new, sigma_sq), 1.2 * cfg.epsilon);
    ASSERT_LE(sum_sq(v_new, p.targets), sum_sq(v_old, p.targets));
    accepted += res.diagnostics.accepted ? 1 : 0;
  }
  EXPECT_GE(accepted, 45);
}

TEST(ValueStep, SingleStateMovesTowardTargetWithoutOvershoot) {
  const nn::MlpSpec spec{1, {}, 1};
  const Vec params = Vec::Zero(2);
  const std::vector<Vec> states(5, Vec::Ones(1));
  const std::vector<double> targets(5, 2.0);
  valuefit::ValueFitConfig cfg;
  cfg.epsilon = 0.01;
  const auto res = valuefit::value_trust_region_step(spec, params, states, targets, cfg);
  const double v = valuefit::predict(spec, res.params, states)[0];
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, 2.0);
  // |dV| = sqrt(2 eps) sigma on the boundary
  EXPECT_NEAR(v, std::sqrt(2 * cfg.epsilon) * 2.0, 1e-3);
}

TEST(FitValueFunction, ConstantModelApproachesTheMean) {
  Rng rng(10);
  const nn::MlpSpec spec{1, {}, 1};
  const std::vector<Vec> states(40, Vec::Zero(1));
  std::vector<double> targets;
  for (int i = 0; i < 40; ++i) targets.push_back(uniform(rng, 0, 10));
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / 40;
  valuefit::ValueFitConfig cfg;
  cfg.steps = 1;
  Vec params = Vec::Zero(2);
  double prev_gap = std::abs(mean);
  for (int round = 0; round < 30; ++round) {
    params = valuefit::fit_value_function(spec, params, states, targets, cfg).params;
    const double gap = std::abs(valuefit::predict(spec, params, states)[0] - mean);
    ASSERT_LE(gap, prev_gap + 1e-12);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 0.5 * std::abs(mean));
}

TEST(FitValueFunction, OneHotStatesConvergeToPerStateMeans) {
  Rng rng(11);
  const int n_states = 4;
  const nn::MlpSpec spec{n_states, {}, 1};
  std::vector<Vec> states;
  std::vector<double> targets;
  Vec sums = Vec::Zero(n_states), counts = Vec::Zero(n_states);
  for (int i = 0; i < 80; ++i) {
    const int s = uniform_int(rng, 0, n_states - 1);
    states.push_back(Vec::Unit(n_states, s));
    targets.push_back(s + uniform(rng, -1, 1));
    sums[s] += targets.back();
    counts[s] += 1;
  }
  valuefit::ValueFitConfig cfg;
  cfg.epsilon = 1.0;
  cfg.steps = 100;
  const auto fit = valuefit::fit_value_function(spec, Vec::Zero(spec.param_count()), states, targets, cfg);
  for (int s = 0; s < n_states; ++s) {
    if (counts[s] == 0) continue;
    const std::vector<Vec> one{Vec::Unit(n_states, s)};
    EXPECT_NEAR(valuefit::predict(spec, fit.params, one)[0], sums[s] / counts[s], 1e-3);
  }
}

TEST(ValueFitConfig, Validation) {
  valuefit::ValueFitConfig cfg;
  cfg.epsilon = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
