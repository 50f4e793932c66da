#include "gae/certify.hpp"

#include "gae/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

namespace gae::certify {

bool Report::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.pass(); });
}

void Report::print(std::ostream& out) const {
  out << std::left << std::setw(34) << "check" << std::setw(30) << "detail" << std::right << std::setw(14) << "value"
      << std::setw(12) << "bound" << "  result\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(34) << r.check << std::setw(30) << r.detail << std::right << std::setw(14)
        << std::setprecision(4) << std::scientific << r.value << std::setw(12) << r.bound << std::defaultfloat;
    if (r.diagnostic) {
      out << "  info\n";
    } else {
      out << "  " << (r.expect_below ? "< " : "> ") << (r.pass() ? "PASS" : "FAIL") << '\n';
    }
  }
}

namespace {

using oracle::EstimatorKind;
using oracle::EstimatorTag;

struct Problem {
  env::TabularMdp mdp;
  policy::CategoricalPolicy pi;
  Vec theta;
  double gamma;
  int horizon;
};

Problem random_problem(Rng& rng) {
  std::uniform_int_distribution<int> n_states(2, 4), n_actions(2, 3);
  std::uniform_real_distribution<double> gamma(0.5, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto mdp = oracle::random_absorbing_mdp(rng, n_states(rng), n_actions(rng));
  auto pi = policy::tabular_softmax(mdp.n_states, mdp.n_actions);
  Vec theta(pi.param_count());
  for (auto& x : theta) x = normal(rng);
  const int horizon = mdp.n_states;
  const double g = gamma(rng);
  return Problem{std::move(mdp), std::move(pi), std::move(theta), g, horizon};
}

Vec random_vec(Rng& rng, int n, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double angle(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return (na == nb) ? 0.0 : M_PI / 2;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

}  // namespace

Report run_suite(const SuiteOptions& options) {
  Report report;
  Rng rng(options.seed);

  // gamma-just estimators on random absorbing MDPs
  const std::vector<std::pair<EstimatorKind, std::string>> just = {
      {EstimatorKind::of(EstimatorTag::discounted_return), "discounted return"},
      {EstimatorKind::of(EstimatorTag::q_value), "Q^{pi,gamma}"},
      {EstimatorKind::of(EstimatorTag::advantage), "A^{pi,gamma}"},
      {EstimatorKind::of(EstimatorTag::td_residual), "TD residual, true V"},
      {EstimatorKind::gae(1.0), "GAE(gamma,1), arbitrary V"},
      {EstimatorKind::gae(1.0), "GAE(gamma,1), history baseline"},
  };
  std::vector<double> worst(just.size(), 0.0);
  std::map<std::string, double> variance;
  for (int m = 0; m < options.n_mdps; ++m) {
    auto p = random_problem(rng);
    const auto tp = oracle::bind_one_hot(p.pi, p.theta, p.mdp);
    const auto sol = oracle::solve_values(p.mdp, tp.probs, p.gamma);
    const Vec arbitrary = random_vec(rng, p.mdp.n_states, 2.0);
    const Vec weights = random_vec(rng, 8, 1.0);
    const oracle::HistoryBaseline history = [&](std::span<const int> s, std::span<const int> a) {
      double b = weights[static_cast<Eigen::Index>(s.back() % 8)];
      for (int x : a) b += 0.1 * weights[static_cast<Eigen::Index>(x % 8)];
      return b * static_cast<double>(s.size());
    };
    for (std::size_t i = 0; i < just.size(); ++i) {
      const auto& kind = just[i].first;
      const Vec& v = kind.tag == EstimatorTag::td_residual ? sol.v : arbitrary;
      const auto baseline = i + 1 == just.size() ? history : oracle::HistoryBaseline{};
      const auto cert = oracle::certify_gamma_just(p.mdp, tp, kind, v, p.gamma, p.horizon, options.tol, baseline);
      worst[i] = std::max(worst[i], cert.gap);
    }
    // second moments for the variance table (first problem only, so rows are comparable)
    if (m == 0) {
      const std::vector<std::pair<EstimatorKind, std::string>> table = {
          {EstimatorKind::of(EstimatorTag::discounted_return), "discounted return"},
          {EstimatorKind::of(EstimatorTag::q_value), "Q^{pi,gamma}"},
          {EstimatorKind::of(EstimatorTag::advantage), "A^{pi,gamma}"},
          {EstimatorKind::of(EstimatorTag::td_residual), "TD residual, true V"},
          {EstimatorKind::gae(0.5), "GAE(gamma,0.5), true V"},
          {EstimatorKind::gae(1.0), "GAE(gamma,1), true V"},
      };
      for (const auto& [kind, name] : table) {
        variance[name] = oracle::exact_estimator_moments(p.mdp, tp, kind, sol.v, p.gamma, p.horizon).variance_trace;
      }
    }
  }
  for (std::size_t i = 0; i < just.size(); ++i) {
    report.rows.push_back({"gamma-just gap", just[i].second, worst[i], options.tol, true, false});
  }

  // an error in V at one state biases the TD residual but not GAE(gamma, 1)
  {
    const auto mdp = oracle::bias_exposure_mdp();
    const auto pi = policy::tabular_softmax(mdp.n_states, mdp.n_actions);
    Vec theta = random_vec(rng, static_cast<int>(pi.param_count()), 1.0);
    const auto tp = oracle::bind_one_hot(pi, theta, mdp);
    const double gamma = 0.9;
    Vec v = oracle::solve_values(mdp, tp.probs, gamma).v;
    v[1] += 0.5;
    const auto td = oracle::certify_gamma_just(mdp, tp, EstimatorKind::of(EstimatorTag::td_residual), v, gamma,
                                               mdp.horizon_cap, options.tol);
    const auto mc = oracle::certify_gamma_just(mdp, tp, EstimatorKind::gae(1.0), v, gamma, mdp.horizon_cap, options.tol);
    report.rows.push_back({"bias exposure", "TD residual, V off by 0.5", td.gap, 1e-3, false, false});
    report.rows.push_back({"bias exposure", "GAE(gamma,1), same V", mc.gap, options.tol, true, false});
  }

  // potential-based shaping leaves advantages unchanged
  {
    double adv_gap = 0.0, value_gap = 0.0, chi_gap = 0.0;
    for (int m = 0; m < options.n_mdps; ++m) {
      auto p = random_problem(rng);
      const auto tp = oracle::bind_one_hot(p.pi, p.theta, p.mdp);
      const auto sol = oracle::solve_values(p.mdp, tp.probs, p.gamma);
      const Vec phi = random_vec(rng, p.mdp.n_states, 3.0);
      const auto shaped = oracle::solve_values(oracle::shape_mdp(p.mdp, phi, p.gamma), tp.probs, p.gamma);
      adv_gap = std::max(adv_gap, (shaped.adv - sol.adv).cwiseAbs().maxCoeff());
      const auto by_value = oracle::shape_mdp(p.mdp, sol.v, p.gamma);
      value_gap = std::max(value_gap, oracle::solve_values(by_value, tp.probs, p.gamma).v.cwiseAbs().maxCoeff());
      for (int s = 0; s < p.mdp.n_states; ++s) {
        if (p.mdp.is_terminal(s)) continue;
        for (int a = 0; a < p.mdp.n_actions; ++a) {
          const auto chi = oracle::response_function(by_value, tp.probs, s, a, p.horizon);
          for (std::size_t l = 1; l < chi.size(); ++l) chi_gap = std::max(chi_gap, std::abs(chi[l]));
        }
      }
    }
    report.rows.push_back({"shaping invariance", "max |A~ - A|", adv_gap, options.identity_tol, true, false});
    report.rows.push_back({"shaping invariance", "Phi = V: max |V~|", value_gap, options.identity_tol, true, false});
    report.rows.push_back({"shaping invariance", "Phi = V: max |chi(l>=1)|", chi_gap, options.identity_tol, true, false});
  }

  // compatible-features least squares gives the natural gradient
  {
    double worst_angle = 0.0;
    for (int m = 0; m < 10; ++m) {
      auto p = random_problem(rng);
      const auto tp = oracle::bind_one_hot(p.pi, p.theta, p.mdp);
      const auto sol = oracle::solve_values(p.mdp, tp.probs, p.gamma);
      const Vec d = oracle::expected_visits(p.mdp, tp.probs, p.horizon);
      const Vec natural = oracle::pseudo_inverse_solve(oracle::dense_fisher(tp, d), oracle::weighted_gradient(tp, d, sol.adv));
      const auto fit = oracle::compatible_features_enumerated(tp, d, sol.adv);
      worst_angle = std::max(worst_angle, angle(fit.r, natural));
    }
    report.rows.push_back({"natural gradient", "angle(LS fit, F^+ g) [rad]", worst_angle, options.angle_tol, true, false});
  }

  for (const auto& [name, var] : variance) report.rows.push_back({"variance (trace)", name, var, 0.0, true, true});
  return report;
}

}  // namespace gae::certify
