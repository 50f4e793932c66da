#pragma once

#include "gae/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace gae::certify {

// One line of the certification table. `value` is compared against `bound`
// from below (expect_below) or from above.
struct Row {
  std::string check;
  std::string detail;
  double value = 0.0;
  double bound = 0.0;
  bool expect_below = true;
  bool diagnostic = false;  // reported, never fails the suite
  bool pass() const { return diagnostic || (expect_below ? value < bound : value > bound); }
};

struct Report {
  std::vector<Row> rows;
  bool all_pass() const;
  void print(std::ostream& out) const;
};

struct SuiteOptions {
  double tol = 1e-9;        // gamma-just gap bound
  double identity_tol = 1e-12;
  double angle_tol = 1e-4;  // radians
  int n_mdps = 20;
  std::uint64_t seed = 20150608;
};

// Exact-enumeration checks on random tabular problems: gamma-just estimators,
// the biased TD residual, shaping invariance, natural-gradient equivalence,
// and a per-estimator variance table.
Report run_suite(const SuiteOptions& options = {});

}  // namespace gae::certify
