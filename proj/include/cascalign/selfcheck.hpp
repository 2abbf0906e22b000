#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cascalign {

struct SelfCheckOptions {
  int grad_seeds = 3;
  // Test fixture: negates the recorded L1 gradient so the grad suite must fail.
  bool flip_l1_gradient = false;
};

struct SelfCheckResult {
  struct Suite {
    std::string name;
    double max_error = 0;
    double threshold = 0;
    bool passed = false;
  };
  std::vector<Suite> suites;
  bool all_passed = true;
};

// Gradient checks, loss-value loop oracles, the sampler oracle and the metric
// oracle, with one PASS/FAIL line per suite.
SelfCheckResult run_selfcheck(std::ostream& out, const SelfCheckOptions& options = {});

struct PipelineGradErrors {
  double l1 = 0, l2 = 0, l3 = 0, total = 0;

  double worst() const;
};

// End-to-end gradient check of all three losses and the combined objective
// through every encoder parameter, on a K=4, d=8, m=3, n=5 scenario. One
// finite-difference probe serves all four losses (they share the forward
// pipeline), so the comparison values are identical to per-loss grad_check
// runs at a quarter of the cost.
PipelineGradErrors check_pipeline_gradients(uint64_t seed, bool flip_l1_gradient = false);

}  // namespace cascalign
