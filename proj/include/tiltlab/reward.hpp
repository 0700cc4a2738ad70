#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tiltlab/corpus.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab {

struct FitConfig {
  // Weight of the l2 penalty on the summed objective (see fit_bt). Must be
  // positive for Bradley-Terry fits: rewards are unidentified up to per-prompt
  // shifts without it.
  double l2_weight = 1e-3;
  int max_iterations = 20000;
  // Stopping rule: l2 norm of the gradient of the per-observation-averaged
  // objective.
  double tolerance = 1e-8;
  enum class StepRule { kFixed, kBacktracking };
  StepRule step_rule = StepRule::kBacktracking;
  // Fixed step size, or the initial trial step for backtracking.
  double step_size = 1.0;
  // Flat per-(prompt,response) starting point in candidate-set order; empty
  // means all zeros. The objective is strictly convex, so any start reaches
  // the same optimum.
  std::vector<double> initial_values;
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double gradient_norm_in)
      : std::runtime_error(what), gradient_norm(gradient_norm_in) {}
  double gradient_norm = 0.0;
};

struct GoodnessLabel {
  int prompt = 0;
  int response = 0;
  bool good = false;
};

// Minimizes sum_pairs -log sigmoid(r(y+) - r(y-)) + (l2/2)*||r||^2 by
// deterministic full-batch gradient descent. All pairs must share one
// property and reference valid (prompt,response) indices of `shape`.
RewardModel fit_bt(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                   const FitConfig& config);

// Minimizes the regularized binary cross entropy of per-(prompt,response)
// goodness bits; the unregularized optimum is the logit of the empirical
// goodness rate. l2_weight = 0 is accepted only when every labeled cell has
// both outcomes.
RewardModel fit_pointwise(const std::vector<GoodnessLabel>& labels, const WorldShape& shape,
                          const FitConfig& config, const std::string& property);

// Subtracts the per-prompt mean. Pairwise preference probabilities are
// invariant to this gauge fix.
RewardModel center_per_prompt(const RewardModel& model);

// Objective and gradient of the regularized Bradley-Terry negative log
// likelihood, exposed for gradient verification.
double bt_objective(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                    const Table& values, double l2_weight);
Table bt_gradient(const std::vector<PreferencePair>& pairs, const WorldShape& shape,
                  const Table& values, double l2_weight);

}  // namespace tiltlab
