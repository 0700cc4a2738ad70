#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tiltlab/corpus.hpp"
#include "tiltlab/transform.hpp"
#include "tiltlab/types.hpp"

namespace tiltlab {

// The evaluator that alignment is *not* allowed to optimize against:
// either the world's ground truth, or a reward refit on fresh pairs.
struct Judge {
  enum class Kind { kTrueGoodness, kHeldoutReward };
  Kind kind = Kind::kTrueGoodness;
  // Win quantile of the base reward distribution, per property, in (0,1).
  std::map<std::string, double> thresholds;
  // Heldout refit settings (kHeldoutReward only).
  int heldout_pairs = 20000;
  std::uint64_t heldout_seed = 17;
  double heldout_l2 = 1e-3;
};

// One aligned policy's summary along a sweep.
struct FrontierPoint {
  std::string method;
  std::string knob_type;  // "gamma" or "k"
  double knob = 0.0;
  double kl = 0.0;
  std::map<std::string, double> win_rates;
  // {q25, q50, q75} of base-median-centered alignment rewards under the
  // aligned policy, per property.
  std::map<std::string, std::array<double, 3>> reward_quantiles;
  std::optional<double> shortcut_fraction;
};

// A utility recipe: which rewards feed the alignment step and how they are
// transformed and combined.
struct MethodSpec {
  std::string name;
  UtilityKind kind = UtilityKind::kRaw;
  std::vector<std::string> properties;
  std::vector<double> weights;                      // weighted_sum only
  std::map<std::string, ReferenceSpec> references;  // lsc / centered_only / sum_lsc
};

struct SweepKnobs {
  enum class Type { kGamma, kK };
  Type type = Type::kGamma;
  std::vector<double> values;
};

// P(judge reward of an aligned draw exceeds the q-quantile of the judge
// reward under the base policy), averaged uniformly over prompts. Exact
// enumeration; the threshold is the piecewise-linear inverse CDF quantile.
double win_rate_vs_quantile(const Policy& aligned, const Policy& base,
                            const RewardModel& judge_reward, double quantile);

// P(a draw beats the per-prompt base median in every property at once).
double win_rate_and(const Policy& aligned, const Policy& base,
                    const std::vector<RewardModel>& judges);

// Judge reward per property: ground truth, or a fresh Bradley-Terry refit.
std::map<std::string, RewardModel> resolve_judge_rewards(const World& world, const Judge& judge);

// The rewards the alignment step sees: truth passed through the world's
// misspecification.
std::map<std::string, RewardModel> learned_rewards(const World& world);

Utility build_utility(const Policy& base_policy, const WorldShape& shape,
                      const MethodSpec& method,
                      const std::map<std::string, RewardModel>& rewards,
                      std::uint64_t reference_seed);
Utility build_utility(const World& world, const MethodSpec& method,
                      const std::map<std::string, RewardModel>& rewards,
                      std::uint64_t reference_seed);

// Everything a frontier sweep needs; assembled from a synthetic world or from
// preference-file fits.
struct FrontierInputs {
  Policy base_policy;
  WorldShape shape;
  std::map<std::string, RewardModel> alignment_rewards;
  std::map<std::string, RewardModel> judge_rewards;
  std::map<std::string, double> win_thresholds;  // property -> quantile
  std::vector<std::vector<std::uint8_t>> shortcut_flags;  // empty = none
};

std::vector<FrontierPoint> sweep_frontier(const FrontierInputs& inputs, const MethodSpec& method,
                                          const SweepKnobs& knobs,
                                          std::uint64_t reference_seed = 0);

// One FrontierPoint per knob, deterministic given (world seed, config).
std::vector<FrontierPoint> sweep(const World& world, const MethodSpec& method,
                                 const SweepKnobs& knobs, const Judge& judge,
                                 std::uint64_t reference_seed = 0);

// Distribution summary of base-median-centered rewards under one policy.
struct PolicyRewardSummary {
  double kl = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double iqr = 0.0;
  // Mass below/above the base policy's 10th/90th centered-reward percentile.
  double low_tail_mass = 0.0;
  double high_tail_mass = 0.0;
};

struct ConcentrationSummary {
  PolicyRewardSummary first;
  PolicyRewardSummary second;
  double low_threshold = 0.0;
  double high_threshold = 0.0;
};

// Compares reward concentration of two (ideally KL-matched) aligned policies.
ConcentrationSummary reward_concentration(const Policy& aligned_a, const Policy& aligned_b,
                                          const RewardModel& reward, const Policy& base);

struct BalanceSummary {
  double mean_abs_gap = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

// Summary of |centered r1 - centered r2| under the aligned policy; small gaps
// mean the two properties improve together.
BalanceSummary balance_diagnostic(const Policy& aligned, const std::vector<RewardModel>& rewards,
                                  const Policy& base);

// Probability mass the aligned policy puts on shortcut-flagged responses.
double shortcut_fraction(const Policy& aligned, const World& world);

// Finds gamma such that KL(tilt(base,u,gamma) || base) hits target_kl within
// the relative tolerance, by bisection on log gamma.
double calibrate_gamma_for_kl(const Policy& base, const Utility& utility, double target_kl,
                              double rel_tol = 1e-6);

// Nearest-neighbor KL matching between two frontiers: pairs (i, j) whose KL
// values agree within rel_tol, one match per point of `a`.
std::vector<std::pair<int, int>> match_by_kl(const std::vector<FrontierPoint>& a,
                                             const std::vector<FrontierPoint>& b,
                                             double rel_tol = 0.05);

}  // namespace tiltlab
