#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab {

// How the per-prompt reference reward is chosen. The reference acts as the
// transformation's hyperparameter: utility is roughly linear below it and
// saturates above it.
struct ReferenceSpec {
  enum class Strategy { kCannedResponses, kEmpiricalQuantile, kGaussianQuantile, kFixedZero };
  enum class CannedAggregate { kMean, kMax };

  Strategy strategy = Strategy::kGaussianQuantile;
  // Response identifiers scored per prompt (canned_responses only).
  std::vector<std::string> canned_ids;
  CannedAggregate canned_aggregate = CannedAggregate::kMean;
  // Target quantile of the base policy's reward distribution, in (0,1).
  double quantile = 0.85;
  // Base-policy draws per prompt used to estimate the quantile.
  int samples_per_prompt = 64;
};

const char* to_string(ReferenceSpec::Strategy strategy);

struct PromptReferences {
  std::vector<double> values;  // one per prompt
  std::string description;     // strategy summary, including per-prompt fallbacks
};

// Estimates r_ref(x) per prompt:
//   canned_responses  - mean (or max) reward of the canned set
//   empirical_quantile- sample quantile of rewards of base-policy draws
//   gaussian_quantile - sample mean + inverse_normal_cdf(q) * sample std of
//                       the same draws; zero std falls back to the mean
//   fixed_zero        - 0 everywhere
// `shape` is required for canned_responses (identifier lookup).
PromptReferences reference_rewards(const RewardModel& model, const Policy& base_policy,
                                   const ReferenceSpec& spec, std::uint64_t seed,
                                   const WorldShape* shape = nullptr);

// Passes the reward through unchanged (the baseline arm).
Utility raw_utility(const RewardModel& model);

// u = log sigmoid(r - r_ref(x)): the log-probability that the response is
// preferred to the reference.
Utility lsc_transform(const RewardModel& model, const PromptReferences& refs);

// The two single-component arms: kCenteredOnly keeps r - r_ref(x) without the
// log-sigmoid; kLogSigmoidOnly applies log sigmoid(r) with a zero reference.
Utility ablation_utility(const RewardModel& model, const PromptReferences& refs, UtilityKind kind);

// Pointwise sum of lsc utilities: exp of the result is the probability that
// the response is good in every property at once, under conditionally
// independent judgements.
Utility aggregate_lsc(const std::vector<Utility>& utilities);

// Baseline aggregation: pointwise weighted sum of raw rewards. Weights must
// be nonnegative and sum to 1.
Utility weighted_sum(const std::vector<RewardModel>& models, const std::vector<double>& weights);

}  // namespace tiltlab
