#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tiltlab/types.hpp"

namespace tiltlab {

// One pairwise comparison: `winner` was preferred to `loser` for `prompt`.
// Indices refer to a WorldShape's candidate sets.
struct PreferencePair {
  int prompt = 0;
  int winner = 0;
  int loser = 0;
  std::string property;
};

enum class PreferenceFormat { kJsonl };

// Pairs plus the candidate-set index they reference. Prompt and response
// identifiers are interned in first-seen order.
struct PreferenceData {
  WorldShape shape;
  std::vector<PreferencePair> pairs;

  const std::string& prompt_id(const PreferencePair& pair) const {
    return shape.prompt_ids[pair.prompt];
  }
  const std::string& winner_id(const PreferencePair& pair) const {
    return shape.response_ids[pair.prompt][pair.winner];
  }
  const std::string& loser_id(const PreferencePair& pair) const {
    return shape.response_ids[pair.prompt][pair.loser];
  }
};

// Reads one JSON object per line with fields prompt/chosen/rejected/property.
// Duplicate records are kept; malformed lines raise with the line number.
PreferenceData load_preferences(const std::string& path,
                                PreferenceFormat format = PreferenceFormat::kJsonl);

// Deviation between the true reward and the reward the alignment step sees.
struct Misspecification {
  enum class Mode { kNone, kTailInflation, kFeatureShortcut };
  Mode mode = Mode::kNone;
  double strength = 0.0;
  double threshold_quantile = 0.9;
};

struct WorldConfig {
  int prompts = 8;
  int responses_per_prompt = 16;
  std::vector<std::string> properties = {"helpfulness"};
  // Dirichlet concentration for base-policy rows; <= 0 yields exactly uniform rows.
  double base_concentration = 0.0;
  std::uint64_t seed = 0;
  Misspecification misspec;
  // Reward spread per prompt, with optional lognormal heterogeneity across
  // prompts (sigma of log scale).
  double reward_scale = 1.5;
  double prompt_scale_sigma = 0.0;
  // Correlation between property i > 0 and property 0 latents, in [-1, 1].
  double property_correlation = 0.0;
  // Fraction of responses carrying the shortcut feature flag.
  double shortcut_fraction = 0.0;
};

// A finite synthetic universe with known ground truth. Goodness is defined
// through the Bradley-Terry link against a designated per-prompt reference
// response: p(G=1|x,y) = sigmoid(r(x,y) - r(x, y_ref(x))).
struct World {
  WorldShape shape;
  Policy base_policy;
  std::map<std::string, Table> true_reward;
  std::map<std::string, Table> goodness_prob;
  std::map<std::string, std::vector<int>> reference_response;
  std::vector<std::vector<std::uint8_t>> shortcut_flags;
  std::uint64_t seed = 0;
  Misspecification misspec;

  const Table& true_reward_for(const std::string& property) const;
  const Table& goodness_for(const std::string& property) const;
  const std::vector<int>& reference_for(const std::string& property) const;
  std::vector<std::string> properties() const;
  bool has_shortcut_flags() const;
};

World synthesize_world(const WorldConfig& config);

// Draws n pairs labeled by the true Bradley-Terry model: per pair, a uniform
// prompt, two distinct uniform responses, winner Bernoulli with probability
// sigmoid(r(y_a) - r(y_b)).
std::vector<PreferencePair> sample_preferences(const World& world, const std::string& property,
                                               int n, std::uint64_t seed);

// Derives the learned (possibly misspecified) reward table from the truth.
// tail_inflation adds strength * max(0, r - q_threshold) above the per-prompt
// threshold quantile; feature_shortcut adds strength to flagged responses.
RewardModel corrupt_reward(const World& world, const std::string& property,
                           const Misspecification& spec);

}  // namespace tiltlab
