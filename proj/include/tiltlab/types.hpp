#pragma once

#include <string>
#include <vector>

namespace tiltlab {

// Per-(prompt,response) scalar table; row p aligns with prompt p's candidate set.
// Candidate sets may have different sizes, so rows are ragged.
using Table = std::vector<std::vector<double>>;

// Prompt and response identifiers for a finite universe. Response identifiers
// are scoped to their prompt's candidate set.
struct WorldShape {
  std::vector<std::string> prompt_ids;
  std::vector<std::vector<std::string>> response_ids;

  int num_prompts() const { return static_cast<int>(prompt_ids.size()); }
  int num_responses(int prompt) const {
    return static_cast<int>(response_ids[prompt].size());
  }
  int total_responses() const;

  // Index lookups; -1 when absent.
  int find_prompt(const std::string& id) const;
  int find_response(int prompt, const std::string& id) const;

  Table zero_table() const;
  bool congruent(const Table& table) const;
};

enum class Gauge { kRaw, kPromptCentered };

struct FitDiagnostics {
  double final_nll = 0.0;
  int iterations = 0;
  double l2_weight = 0.0;
  double gradient_norm = 0.0;
};

// Scalar reward per (prompt,response) for one property. Rewards are only
// identified up to per-prompt shifts; `gauge` records whether the per-prompt
// mean has been pinned to zero.
struct RewardModel {
  std::string property;
  Table values;
  Gauge gauge = Gauge::kRaw;
  FitDiagnostics diagnostics;
};

enum class UtilityKind { kRaw, kLsc, kCenteredOnly, kLogSigmoidOnly, kWeightedSum, kSumLsc };

const char* to_string(UtilityKind kind);
UtilityKind utility_kind_from_string(const std::string& name);

// Alignment utility per (prompt,response). For kinds lsc and sum_lsc the
// values are log-probabilities, hence <= 0.
struct Utility {
  Table values;
  UtilityKind kind = UtilityKind::kRaw;
  std::vector<std::string> provenance;  // "property: reference description" entries
};

// Per-prompt distribution over that prompt's candidate responses.
struct Policy {
  Table probs;
  std::string label;
};

// Rows must be distributions: entries >= 0, each row summing to 1 within 1e-12.
void validate_policy(const Policy& policy);

std::vector<double> uniform_prompt_weights(int num_prompts);

}  // namespace tiltlab
