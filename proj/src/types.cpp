#include "tiltlab/types.hpp"

#include <cmath>
#include <stdexcept>

namespace tiltlab {

int WorldShape::total_responses() const {
  int total = 0;
  for (const auto& row : response_ids) total += static_cast<int>(row.size());
  return total;
}

int WorldShape::find_prompt(const std::string& id) const {
  for (int p = 0; p < num_prompts(); ++p)
    if (prompt_ids[p] == id) return p;
  return -1;
}

int WorldShape::find_response(int prompt, const std::string& id) const {
  const auto& row = response_ids[prompt];
  for (int r = 0; r < static_cast<int>(row.size()); ++r)
    if (row[r] == id) return r;
  return -1;
}

Table WorldShape::zero_table() const {
  Table table(prompt_ids.size());
  for (std::size_t p = 0; p < response_ids.size(); ++p)
    table[p].assign(response_ids[p].size(), 0.0);
  return table;
}

bool WorldShape::congruent(const Table& table) const {
  if (table.size() != prompt_ids.size()) return false;
  for (std::size_t p = 0; p < table.size(); ++p)
    if (table[p].size() != response_ids[p].size()) return false;
  return true;
}

const char* to_string(UtilityKind kind) {
  switch (kind) {
    case UtilityKind::kRaw: return "raw";
    case UtilityKind::kLsc: return "lsc";
    case UtilityKind::kCenteredOnly: return "centered_only";
    case UtilityKind::kLogSigmoidOnly: return "logsigmoid_only";
    case UtilityKind::kWeightedSum: return "weighted_sum";
    case UtilityKind::kSumLsc: return "sum_lsc";
  }
  return "unknown";
}

UtilityKind utility_kind_from_string(const std::string& name) {
  if (name == "raw") return UtilityKind::kRaw;
  if (name == "lsc") return UtilityKind::kLsc;
  if (name == "centered_only") return UtilityKind::kCenteredOnly;
  if (name == "logsigmoid_only") return UtilityKind::kLogSigmoidOnly;
  if (name == "weighted_sum") return UtilityKind::kWeightedSum;
  if (name == "sum_lsc") return UtilityKind::kSumLsc;
  throw std::invalid_argument("unknown utility kind: " + name);
}

void validate_policy(const Policy& policy) {
  for (std::size_t p = 0; p < policy.probs.size(); ++p) {
    double total = 0.0;
    for (double prob : policy.probs[p]) {
      if (!(prob >= 0.0))
        throw std::invalid_argument("policy '" + policy.label + "': negative probability in prompt " +
                                    std::to_string(p));
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("policy '" + policy.label + "': prompt " + std::to_string(p) +
                                  " row sums to " + std::to_string(total));
  }
}

std::vector<double> uniform_prompt_weights(int num_prompts) {
  if (num_prompts <= 0) throw std::invalid_argument("uniform_prompt_weights: no prompts");
  return std::vector<double>(num_prompts, 1.0 / num_prompts);
}

}  // namespace tiltlab
