#include "tiltlab/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tiltlab/mathutil.hpp"
#include "tiltlab/rng.hpp"

namespace tiltlab {

namespace {

void check_congruent(const Table& a, const Table& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": prompt count mismatch");
  for (std::size_t p = 0; p < a.size(); ++p)
    if (a[p].size() != b[p].size())
      throw std::invalid_argument(std::string(what) + ": candidate set mismatch at prompt " +
                                  std::to_string(p));
}

int sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::string join_indices(const std::vector<int>& indices) {
  std::string out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(indices[i]);
  }
  return out;
}

}  // namespace

const char* to_string(ReferenceSpec::Strategy strategy) {
  switch (strategy) {
    case ReferenceSpec::Strategy::kCannedResponses: return "canned_responses";
    case ReferenceSpec::Strategy::kEmpiricalQuantile: return "empirical_quantile";
    case ReferenceSpec::Strategy::kGaussianQuantile: return "gaussian_quantile";
    case ReferenceSpec::Strategy::kFixedZero: return "fixed_zero";
  }
  return "unknown";
}

PromptReferences reference_rewards(const RewardModel& model, const Policy& base_policy,
                                   const ReferenceSpec& spec, std::uint64_t seed,
                                   const WorldShape* shape) {
  const Table& rewards = model.values;
  check_congruent(rewards, base_policy.probs, "reference_rewards");
  const int P = static_cast<int>(rewards.size());

  PromptReferences refs;
  refs.values.assign(P, 0.0);
  refs.description = to_string(spec.strategy);

  switch (spec.strategy) {
    case ReferenceSpec::Strategy::kFixedZero:
      return refs;

    case ReferenceSpec::Strategy::kCannedResponses: {
      if (spec.canned_ids.empty())
        throw std::invalid_argument("reference_rewards: canned_responses requires canned_ids");
      if (shape == nullptr)
        throw std::invalid_argument("reference_rewards: canned_responses requires a WorldShape");
      for (int p = 0; p < P; ++p) {
        double total = 0.0;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& id : spec.canned_ids) {
          const int r = shape->find_response(p, id);
          if (r < 0)
            throw std::invalid_argument("reference_rewards: canned response '" + id +
                                        "' missing from prompt " + shape->prompt_ids[p]);
          total += rewards[p][r];
          best = std::max(best, rewards[p][r]);
        }
        refs.values[p] = spec.canned_aggregate == ReferenceSpec::CannedAggregate::kMean
                             ? total / static_cast<double>(spec.canned_ids.size())
                             : best;
      }
      refs.description += spec.canned_aggregate == ReferenceSpec::CannedAggregate::kMean
                              ? "(mean of " : "(max of ";
      refs.description += std::to_string(spec.canned_ids.size()) + " canned)";
      return refs;
    }

    case ReferenceSpec::Strategy::kEmpiricalQuantile:
    case ReferenceSpec::Strategy::kGaussianQuantile: {
      if (!(spec.quantile > 0.0 && spec.quantile < 1.0))
        throw std::invalid_argument("reference_rewards: quantile must be in (0,1)");
      if (spec.samples_per_prompt < 2)
        throw std::invalid_argument("reference_rewards: samples_per_prompt must be >= 2");
      std::vector<int> fallback_prompts;
      Rng rng(seed);
      const double s = inverse_normal_cdf(spec.quantile);
      for (int p = 0; p < P; ++p) {
        if (rewards[p].size() < 2)
          throw std::invalid_argument("reference_rewards: prompt " + std::to_string(p) +
                                      " has a single response; quantile strategies need >= 2");
        std::vector<double> draws(spec.samples_per_prompt);
        for (auto& d : draws) d = rewards[p][sample_index(base_policy.probs[p], rng)];
        if (spec.strategy == ReferenceSpec::Strategy::kEmpiricalQuantile) {
          refs.values[p] = sample_quantile(draws, spec.quantile);
        } else {
          const double mean =
              std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
          double var = 0.0;
          for (double d : draws) var += square(d - mean);
          var /= static_cast<double>(draws.size() - 1);
          const double std_dev = std::sqrt(var);
          if (std_dev == 0.0) {
            refs.values[p] = mean;
            fallback_prompts.push_back(p);
          } else {
            refs.values[p] = mean + s * std_dev;
          }
        }
      }
      refs.description += "(q=" + std::to_string(spec.quantile) +
                          ",n=" + std::to_string(spec.samples_per_prompt) + ")";
      if (!fallback_prompts.empty())
        refs.description += " zero-std mean fallback at prompts [" +
                            join_indices(fallback_prompts) + "]";
      return refs;
    }
  }
  throw std::logic_error("reference_rewards: unhandled strategy");
}

Utility raw_utility(const RewardModel& model) {
  Utility utility;
  utility.kind = UtilityKind::kRaw;
  utility.values = model.values;
  utility.provenance = {model.property + ": raw"};
  return utility;
}

Utility lsc_transform(const RewardModel& model, const PromptReferences& refs) {
  if (refs.values.size() != model.values.size())
    throw std::invalid_argument("lsc_transform: reference count does not match prompt count");
  Utility utility;
  utility.kind = UtilityKind::kLsc;
  utility.values = model.values;
  for (std::size_t p = 0; p < utility.values.size(); ++p)
    for (double& v : utility.values[p]) v = log_sigmoid(v - refs.values[p]);
  utility.provenance = {model.property + ": " + refs.description};
  return utility;
}

Utility ablation_utility(const RewardModel& model, const PromptReferences& refs,
                         UtilityKind kind) {
  Utility utility;
  utility.kind = kind;
  utility.values = model.values;
  switch (kind) {
    case UtilityKind::kCenteredOnly:
      if (refs.values.size() != model.values.size())
        throw std::invalid_argument("ablation_utility: reference count mismatch");
      for (std::size_t p = 0; p < utility.values.size(); ++p)
        for (double& v : utility.values[p]) v -= refs.values[p];
      utility.provenance = {model.property + ": centered by " + refs.description};
      return utility;
    case UtilityKind::kLogSigmoidOnly:
      for (auto& row : utility.values)
        for (double& v : row) v = log_sigmoid(v);
      utility.provenance = {model.property + ": log-sigmoid, zero reference"};
      return utility;
    default:
      throw std::invalid_argument("ablation_utility: kind must be centered_only or "
                                  "logsigmoid_only");
  }
}

Utility aggregate_lsc(const std::vector<Utility>& utilities) {
  if (utilities.empty()) throw std::invalid_argument("aggregate_lsc: no inputs");
  for (const auto& u : utilities)
    if (u.kind != UtilityKind::kLsc)
      throw std::invalid_argument("aggregate_lsc: all inputs must have kind lsc");
  Utility total = utilities.front();
  total.kind = UtilityKind::kSumLsc;
  for (std::size_t i = 1; i < utilities.size(); ++i) {
    check_congruent(total.values, utilities[i].values, "aggregate_lsc");
    for (std::size_t p = 0; p < total.values.size(); ++p)
      for (std::size_t r = 0; r < total.values[p].size(); ++r)
        total.values[p][r] += utilities[i].values[p][r];
    total.provenance.insert(total.provenance.end(), utilities[i].provenance.begin(),
                            utilities[i].provenance.end());
  }
  return total;
}

Utility weighted_sum(const std::vector<RewardModel>& models, const std::vector<double>& weights) {
  if (models.empty()) throw std::invalid_argument("weighted_sum: no inputs");
  if (models.size() != weights.size())
    throw std::invalid_argument("weighted_sum: " + std::to_string(models.size()) + " models but " +
                                std::to_string(weights.size()) + " weights");
  double total_weight = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("weighted_sum: weights must be nonnegative");
    total_weight += w;
  }
  if (std::abs(total_weight - 1.0) > 1e-9)
    throw std::invalid_argument("weighted_sum: weights sum to " + std::to_string(total_weight) +
                                ", expected 1");
  Utility utility;
  utility.kind = UtilityKind::kWeightedSum;
  utility.values = models.front().values;
  for (auto& row : utility.values)
    for (double& v : row) v *= weights.front();
  utility.provenance = {models.front().property + ": w=" + std::to_string(weights.front())};
  for (std::size_t i = 1; i < models.size(); ++i) {
    check_congruent(utility.values, models[i].values, "weighted_sum");
    for (std::size_t p = 0; p < utility.values.size(); ++p)
      for (std::size_t r = 0; r < utility.values[p].size(); ++r)
        utility.values[p][r] += weights[i] * models[i].values[p][r];
    utility.provenance.push_back(models[i].property + ": w=" + std::to_string(weights[i]));
  }
  return utility;
}

}  // namespace tiltlab
