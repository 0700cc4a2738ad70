#include "tiltlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tiltlab/mathutil.hpp"
#include "tiltlab/policy.hpp"
#include "tiltlab/reward.hpp"
#include "tiltlab/rng.hpp"

namespace tiltlab {

namespace {

// (value, probability) atoms of the base reward distribution at one prompt.
std::vector<std::pair<double, double>> prompt_atoms(const std::vector<double>& rewards,
                                                    const std::vector<double>& probs) {
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(rewards.size());
  for (std::size_t r = 0; r < rewards.size(); ++r)
    if (probs[r] > 0.0) atoms.emplace_back(rewards[r], probs[r]);
  return atoms;
}

// Atoms of a centered reward under `policy`, mixed uniformly over prompts.
std::vector<std::pair<double, double>> mixture_atoms(const Table& centered, const Policy& policy) {
  std::vector<std::pair<double, double>> atoms;
  const double prompt_weight = 1.0 / static_cast<double>(centered.size());
  for (std::size_t p = 0; p < centered.size(); ++p)
    for (std::size_t r = 0; r < centered[p].size(); ++r)
      if (policy.probs[p][r] > 0.0)
        atoms.emplace_back(centered[p][r], prompt_weight * policy.probs[p][r]);
  return atoms;
}

// Rewards centered by the per-prompt base median.
Table center_by_base_median(const Table& rewards, const Policy& base) {
  Table centered = rewards;
  for (std::size_t p = 0; p < centered.size(); ++p) {
    const double median = weighted_quantile(prompt_atoms(rewards[p], base.probs[p]), 0.5);
    for (double& v : centered[p]) v -= median;
  }
  return centered;
}

void check_same_shape(const Table& a, const Table& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": prompt count mismatch");
  for (std::size_t p = 0; p < a.size(); ++p)
    if (a[p].size() != b[p].size())
      throw std::invalid_argument(std::string(what) + ": candidate set mismatch at prompt " +
                                  std::to_string(p));
}

}  // namespace

double win_rate_vs_quantile(const Policy& aligned, const Policy& base,
                            const RewardModel& judge_reward, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw std::invalid_argument("win_rate_vs_quantile: quantile must be in (0,1)");
  check_same_shape(aligned.probs, judge_reward.values, "win_rate_vs_quantile");
  check_same_shape(base.probs, judge_reward.values, "win_rate_vs_quantile");
  double total = 0.0;
  const std::size_t prompts = aligned.probs.size();
  for (std::size_t p = 0; p < prompts; ++p) {
    const double threshold =
        weighted_quantile(prompt_atoms(judge_reward.values[p], base.probs[p]), quantile);
    double win = 0.0;
    for (std::size_t r = 0; r < aligned.probs[p].size(); ++r)
      if (judge_reward.values[p][r] > threshold) win += aligned.probs[p][r];
    total += win;
  }
  return total / static_cast<double>(prompts);
}

double win_rate_and(const Policy& aligned, const Policy& base,
                    const std::vector<RewardModel>& judges) {
  if (judges.size() < 2)
    throw std::invalid_argument("win_rate_and: needs at least two judge rewards");
  for (const auto& judge : judges) {
    check_same_shape(aligned.probs, judge.values, "win_rate_and");
    check_same_shape(base.probs, judge.values, "win_rate_and");
  }
  double total = 0.0;
  const std::size_t prompts = aligned.probs.size();
  std::vector<double> medians(judges.size());
  for (std::size_t p = 0; p < prompts; ++p) {
    for (std::size_t j = 0; j < judges.size(); ++j)
      medians[j] = weighted_quantile(prompt_atoms(judges[j].values[p], base.probs[p]), 0.5);
    double win = 0.0;
    for (std::size_t r = 0; r < aligned.probs[p].size(); ++r) {
      bool all_good = true;
      for (std::size_t j = 0; j < judges.size(); ++j)
        if (!(judges[j].values[p][r] > medians[j])) {
          all_good = false;
          break;
        }
      if (all_good) win += aligned.probs[p][r];
    }
    total += win;
  }
  return total / static_cast<double>(prompts);
}

std::map<std::string, RewardModel> resolve_judge_rewards(const World& world, const Judge& judge) {
  for (const auto& [property, quantile] : judge.thresholds) {
    if (!(quantile > 0.0 && quantile < 1.0))
      throw std::invalid_argument("judge: threshold for '" + property + "' must be in (0,1)");
    world.true_reward_for(property);  // existence check
  }
  std::map<std::string, RewardModel> judges;
  std::uint64_t stream = 0;
  for (const auto& [property, quantile] : judge.thresholds) {
    (void)quantile;
    if (judge.kind == Judge::Kind::kTrueGoodness) {
      RewardModel model;
      model.property = property;
      model.values = world.true_reward_for(property);
      judges.emplace(property, std::move(model));
    } else {
      const auto pairs = sample_preferences(world, property, judge.heldout_pairs,
                                            substream(judge.heldout_seed, stream));
      FitConfig fit;
      fit.l2_weight = judge.heldout_l2;
      judges.emplace(property, fit_bt(pairs, world.shape, fit));
    }
    ++stream;
  }
  return judges;
}

std::map<std::string, RewardModel> learned_rewards(const World& world) {
  std::map<std::string, RewardModel> rewards;
  for (const auto& property : world.properties())
    rewards.emplace(property, corrupt_reward(world, property, world.misspec));
  return rewards;
}

Utility build_utility(const Policy& base_policy, const WorldShape& shape,
                      const MethodSpec& method,
                      const std::map<std::string, RewardModel>& rewards,
                      std::uint64_t reference_seed) {
  if (method.properties.empty())
    throw std::invalid_argument("method '" + method.name + "': no properties");
  auto model_for = [&](const std::string& property) -> const RewardModel& {
    auto it = rewards.find(property);
    if (it == rewards.end())
      throw std::invalid_argument("method '" + method.name + "': no reward for property '" +
                                  property + "'");
    return it->second;
  };
  auto reference_for = [&](const std::string& property) -> const ReferenceSpec& {
    auto it = method.references.find(property);
    if (it == method.references.end())
      throw std::invalid_argument("method '" + method.name + "': no reference spec for '" +
                                  property + "'");
    return it->second;
  };
  auto reference_stream = [&](std::size_t property_index) {
    return substream(reference_seed, property_index);
  };

  switch (method.kind) {
    case UtilityKind::kRaw:
      if (method.properties.size() != 1)
        throw std::invalid_argument("method '" + method.name + "': raw takes one property");
      return raw_utility(model_for(method.properties[0]));

    case UtilityKind::kLsc: {
      if (method.properties.size() != 1)
        throw std::invalid_argument("method '" + method.name + "': lsc takes one property");
      const auto& model = model_for(method.properties[0]);
      const auto refs =
          reference_rewards(model, base_policy, reference_for(method.properties[0]),
                            reference_stream(0), &shape);
      return lsc_transform(model, refs);
    }

    case UtilityKind::kCenteredOnly: {
      if (method.properties.size() != 1)
        throw std::invalid_argument("method '" + method.name + "': centered_only takes one property");
      const auto& model = model_for(method.properties[0]);
      const auto refs =
          reference_rewards(model, base_policy, reference_for(method.properties[0]),
                            reference_stream(0), &shape);
      return ablation_utility(model, refs, UtilityKind::kCenteredOnly);
    }

    case UtilityKind::kLogSigmoidOnly: {
      if (method.properties.size() != 1)
        throw std::invalid_argument("method '" + method.name +
                                    "': logsigmoid_only takes one property");
      return ablation_utility(model_for(method.properties[0]), PromptReferences{},
                              UtilityKind::kLogSigmoidOnly);
    }

    case UtilityKind::kWeightedSum: {
      std::vector<RewardModel> models;
      models.reserve(method.properties.size());
      for (const auto& property : method.properties) models.push_back(model_for(property));
      return weighted_sum(models, method.weights);
    }

    case UtilityKind::kSumLsc: {
      std::vector<Utility> parts;
      parts.reserve(method.properties.size());
      for (std::size_t i = 0; i < method.properties.size(); ++i) {
        const auto& model = model_for(method.properties[i]);
        const auto refs =
            reference_rewards(model, base_policy, reference_for(method.properties[i]),
                              reference_stream(i), &shape);
        parts.push_back(lsc_transform(model, refs));
      }
      return aggregate_lsc(parts);
    }
  }
  throw std::logic_error("build_utility: unhandled kind");
}

Utility build_utility(const World& world, const MethodSpec& method,
                      const std::map<std::string, RewardModel>& rewards,
                      std::uint64_t reference_seed) {
  return build_utility(world.base_policy, world.shape, method, rewards, reference_seed);
}

std::vector<FrontierPoint> sweep_frontier(const FrontierInputs& inputs, const MethodSpec& method,
                                          const SweepKnobs& knobs,
                                          std::uint64_t reference_seed) {
  if (knobs.values.empty()) throw std::invalid_argument("sweep: no knob values");
  if (!std::is_sorted(knobs.values.begin(), knobs.values.end()))
    throw std::invalid_argument("sweep: knob values must be sorted ascending");

  const Utility utility =
      build_utility(inputs.base_policy, inputs.shape, method, inputs.alignment_rewards,
                    reference_seed);
  const auto weights = uniform_prompt_weights(inputs.shape.num_prompts());

  bool any_flag = false;
  for (const auto& row : inputs.shortcut_flags)
    for (auto flag : row) any_flag |= flag != 0;

  std::vector<RewardModel> and_judges;
  for (const auto& [property, model] : inputs.judge_rewards) and_judges.push_back(model);

  std::vector<FrontierPoint> frontier;
  frontier.reserve(knobs.values.size());
  for (double knob : knobs.values) {
    Policy aligned;
    FrontierPoint point;
    point.method = method.name;
    point.knob = knob;
    if (knobs.type == SweepKnobs::Type::kGamma) {
      point.knob_type = "gamma";
      try {
        aligned = tilt(inputs.base_policy, utility, knob);
      } catch (const std::exception& e) {
        throw std::runtime_error("sweep: method '" + method.name + "' gamma=" +
                                 std::to_string(knob) + ": " + e.what());
      }
    } else {
      point.knob_type = "k";
      const double rounded = std::round(knob);
      if (std::abs(knob - rounded) > 1e-9 || rounded < 1.0)
        throw std::invalid_argument("sweep: k knobs must be positive integers, got " +
                                    std::to_string(knob));
      aligned = best_of_k(inputs.base_policy, utility, static_cast<int>(rounded));
    }
    point.kl = kl_divergence(aligned, inputs.base_policy, weights);

    for (const auto& [property, quantile] : inputs.win_thresholds) {
      auto it = inputs.judge_rewards.find(property);
      if (it == inputs.judge_rewards.end())
        throw std::invalid_argument("sweep: no judge reward for property '" + property + "'");
      point.win_rates["win_" + property] =
          win_rate_vs_quantile(aligned, inputs.base_policy, it->second, quantile);
    }
    if (and_judges.size() >= 2)
      point.win_rates["win_and"] = win_rate_and(aligned, inputs.base_policy, and_judges);

    for (const auto& property : method.properties) {
      const Table centered =
          center_by_base_median(inputs.alignment_rewards.at(property).values, inputs.base_policy);
      const auto atoms = mixture_atoms(centered, aligned);
      point.reward_quantiles[property] = {weighted_quantile(atoms, 0.25),
                                          weighted_quantile(atoms, 0.50),
                                          weighted_quantile(atoms, 0.75)};
    }
    if (any_flag) {
      double flagged = 0.0;
      for (std::size_t p = 0; p < aligned.probs.size(); ++p)
        for (std::size_t r = 0; r < aligned.probs[p].size(); ++r)
          if (inputs.shortcut_flags[p][r]) flagged += aligned.probs[p][r];
      point.shortcut_fraction = flagged / static_cast<double>(aligned.probs.size());
    }
    frontier.push_back(std::move(point));
  }
  return frontier;
}

std::vector<FrontierPoint> sweep(const World& world, const MethodSpec& method,
                                 const SweepKnobs& knobs, const Judge& judge,
                                 std::uint64_t reference_seed) {
  FrontierInputs inputs;
  inputs.base_policy = world.base_policy;
  inputs.shape = world.shape;
  inputs.alignment_rewards = learned_rewards(world);
  inputs.judge_rewards = resolve_judge_rewards(world, judge);
  inputs.win_thresholds = judge.thresholds;
  inputs.shortcut_flags = world.shortcut_flags;
  return sweep_frontier(inputs, method, knobs, reference_seed);
}

ConcentrationSummary reward_concentration(const Policy& aligned_a, const Policy& aligned_b,
                                          const RewardModel& reward, const Policy& base) {
  check_same_shape(aligned_a.probs, reward.values, "reward_concentration");
  check_same_shape(aligned_b.probs, reward.values, "reward_concentration");
  check_same_shape(base.probs, reward.values, "reward_concentration");
  const Table centered = center_by_base_median(reward.values, base);
  const auto base_atoms = mixture_atoms(centered, base);

  ConcentrationSummary summary;
  summary.low_threshold = weighted_quantile(base_atoms, 0.10);
  summary.high_threshold = weighted_quantile(base_atoms, 0.90);

  const auto weights = uniform_prompt_weights(static_cast<int>(centered.size()));
  auto summarize = [&](const Policy& aligned) {
    PolicyRewardSummary s;
    s.kl = kl_divergence(aligned, base, weights);
    const auto atoms = mixture_atoms(centered, aligned);
    s.q25 = weighted_quantile(atoms, 0.25);
    s.q50 = weighted_quantile(atoms, 0.50);
    s.q75 = weighted_quantile(atoms, 0.75);
    s.iqr = s.q75 - s.q25;
    for (const auto& [value, mass] : atoms) {
      if (value < summary.low_threshold) s.low_tail_mass += mass;
      if (value > summary.high_threshold) s.high_tail_mass += mass;
    }
    return s;
  };
  summary.first = summarize(aligned_a);
  summary.second = summarize(aligned_b);
  return summary;
}

BalanceSummary balance_diagnostic(const Policy& aligned, const std::vector<RewardModel>& rewards,
                                  const Policy& base) {
  if (rewards.size() != 2)
    throw std::invalid_argument("balance_diagnostic: exactly two rewards required");
  check_same_shape(aligned.probs, rewards[0].values, "balance_diagnostic");
  check_same_shape(aligned.probs, rewards[1].values, "balance_diagnostic");
  const Table centered_a = center_by_base_median(rewards[0].values, base);
  const Table centered_b = center_by_base_median(rewards[1].values, base);

  Table gap = centered_a;
  for (std::size_t p = 0; p < gap.size(); ++p)
    for (std::size_t r = 0; r < gap[p].size(); ++r)
      gap[p][r] = std::abs(centered_a[p][r] - centered_b[p][r]);

  const auto atoms = mixture_atoms(gap, aligned);
  BalanceSummary summary;
  for (const auto& [value, mass] : atoms) summary.mean_abs_gap += value * mass;
  summary.q25 = weighted_quantile(atoms, 0.25);
  summary.q50 = weighted_quantile(atoms, 0.50);
  summary.q75 = weighted_quantile(atoms, 0.75);
  return summary;
}

double shortcut_fraction(const Policy& aligned, const World& world) {
  if (!world.has_shortcut_flags())
    throw std::invalid_argument("shortcut_fraction: world has no shortcut flags");
  check_same_shape(aligned.probs, world.base_policy.probs, "shortcut_fraction");
  double total = 0.0;
  for (std::size_t p = 0; p < aligned.probs.size(); ++p)
    for (std::size_t r = 0; r < aligned.probs[p].size(); ++r)
      if (world.shortcut_flags[p][r]) total += aligned.probs[p][r];
  return total / static_cast<double>(aligned.probs.size());
}

double calibrate_gamma_for_kl(const Policy& base, const Utility& utility, double target_kl,
                              double rel_tol) {
  if (!(target_kl > 0.0)) throw std::invalid_argument("calibrate_gamma_for_kl: target must be > 0");
  const auto weights = uniform_prompt_weights(static_cast<int>(base.probs.size()));
  auto kl_at = [&](double gamma) {
    return kl_divergence(tilt(base, utility, gamma), base, weights);
  };
  // KL decreases in gamma; bracket the target then bisect on log gamma.
  double lo = 1.0, hi = 1.0;
  for (int i = 0; i < 80 && kl_at(lo) < target_kl; ++i) lo /= 4.0;
  for (int i = 0; i < 80 && kl_at(hi) > target_kl; ++i) hi *= 4.0;
  if (kl_at(lo) < target_kl)
    throw std::runtime_error("calibrate_gamma_for_kl: target KL " + std::to_string(target_kl) +
                             " unreachable (max " + std::to_string(kl_at(lo)) + ")");
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    const double kl = kl_at(mid);
    if (std::abs(kl - target_kl) <= rel_tol * target_kl) return mid;
    (kl > target_kl ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

std::vector<std::pair<int, int>> match_by_kl(const std::vector<FrontierPoint>& a,
                                             const std::vector<FrontierPoint>& b,
                                             double rel_tol) {
  std::vector<std::pair<int, int>> matches;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int best = -1;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double gap = std::abs(a[i].kl - b[j].kl);
      if (gap < best_gap) {
        best_gap = gap;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_gap <= rel_tol * std::max(a[i].kl, 1e-12))
      matches.emplace_back(static_cast<int>(i), best);
  }
  return matches;
}

}  // namespace tiltlab
