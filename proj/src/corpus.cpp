#include "tiltlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "tiltlab/mathutil.hpp"
#include "tiltlab/rng.hpp"

namespace tiltlab {

namespace {

using nlohmann::json;

// Substream tags for world synthesis.
enum : std::uint64_t {
  kStreamBasePolicy = 1,
  kStreamRewards = 2,
  kStreamFlags = 3,
  kStreamPromptScale = 4,
};

std::string padded_id(const char* prefix, int index, int count) {
  int width = 1;
  for (int n = count - 1; n >= 10; n /= 10) ++width;
  std::string digits = std::to_string(index);
  const int pad = width - static_cast<int>(digits.size());
  return prefix + std::string(pad > 0 ? pad : 0, '0') + digits;
}

}  // namespace

const Table& World::true_reward_for(const std::string& property) const {
  auto it = true_reward.find(property);
  if (it == true_reward.end()) throw std::out_of_range("world: unknown property '" + property + "'");
  return it->second;
}

const Table& World::goodness_for(const std::string& property) const {
  auto it = goodness_prob.find(property);
  if (it == goodness_prob.end()) throw std::out_of_range("world: unknown property '" + property + "'");
  return it->second;
}

const std::vector<int>& World::reference_for(const std::string& property) const {
  auto it = reference_response.find(property);
  if (it == reference_response.end())
    throw std::out_of_range("world: unknown property '" + property + "'");
  return it->second;
}

std::vector<std::string> World::properties() const {
  std::vector<std::string> names;
  names.reserve(true_reward.size());
  for (const auto& [name, table] : true_reward) names.push_back(name);
  return names;
}

bool World::has_shortcut_flags() const {
  for (const auto& row : shortcut_flags)
    for (auto flag : row)
      if (flag) return true;
  return false;
}

PreferenceData load_preferences(const std::string& path, PreferenceFormat format) {
  if (format != PreferenceFormat::kJsonl)
    throw std::invalid_argument("load_preferences: unsupported format");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_preferences: cannot open " + path);

  PreferenceData data;
  std::unordered_map<std::string, int> prompt_index;
  std::vector<std::unordered_map<std::string, int>> response_index;

  auto intern_prompt = [&](const std::string& id) {
    auto [it, inserted] = prompt_index.try_emplace(id, data.shape.num_prompts());
    if (inserted) {
      data.shape.prompt_ids.push_back(id);
      data.shape.response_ids.emplace_back();
      response_index.emplace_back();
    }
    return it->second;
  };
  auto intern_response = [&](int prompt, const std::string& id) {
    auto [it, inserted] =
        response_index[prompt].try_emplace(id, data.shape.num_responses(prompt));
    if (inserted) data.shape.response_ids[prompt].push_back(id);
    return it->second;
  };

  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_preferences: " + path + " line " +
                               std::to_string(line_number) + ": " + e.what());
    }
    auto field = [&](const char* name) -> std::string {
      if (!record.contains(name) || !record[name].is_string())
        throw std::runtime_error("load_preferences: " + path + " line " +
                                 std::to_string(line_number) + ": missing string field '" +
                                 name + "'");
      return record[name].get<std::string>();
    };
    const std::string prompt = field("prompt");
    const std::string chosen = field("chosen");
    const std::string rejected = field("rejected");
    const std::string property = field("property");
    if (chosen == rejected)
      throw std::runtime_error("load_preferences: " + path + " line " +
                               std::to_string(line_number) + ": chosen equals rejected");
    const int p = intern_prompt(prompt);
    PreferencePair pair;
    pair.prompt = p;
    pair.winner = intern_response(p, chosen);
    pair.loser = intern_response(p, rejected);
    pair.property = property;
    data.pairs.push_back(std::move(pair));
  }
  return data;
}

World synthesize_world(const WorldConfig& config) {
  if (config.prompts < 1) throw std::invalid_argument("world config: prompts must be >= 1");
  if (config.responses_per_prompt < 2)
    throw std::invalid_argument("world config: responses per prompt must be >= 2");
  if (config.properties.empty())
    throw std::invalid_argument("world config: at least one property required");
  if (std::abs(config.property_correlation) > 1.0)
    throw std::invalid_argument("world config: property correlation must be in [-1,1]");
  if (config.shortcut_fraction < 0.0 || config.shortcut_fraction > 1.0)
    throw std::invalid_argument("world config: shortcut fraction must be in [0,1]");

  const int P = config.prompts;
  const int R = config.responses_per_prompt;

  World world;
  world.seed = config.seed;
  world.misspec = config.misspec;
  world.shape.prompt_ids.reserve(P);
  for (int p = 0; p < P; ++p) world.shape.prompt_ids.push_back(padded_id("p", p, P));
  world.shape.response_ids.assign(P, {});
  for (int p = 0; p < P; ++p) {
    world.shape.response_ids[p].reserve(R);
    for (int r = 0; r < R; ++r) world.shape.response_ids[p].push_back(padded_id("y", r, R));
  }

  // Base policy.
  world.base_policy.label = "base";
  world.base_policy.probs.assign(P, std::vector<double>(R, 1.0 / R));
  if (config.base_concentration > 0.0) {
    Rng rng(substream(config.seed, kStreamBasePolicy));
    for (int p = 0; p < P; ++p)
      world.base_policy.probs[p] = rng.dirichlet(config.base_concentration, R);
  }

  // Per-prompt reward scale, shared by all properties.
  std::vector<double> prompt_scale(P, config.reward_scale);
  if (config.prompt_scale_sigma > 0.0) {
    Rng rng(substream(config.seed, kStreamPromptScale));
    for (int p = 0; p < P; ++p)
      prompt_scale[p] = config.reward_scale * std::exp(config.prompt_scale_sigma * rng.normal());
  }

  // True rewards. Property 0 provides the shared latent; later properties mix
  // it in with the configured correlation.
  Rng reward_rng(substream(config.seed, kStreamRewards));
  const double rho = config.property_correlation;
  const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  Table latent0(P, std::vector<double>(R, 0.0));
  for (std::size_t i = 0; i < config.properties.size(); ++i) {
    const std::string& property = config.properties[i];
    if (world.true_reward.count(property))
      throw std::invalid_argument("world config: duplicate property '" + property + "'");
    Table rewards(P, std::vector<double>(R, 0.0));
    for (int p = 0; p < P; ++p) {
      for (int r = 0; r < R; ++r) {
        double z = reward_rng.normal();
        if (i == 0)
          latent0[p][r] = z;
        else
          z = rho * latent0[p][r] + mix * z;
        rewards[p][r] = prompt_scale[p] * z;
      }
    }
    world.true_reward.emplace(property, std::move(rewards));
  }

  // Designated reference responses (per-prompt lower median by true reward)
  // and the implied goodness probabilities.
  for (const auto& property : config.properties) {
    const Table& rewards = world.true_reward.at(property);
    std::vector<int> refs(P, 0);
    Table goodness(P);
    for (int p = 0; p < P; ++p) {
      std::vector<int> order(R);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return rewards[p][a] < rewards[p][b]; });
      refs[p] = order[(R - 1) / 2];
      goodness[p].resize(R);
      const double ref_reward = rewards[p][refs[p]];
      for (int r = 0; r < R; ++r) goodness[p][r] = sigmoid(rewards[p][r] - ref_reward);
    }
    world.reference_response.emplace(property, std::move(refs));
    world.goodness_prob.emplace(property, std::move(goodness));
  }

  world.shortcut_flags.assign(P, std::vector<std::uint8_t>(R, 0));
  if (config.shortcut_fraction > 0.0) {
    Rng rng(substream(config.seed, kStreamFlags));
    for (int p = 0; p < P; ++p)
      for (int r = 0; r < R; ++r)
        world.shortcut_flags[p][r] = rng.uniform() < config.shortcut_fraction ? 1 : 0;
  }
  return world;
}

std::vector<PreferencePair> sample_preferences(const World& world, const std::string& property,
                                               int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample_preferences: n must be >= 0");
  const Table& rewards = world.true_reward_for(property);
  const int P = world.shape.num_prompts();
  Rng rng(seed);
  std::vector<PreferencePair> pairs;
  pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int p = static_cast<int>(rng.uniform_int(P));
    const int count = world.shape.num_responses(p);
    const int a = static_cast<int>(rng.uniform_int(count));
    int b = static_cast<int>(rng.uniform_int(count - 1));
    if (b >= a) ++b;
    const bool a_wins = rng.uniform() < sigmoid(rewards[p][a] - rewards[p][b]);
    PreferencePair pair;
    pair.prompt = p;
    pair.winner = a_wins ? a : b;
    pair.loser = a_wins ? b : a;
    pair.property = property;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

RewardModel corrupt_reward(const World& world, const std::string& property,
                           const Misspecification& spec) {
  if (spec.strength < 0.0) throw std::invalid_argument("misspecification: strength must be >= 0");
  const Table& truth = world.true_reward_for(property);

  RewardModel model;
  model.property = property;
  model.gauge = Gauge::kRaw;
  model.values = truth;
  if (spec.mode == Misspecification::Mode::kNone || spec.strength == 0.0) return model;

  switch (spec.mode) {
    case Misspecification::Mode::kTailInflation: {
      if (!(spec.threshold_quantile > 0.0 && spec.threshold_quantile < 1.0))
        throw std::invalid_argument("misspecification: threshold quantile must be in (0,1)");
      for (std::size_t p = 0; p < model.values.size(); ++p) {
        const double threshold = sample_quantile(truth[p], spec.threshold_quantile);
        for (double& value : model.values[p])
          value += spec.strength * std::max(0.0, value - threshold);
      }
      break;
    }
    case Misspecification::Mode::kFeatureShortcut: {
      for (std::size_t p = 0; p < model.values.size(); ++p)
        for (std::size_t r = 0; r < model.values[p].size(); ++r)
          if (world.shortcut_flags[p][r]) model.values[p][r] += spec.strength;
      break;
    }
    case Misspecification::Mode::kNone:
      break;
  }
  return model;
}

}  // namespace tiltlab
