#include "tiltlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tiltlab/csvio.hpp"
#include "tiltlab/mathutil.hpp"
#include "tiltlab/policy.hpp"

namespace tiltlab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ParseCtx {
  ValidationReport* report;

  void error(const std::string& path, const std::string& message) {
    report->findings.push_back({path, message, true});
  }
  void warn(const std::string& path, const std::string& message) {
    report->findings.push_back({path, message, false});
  }
  void note(const std::string& message) { report->notes.push_back(message); }
};

double get_number(const json& j, const std::string& path, const char* key, double fallback,
                  ParseCtx& ctx, bool required = false) {
  if (!j.contains(key)) {
    if (required) ctx.error(path + "." + key, "required field missing");
    return fallback;
  }
  if (!j[key].is_number()) {
    ctx.error(path + "." + key, "expected a number");
    return fallback;
  }
  return j[key].get<double>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback, ParseCtx& ctx, bool required = false) {
  if (!j.contains(key)) {
    if (required) ctx.error(path + "." + key, "required field missing");
    return fallback;
  }
  if (!j[key].is_string()) {
    ctx.error(path + "." + key, "expected a string");
    return fallback;
  }
  return j[key].get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback,
              ParseCtx& ctx) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) {
    ctx.error(path + "." + key, "expected a boolean");
    return fallback;
  }
  return j[key].get<bool>();
}

Misspecification parse_misspec(const json& j, const std::string& path, ParseCtx& ctx) {
  Misspecification spec;
  const std::string mode = get_string(j, path, "mode", "none", ctx);
  if (mode == "none")
    spec.mode = Misspecification::Mode::kNone;
  else if (mode == "tail_inflation")
    spec.mode = Misspecification::Mode::kTailInflation;
  else if (mode == "feature_shortcut")
    spec.mode = Misspecification::Mode::kFeatureShortcut;
  else
    ctx.error(path + ".mode", "unknown mode '" + mode + "'");
  spec.strength = get_number(j, path, "strength", 0.0, ctx);
  if (spec.strength < 0.0) ctx.error(path + ".strength", "must be >= 0");
  spec.threshold_quantile = get_number(j, path, "threshold_quantile", 0.9, ctx);
  if (spec.mode == Misspecification::Mode::kTailInflation &&
      !(spec.threshold_quantile > 0.0 && spec.threshold_quantile < 1.0))
    ctx.error(path + ".threshold_quantile", "must be in (0,1)");
  return spec;
}

WorldConfig parse_world_config(const json& j, const std::string& path, ParseCtx& ctx) {
  WorldConfig config;
  config.prompts = static_cast<int>(get_number(j, path, "prompts", 8, ctx, true));
  if (config.prompts < 1) ctx.error(path + ".prompts", "must be >= 1");
  config.responses_per_prompt =
      static_cast<int>(get_number(j, path, "responses_per_prompt", 16, ctx, true));
  if (config.responses_per_prompt < 2)
    ctx.error(path + ".responses_per_prompt", "must be >= 2 (pairwise comparisons need two)");
  if (j.contains("properties") && j["properties"].is_array()) {
    config.properties.clear();
    for (const auto& name : j["properties"]) {
      if (!name.is_string()) {
        ctx.error(path + ".properties", "entries must be strings");
        continue;
      }
      config.properties.push_back(name.get<std::string>());
    }
    std::set<std::string> unique(config.properties.begin(), config.properties.end());
    if (unique.size() != config.properties.size())
      ctx.error(path + ".properties", "duplicate property names");
  } else {
    ctx.error(path + ".properties", "required array missing");
  }
  if (config.properties.empty()) ctx.error(path + ".properties", "must be nonempty");
  config.base_concentration = get_number(j, path, "base_concentration", 0.0, ctx);
  if (config.base_concentration < 0.0)
    ctx.error(path + ".base_concentration", "must be >= 0 (0 selects exactly uniform rows)");
  config.seed = static_cast<std::uint64_t>(get_number(j, path, "seed", 0, ctx, true));
  config.reward_scale = get_number(j, path, "reward_scale", 1.5, ctx);
  if (!(config.reward_scale > 0.0)) ctx.error(path + ".reward_scale", "must be > 0");
  config.prompt_scale_sigma = get_number(j, path, "prompt_scale_sigma", 0.0, ctx);
  if (config.prompt_scale_sigma < 0.0) ctx.error(path + ".prompt_scale_sigma", "must be >= 0");
  config.property_correlation = get_number(j, path, "property_correlation", 0.0, ctx);
  if (std::abs(config.property_correlation) > 1.0)
    ctx.error(path + ".property_correlation", "must be in [-1,1]");
  config.shortcut_fraction = get_number(j, path, "shortcut_fraction", 0.0, ctx);
  if (config.shortcut_fraction < 0.0 || config.shortcut_fraction > 1.0)
    ctx.error(path + ".shortcut_fraction", "must be in [0,1]");
  if (j.contains("misspecification"))
    config.misspec = parse_misspec(j["misspecification"], path + ".misspecification", ctx);
  return config;
}

FitConfig parse_fit_config(const json& j, const std::string& path, ParseCtx& ctx) {
  FitConfig config;
  config.l2_weight = get_number(j, path, "l2_weight", config.l2_weight, ctx);
  if (!(config.l2_weight > 0.0))
    ctx.error(path + ".l2_weight", "must be > 0 for Bradley-Terry identifiability");
  config.max_iterations =
      static_cast<int>(get_number(j, path, "max_iterations", config.max_iterations, ctx));
  if (config.max_iterations < 1) ctx.error(path + ".max_iterations", "must be >= 1");
  config.tolerance = get_number(j, path, "tolerance", config.tolerance, ctx);
  if (config.tolerance < 0.0) ctx.error(path + ".tolerance", "must be >= 0");
  const std::string rule = get_string(j, path, "step_rule", "backtracking", ctx);
  if (rule == "backtracking")
    config.step_rule = FitConfig::StepRule::kBacktracking;
  else if (rule == "fixed")
    config.step_rule = FitConfig::StepRule::kFixed;
  else
    ctx.error(path + ".step_rule", "expected 'fixed' or 'backtracking'");
  config.step_size = get_number(j, path, "step_size", config.step_size, ctx);
  if (!(config.step_size > 0.0)) ctx.error(path + ".step_size", "must be > 0");
  return config;
}

ReferenceSpec parse_reference_spec(const json& j, const std::string& path, ParseCtx& ctx) {
  ReferenceSpec spec;
  const std::string strategy = get_string(j, path, "strategy", "", ctx, true);
  if (strategy == "canned_responses")
    spec.strategy = ReferenceSpec::Strategy::kCannedResponses;
  else if (strategy == "empirical_quantile")
    spec.strategy = ReferenceSpec::Strategy::kEmpiricalQuantile;
  else if (strategy == "gaussian_quantile")
    spec.strategy = ReferenceSpec::Strategy::kGaussianQuantile;
  else if (strategy == "fixed_zero")
    spec.strategy = ReferenceSpec::Strategy::kFixedZero;
  else if (!strategy.empty())
    ctx.error(path + ".strategy", "unknown strategy '" + strategy + "'");

  if (spec.strategy == ReferenceSpec::Strategy::kCannedResponses) {
    if (!j.contains("canned_ids") || !j["canned_ids"].is_array() || j["canned_ids"].empty()) {
      ctx.error(path + ".canned_ids", "canned_responses requires a nonempty id list");
    } else {
      for (const auto& id : j["canned_ids"]) {
        if (id.is_string())
          spec.canned_ids.push_back(id.get<std::string>());
        else
          ctx.error(path + ".canned_ids", "entries must be strings");
      }
    }
    const std::string aggregate = get_string(j, path, "canned_aggregate", "mean", ctx);
    if (aggregate == "mean")
      spec.canned_aggregate = ReferenceSpec::CannedAggregate::kMean;
    else if (aggregate == "max")
      spec.canned_aggregate = ReferenceSpec::CannedAggregate::kMax;
    else
      ctx.error(path + ".canned_aggregate", "expected 'mean' or 'max'");
  }
  if (spec.strategy == ReferenceSpec::Strategy::kEmpiricalQuantile ||
      spec.strategy == ReferenceSpec::Strategy::kGaussianQuantile) {
    // Quantiles are always explicit in configs; there is no good universal
    // default across single-reward and aggregation runs.
    spec.quantile = get_number(j, path, "quantile", 0.0, ctx, true);
    if (j.contains("quantile") && !(spec.quantile > 0.0 && spec.quantile < 1.0))
      ctx.error(path + ".quantile", "must be in (0,1)");
    spec.samples_per_prompt = static_cast<int>(
        get_number(j, path, "samples_per_prompt", spec.samples_per_prompt, ctx));
    if (spec.samples_per_prompt < 2) ctx.error(path + ".samples_per_prompt", "must be >= 2");
  }
  return spec;
}

MethodSpec parse_method(const json& j, const std::string& path, ParseCtx& ctx) {
  MethodSpec method;
  const std::string kind = get_string(j, path, "kind", "", ctx, true);
  if (!kind.empty()) {
    try {
      method.kind = utility_kind_from_string(kind);
    } catch (const std::invalid_argument&) {
      ctx.error(path + ".kind", "unknown method kind '" + kind + "'");
    }
  }
  method.name = get_string(j, path, "name", kind, ctx);
  if (method.name.empty()) ctx.error(path + ".name", "method name must be nonempty");

  if (j.contains("properties") && j["properties"].is_array()) {
    for (const auto& name : j["properties"])
      if (name.is_string())
        method.properties.push_back(name.get<std::string>());
      else
        ctx.error(path + ".properties", "entries must be strings");
  } else if (j.contains("property") && j["property"].is_string()) {
    method.properties.push_back(j["property"].get<std::string>());
  } else {
    ctx.error(path, "missing 'property' or 'properties'");
  }

  const bool single = method.kind == UtilityKind::kRaw || method.kind == UtilityKind::kLsc ||
                      method.kind == UtilityKind::kCenteredOnly ||
                      method.kind == UtilityKind::kLogSigmoidOnly;
  if (single && method.properties.size() != 1)
    ctx.error(path + ".properties", std::string(to_string(method.kind)) +
                                        " takes exactly one property");
  if (!single && method.properties.size() < 2)
    ctx.error(path + ".properties",
              std::string(to_string(method.kind)) + " takes at least two properties");

  if (method.kind == UtilityKind::kWeightedSum) {
    if (!j.contains("weights") || !j["weights"].is_array()) {
      ctx.error(path + ".weights", "weighted_sum requires a weight array");
    } else {
      for (const auto& w : j["weights"])
        if (w.is_number())
          method.weights.push_back(w.get<double>());
        else
          ctx.error(path + ".weights", "entries must be numbers");
      if (method.weights.size() != method.properties.size())
        ctx.error(path + ".weights", "length must match properties");
      double total = 0.0;
      bool negative = false;
      for (double w : method.weights) {
        total += w;
        negative |= w < 0.0;
      }
      if (negative) ctx.error(path + ".weights", "weights must be nonnegative");
      if (std::abs(total - 1.0) > 1e-9)
        ctx.error(path + ".weights",
                  "weights sum to " + format_double(total) + ", expected 1");
    }
  }

  const bool needs_references = method.kind == UtilityKind::kLsc ||
                                method.kind == UtilityKind::kCenteredOnly ||
                                method.kind == UtilityKind::kSumLsc;
  if (needs_references) {
    if (!j.contains("references") || !j["references"].is_object()) {
      ctx.error(path + ".references",
                std::string(to_string(method.kind)) + " requires per-property reference specs");
    } else {
      for (const auto& [property, spec] : j["references"].items())
        method.references.emplace(
            property, parse_reference_spec(spec, path + ".references." + property, ctx));
      for (const auto& property : method.properties)
        if (!method.references.count(property))
          ctx.error(path + ".references", "missing reference spec for '" + property + "'");
    }
  }
  return method;
}

SweepKnobs parse_knobs(const json& j, const std::string& path, ParseCtx& ctx) {
  SweepKnobs knobs;
  const int sources = static_cast<int>(j.contains("gamma")) +
                      static_cast<int>(j.contains("alpha")) + static_cast<int>(j.contains("k"));
  if (sources != 1) {
    ctx.error(path, "exactly one of 'gamma', 'alpha', or 'k' must be given");
    return knobs;
  }
  const char* key = j.contains("gamma") ? "gamma" : j.contains("alpha") ? "alpha" : "k";
  if (!j[key].is_array() || j[key].empty()) {
    ctx.error(path + "." + key, "expected a nonempty array of numbers");
    return knobs;
  }
  std::vector<double> values;
  for (const auto& v : j[key]) {
    if (!v.is_number()) {
      ctx.error(path + "." + key, "entries must be numbers");
      return knobs;
    }
    values.push_back(v.get<double>());
  }
  if (!std::is_sorted(values.begin(), values.end()))
    ctx.error(path + "." + key, "knob values must be sorted ascending");

  if (std::string(key) == "k") {
    knobs.type = SweepKnobs::Type::kK;
    for (double v : values)
      if (std::abs(v - std::round(v)) > 1e-9 || v < 1.0)
        ctx.error(path + ".k", "k values must be integers >= 1");
    knobs.values = values;
  } else {
    knobs.type = SweepKnobs::Type::kGamma;
    if (std::string(key) == "alpha") {
      for (double alpha : values) {
        if (!(alpha > 0.0 && alpha < 1.0)) {
          ctx.error(path + ".alpha", "alpha values must be in (0,1)");
          continue;
        }
        const double gamma = TiltSpec::from_alpha(alpha).gamma;
        ctx.note("alpha=" + format_double(alpha) + " -> gamma=" + format_double(gamma));
        knobs.values.push_back(gamma);
      }
      std::sort(knobs.values.begin(), knobs.values.end());
    } else {
      for (double gamma : values)
        if (!(gamma > 0.0)) ctx.error(path + ".gamma", "gamma values must be > 0");
      knobs.values = values;
    }
  }
  return knobs;
}

Judge parse_judge(const json& j, const std::string& path, ParseCtx& ctx) {
  Judge judge;
  const std::string kind = get_string(j, path, "kind", "true_goodness", ctx);
  if (kind == "true_goodness")
    judge.kind = Judge::Kind::kTrueGoodness;
  else if (kind == "heldout_reward")
    judge.kind = Judge::Kind::kHeldoutReward;
  else
    ctx.error(path + ".kind", "expected 'true_goodness' or 'heldout_reward'");
  if (!j.contains("thresholds") || !j["thresholds"].is_object() || j["thresholds"].empty()) {
    ctx.error(path + ".thresholds", "required per-property win quantiles missing");
  } else {
    for (const auto& [property, quantile] : j["thresholds"].items()) {
      if (!quantile.is_number()) {
        ctx.error(path + ".thresholds." + property, "expected a number");
        continue;
      }
      const double q = quantile.get<double>();
      if (!(q > 0.0 && q < 1.0))
        ctx.error(path + ".thresholds." + property, "must be in (0,1)");
      judge.thresholds[property] = q;
    }
  }
  judge.heldout_pairs = static_cast<int>(get_number(j, path, "heldout_pairs", 20000, ctx));
  if (judge.heldout_pairs < 1) ctx.error(path + ".heldout_pairs", "must be >= 1");
  judge.heldout_seed = static_cast<std::uint64_t>(get_number(j, path, "heldout_seed", 17, ctx));
  judge.heldout_l2 = get_number(j, path, "heldout_l2", 1e-3, ctx);
  if (!(judge.heldout_l2 > 0.0)) ctx.error(path + ".heldout_l2", "must be > 0");
  return judge;
}

ExperimentConfig parse_config(const json& root, ParseCtx& ctx) {
  ExperimentConfig config;
  static const std::set<std::string> known_keys = {
      "world", "reward_fit", "methods", "knobs", "judge", "outputs", "reference_seed", "jobs"};
  for (const auto& [key, value] : root.items())
    if (!known_keys.count(key)) ctx.warn(key, "unknown key (ignored)");

  if (!root.contains("world") || !root["world"].is_object()) {
    ctx.error("world", "required object missing");
  } else {
    const auto& world = root["world"];
    const bool has_synth = world.contains("synthetic");
    const bool has_prefs = world.contains("preferences");
    if (has_synth == has_prefs) {
      ctx.error("world", "exactly one of 'synthetic' or 'preferences' must be given");
    } else if (has_synth) {
      config.synthetic = parse_world_config(world["synthetic"], "world.synthetic", ctx);
    } else {
      PreferenceSource source;
      const auto& prefs = world["preferences"];
      if (!prefs.contains("paths") || !prefs["paths"].is_array() || prefs["paths"].empty()) {
        ctx.error("world.preferences.paths", "required nonempty array missing");
      } else {
        for (const auto& p : prefs["paths"])
          if (p.is_string())
            source.paths.push_back(p.get<std::string>());
          else
            ctx.error("world.preferences.paths", "entries must be strings");
      }
      source.split_half = get_bool(prefs, "world.preferences", "split_half", true, ctx);
      config.preferences = std::move(source);
    }
  }

  if (root.contains("reward_fit")) {
    if (!root["reward_fit"].is_object()) {
      ctx.error("reward_fit", "expected an object keyed by property");
    } else {
      for (const auto& [property, fit] : root["reward_fit"].items())
        config.reward_fit.emplace(property,
                                  parse_fit_config(fit, "reward_fit." + property, ctx));
    }
  }

  if (!root.contains("methods") || !root["methods"].is_array() || root["methods"].empty()) {
    ctx.error("methods", "at least one method is required");
  } else {
    std::set<std::string> names;
    int index = 0;
    for (const auto& m : root["methods"]) {
      auto method = parse_method(m, "methods[" + std::to_string(index) + "]", ctx);
      if (!names.insert(method.name).second)
        ctx.error("methods[" + std::to_string(index) + "].name",
                  "duplicate method name '" + method.name + "'");
      config.methods.push_back(std::move(method));
      ++index;
    }
  }

  if (!root.contains("knobs") || !root["knobs"].is_object())
    ctx.error("knobs", "required object missing");
  else
    config.knobs = parse_knobs(root["knobs"], "knobs", ctx);
  if (config.knobs.values.empty()) ctx.error("knobs", "at least one knob value is required");

  if (!root.contains("judge") || !root["judge"].is_object())
    ctx.error("judge", "required object missing");
  else
    config.judge = parse_judge(root["judge"], "judge", ctx);

  config.outputs = get_string(root, "", "outputs", "out", ctx);
  if (config.outputs.empty()) ctx.error("outputs", "must be nonempty");
  config.reference_seed =
      static_cast<std::uint64_t>(get_number(root, "", "reference_seed", 0, ctx));
  config.jobs = static_cast<int>(get_number(root, "", "jobs", 1, ctx));
  if (config.jobs < 1) ctx.error("jobs", "must be >= 1");

  // Cross-field checks.
  if (config.synthetic) {
    std::set<std::string> properties(config.synthetic->properties.begin(),
                                     config.synthetic->properties.end());
    for (std::size_t i = 0; i < config.methods.size(); ++i)
      for (const auto& property : config.methods[i].properties)
        if (!properties.count(property))
          ctx.error("methods[" + std::to_string(i) + "].properties",
                    "property '" + property + "' is not in the world");
    for (const auto& [property, quantile] : config.judge.thresholds) {
      (void)quantile;
      if (!properties.count(property))
        ctx.error("judge.thresholds", "property '" + property + "' is not in the world");
    }
  }
  if (config.preferences && config.judge.kind == Judge::Kind::kTrueGoodness)
    ctx.error("judge.kind",
              "preference-file worlds have no ground truth; use 'heldout_reward'");
  return config;
}

json read_json_file(const std::string& path, ParseCtx& ctx) {
  std::ifstream in(path);
  if (!in) {
    ctx.error("(file)", "cannot open " + path);
    return json();
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    ctx.error("(file)", std::string("JSON parse error: ") + e.what());
    return json();
  }
}

}  // namespace

ValidationReport validate_config(const std::string& path) {
  ValidationReport report;
  ParseCtx ctx{&report};
  const json root = read_json_file(path, ctx);
  if (report.ok() && root.is_object()) parse_config(root, ctx);
  return report;
}

ExperimentConfig load_config(const std::string& path) {
  ValidationReport report;
  ParseCtx ctx{&report};
  const json root = read_json_file(path, ctx);
  ExperimentConfig config;
  if (report.ok() && root.is_object()) config = parse_config(root, ctx);
  if (!report.ok()) {
    for (const auto& finding : report.findings)
      if (finding.error) throw ConfigError(finding.path, finding.message);
  }
  return config;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash_hex: cannot open " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << hash;
  return out.str();
}

namespace {

// Merges preference files into one interned shape; pairs keep file order.
PreferenceData load_and_merge(const std::vector<std::string>& paths) {
  PreferenceData merged;
  for (const auto& path : paths) {
    PreferenceData data = load_preferences(path);
    std::vector<int> prompt_map(data.shape.num_prompts());
    std::vector<std::vector<int>> response_map(data.shape.num_prompts());
    for (int p = 0; p < data.shape.num_prompts(); ++p) {
      int merged_p = merged.shape.find_prompt(data.shape.prompt_ids[p]);
      if (merged_p < 0) {
        merged_p = merged.shape.num_prompts();
        merged.shape.prompt_ids.push_back(data.shape.prompt_ids[p]);
        merged.shape.response_ids.emplace_back();
      }
      prompt_map[p] = merged_p;
      response_map[p].resize(data.shape.num_responses(p));
      for (int r = 0; r < data.shape.num_responses(p); ++r) {
        const auto& id = data.shape.response_ids[p][r];
        int merged_r = merged.shape.find_response(merged_p, id);
        if (merged_r < 0) {
          merged_r = merged.shape.num_responses(merged_p);
          merged.shape.response_ids[merged_p].push_back(id);
        }
        response_map[p][r] = merged_r;
      }
    }
    for (auto pair : data.pairs) {
      pair.winner = response_map[pair.prompt][pair.winner];
      pair.loser = response_map[pair.prompt][pair.loser];
      pair.prompt = prompt_map[pair.prompt];
      merged.pairs.push_back(std::move(pair));
    }
  }
  return merged;
}

FrontierInputs inputs_from_preferences(const ExperimentConfig& config) {
  const PreferenceData data = load_and_merge(config.preferences->paths);
  if (data.pairs.empty()) throw std::runtime_error("preference files contain no pairs");

  FrontierInputs inputs;
  inputs.shape = data.shape;
  inputs.base_policy.label = "base";
  inputs.base_policy.probs.resize(data.shape.num_prompts());
  for (int p = 0; p < data.shape.num_prompts(); ++p) {
    const int n = data.shape.num_responses(p);
    inputs.base_policy.probs[p].assign(n, 1.0 / n);
  }

  // Alternate pairs between the alignment fit and the heldout judge fit.
  std::map<std::string, std::vector<PreferencePair>> train_pairs, judge_pairs;
  std::map<std::string, int> seen;
  for (const auto& pair : data.pairs) {
    const int position = seen[pair.property]++;
    if (!config.preferences->split_half || position % 2 == 0)
      train_pairs[pair.property].push_back(pair);
    if (!config.preferences->split_half || position % 2 == 1)
      judge_pairs[pair.property].push_back(pair);
  }
  for (const auto& [property, pairs] : train_pairs) {
    FitConfig fit;
    if (auto it = config.reward_fit.find(property); it != config.reward_fit.end())
      fit = it->second;
    inputs.alignment_rewards.emplace(property, fit_bt(pairs, data.shape, fit));
    const auto& heldout = judge_pairs[property];
    if (heldout.empty())
      throw std::runtime_error("property '" + property + "': no heldout pairs for the judge fit");
    inputs.judge_rewards.emplace(property, fit_bt(heldout, data.shape, fit));
  }
  inputs.win_thresholds = config.judge.thresholds;
  for (const auto& [property, quantile] : inputs.win_thresholds) {
    (void)quantile;
    if (!inputs.alignment_rewards.count(property))
      throw std::runtime_error("judge threshold names unknown property '" + property + "'");
  }
  return inputs;
}

FrontierInputs inputs_from_world(const World& world, const ExperimentConfig& config) {
  FrontierInputs inputs;
  inputs.base_policy = world.base_policy;
  inputs.shape = world.shape;
  inputs.alignment_rewards = learned_rewards(world);
  inputs.judge_rewards = resolve_judge_rewards(world, config.judge);
  inputs.win_thresholds = config.judge.thresholds;
  inputs.shortcut_flags = world.shortcut_flags;
  return inputs;
}

void write_frontier_csv(const std::string& path,
                        const std::vector<std::vector<FrontierPoint>>& frontiers) {
  std::set<std::string> win_columns;
  std::set<std::string> quantile_properties;
  bool any_shortcut = false;
  for (const auto& frontier : frontiers)
    for (const auto& point : frontier) {
      for (const auto& [name, value] : point.win_rates) {
        (void)value;
        win_columns.insert(name);
      }
      for (const auto& [property, q] : point.reward_quantiles) {
        (void)q;
        quantile_properties.insert(property);
      }
      any_shortcut |= point.shortcut_fraction.has_value();
    }

  std::vector<std::string> header = {"method", "knob_type", "knob", "kl"};
  for (const auto& name : win_columns) header.push_back(name);
  for (const auto& property : quantile_properties) {
    header.push_back("q25_" + property);
    header.push_back("q50_" + property);
    header.push_back("q75_" + property);
  }
  if (any_shortcut) header.push_back("shortcut_fraction");

  std::vector<std::vector<std::string>> rows;
  for (const auto& frontier : frontiers)
    for (const auto& point : frontier) {
      std::vector<std::string> row = {point.method, point.knob_type, format_double(point.knob),
                                      format_double(point.kl)};
      for (const auto& name : win_columns) {
        auto it = point.win_rates.find(name);
        row.push_back(it == point.win_rates.end() ? "" : format_double(it->second));
      }
      for (const auto& property : quantile_properties) {
        auto it = point.reward_quantiles.find(property);
        if (it == point.reward_quantiles.end()) {
          row.insert(row.end(), {"", "", ""});
        } else {
          for (double q : it->second) row.push_back(format_double(q));
        }
      }
      if (any_shortcut)
        row.push_back(point.shortcut_fraction ? format_double(*point.shortcut_fraction) : "");
      rows.push_back(std::move(row));
    }
  write_csv(path, header, rows);
}

void write_manifest(const std::string& path, const std::string& config_hash,
                    std::uint64_t seed, const std::string& status,
                    const std::vector<std::string>& artifacts, const std::string& error) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = seed;
  manifest["status"] = status;
  manifest["artifacts"] = artifacts;
  if (!error.empty()) manifest["error"] = error;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << manifest.dump(2) << '\n';
}

}  // namespace

int run_experiment(const std::string& config_path, const RunOverrides& overrides) {
  ValidationReport report = validate_config(config_path);
  if (!report.ok()) {
    for (const auto& finding : report.findings)
      if (finding.error) std::fprintf(stderr, "config error: %s: %s\n", finding.path.c_str(),
                                      finding.message.c_str());
    return kExitValidation;
  }
  ExperimentConfig config = load_config(config_path);
  if (overrides.jobs) config.jobs = *overrides.jobs;
  if (overrides.seed && config.synthetic) config.synthetic->seed = *overrides.seed;

  std::string outdir = config.outputs;
  if (const char* env = std::getenv("TILTLAB_OUTPUT_DIR")) outdir = env;
  if (overrides.output_dir) outdir = *overrides.output_dir;

  const std::string config_hash = file_hash_hex(config_path);
  const std::uint64_t seed = config.synthetic ? config.synthetic->seed : 0;

  std::error_code ec;
  fs::create_directories(fs::path(outdir) / "rewards", ec);
  if (ec) {
    std::fprintf(stderr, "cannot create output directory %s: %s\n", outdir.c_str(),
                 ec.message().c_str());
    return kExitRuntime;
  }
  const std::string manifest_path = (fs::path(outdir) / "manifest.json").string();
  std::vector<std::string> artifacts;
  write_manifest(manifest_path, config_hash, seed, "partial", artifacts, "");

  try {
    FrontierInputs inputs = config.synthetic
                                ? inputs_from_world(synthesize_world(*config.synthetic), config)
                                : inputs_from_preferences(config);

    // Frontier per method; methods run on the worker pool when jobs > 1.
    std::vector<std::vector<FrontierPoint>> frontiers(config.methods.size());
    auto run_method = [&](std::size_t i) {
      frontiers[i] = sweep_frontier(inputs, config.methods[i], config.knobs,
                                    config.reference_seed);
    };
    if (config.jobs > 1 && config.methods.size() > 1) {
      std::vector<std::future<void>> futures;
      for (std::size_t i = 0; i < config.methods.size(); ++i)
        futures.push_back(std::async(std::launch::async, run_method, i));
      for (auto& f : futures) f.get();
    } else {
      for (std::size_t i = 0; i < config.methods.size(); ++i) run_method(i);
    }

    const std::string frontier_path = (fs::path(outdir) / "frontier.csv").string();
    write_frontier_csv(frontier_path, frontiers);
    artifacts.push_back("frontier.csv");

    for (const auto& [property, model] : inputs.alignment_rewards) {
      const std::string name = "rewards/" + property + ".csv";
      write_table_csv((fs::path(outdir) / name).string(), inputs.shape, model.values, "value");
      artifacts.push_back(name);
    }

    // Aligned policies per (method, knob) for the concentration/balance reports.
    std::vector<std::vector<Policy>> aligned(config.methods.size());
    for (std::size_t i = 0; i < config.methods.size(); ++i) {
      const Utility utility = build_utility(inputs.base_policy, inputs.shape, config.methods[i],
                                            inputs.alignment_rewards, config.reference_seed);
      for (double knob : config.knobs.values)
        aligned[i].push_back(config.knobs.type == SweepKnobs::Type::kGamma
                                 ? tilt(inputs.base_policy, utility, knob)
                                 : best_of_k(inputs.base_policy, utility,
                                             static_cast<int>(std::round(knob))));
    }

    // Concentration: method pairs at KL-matched knobs, per shared property.
    {
      std::vector<std::string> header = {
          "method_a", "knob_a",  "kl_a",   "method_b", "knob_b", "kl_b",
          "property", "q25_a",   "q50_a",  "q75_a",    "iqr_a",  "low_tail_a",
          "high_tail_a", "q25_b", "q50_b", "q75_b",    "iqr_b",  "low_tail_b",
          "high_tail_b", "low_threshold", "high_threshold"};
      std::vector<std::vector<std::string>> rows;
      for (std::size_t i = 0; i < config.methods.size(); ++i) {
        for (std::size_t j = i + 1; j < config.methods.size(); ++j) {
          for (auto [a, b] : match_by_kl(frontiers[i], frontiers[j])) {
            for (const auto& property : config.methods[i].properties) {
              if (std::find(config.methods[j].properties.begin(),
                            config.methods[j].properties.end(),
                            property) == config.methods[j].properties.end())
                continue;
              const auto summary =
                  reward_concentration(aligned[i][a], aligned[j][b],
                                       inputs.alignment_rewards.at(property), inputs.base_policy);
              rows.push_back({config.methods[i].name, format_double(frontiers[i][a].knob),
                              format_double(summary.first.kl), config.methods[j].name,
                              format_double(frontiers[j][b].knob),
                              format_double(summary.second.kl), property,
                              format_double(summary.first.q25), format_double(summary.first.q50),
                              format_double(summary.first.q75), format_double(summary.first.iqr),
                              format_double(summary.first.low_tail_mass),
                              format_double(summary.first.high_tail_mass),
                              format_double(summary.second.q25), format_double(summary.second.q50),
                              format_double(summary.second.q75), format_double(summary.second.iqr),
                              format_double(summary.second.low_tail_mass),
                              format_double(summary.second.high_tail_mass),
                              format_double(summary.low_threshold),
                              format_double(summary.high_threshold)});
            }
          }
        }
      }
      if (!rows.empty()) {
        write_csv((fs::path(outdir) / "concentration.csv").string(), header, rows);
        artifacts.push_back("concentration.csv");
      }
    }

    // Balance: two-property methods only.
    {
      std::vector<std::string> header = {"method", "knob", "kl", "mean_abs_gap",
                                         "q25", "q50", "q75"};
      std::vector<std::vector<std::string>> rows;
      for (std::size_t i = 0; i < config.methods.size(); ++i) {
        if (config.methods[i].properties.size() != 2) continue;
        const std::vector<RewardModel> pair = {
            inputs.alignment_rewards.at(config.methods[i].properties[0]),
            inputs.alignment_rewards.at(config.methods[i].properties[1])};
        for (std::size_t k = 0; k < config.knobs.values.size(); ++k) {
          const auto summary = balance_diagnostic(aligned[i][k], pair, inputs.base_policy);
          rows.push_back({config.methods[i].name, format_double(config.knobs.values[k]),
                          format_double(frontiers[i][k].kl), format_double(summary.mean_abs_gap),
                          format_double(summary.q25), format_double(summary.q50),
                          format_double(summary.q75)});
        }
      }
      if (!rows.empty()) {
        write_csv((fs::path(outdir) / "balance.csv").string(), header, rows);
        artifacts.push_back("balance.csv");
      }
    }

    std::sort(artifacts.begin(), artifacts.end());
    write_manifest(manifest_path, config_hash, seed, "complete", artifacts, "");
  } catch (const std::exception& e) {
    write_manifest(manifest_path, config_hash, seed, "partial", artifacts, e.what());
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

int emit_plot_data(const std::string& run_dir, const std::string& out_path) {
  const std::string frontier_path = (fs::path(run_dir) / "frontier.csv").string();
  std::vector<std::vector<std::string>> rows;
  try {
    rows = read_csv(frontier_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "plot-data: %s\n", e.what());
    return kExitRuntime;
  }
  if (rows.size() < 1 || rows[0].size() < 4) {
    std::fprintf(stderr, "plot-data: %s has no frontier header\n", frontier_path.c_str());
    return kExitRuntime;
  }
  const auto& header = rows[0];
  std::vector<std::vector<std::string>> out_rows;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    for (std::size_t c = 4; c < row.size() && c < header.size(); ++c) {
      if (row[c].empty()) continue;
      out_rows.push_back({row[0], row[1], row[2], row[3], header[c], row[c]});
    }
  }
  const std::string destination =
      out_path.empty() ? (fs::path(run_dir) / "plot_data.csv").string() : out_path;
  try {
    write_csv(destination, {"method", "knob_type", "knob", "kl", "metric", "value"}, out_rows);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "plot-data: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tiltlab
