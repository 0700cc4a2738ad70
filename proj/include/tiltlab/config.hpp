#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tiltlab/corpus.hpp"
#include "tiltlab/harness.hpp"
#include "tiltlab/reward.hpp"
#include "tiltlab/transform.hpp"

namespace tiltlab {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes shared by run/validate.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

struct PreferenceSource {
  std::vector<std::string> paths;
  // Fit alignment rewards on even-positioned pairs and the heldout judge on
  // odd-positioned pairs.
  bool split_half = true;
};

struct ExperimentConfig {
  // Exactly one of the two world sources.
  std::optional<WorldConfig> synthetic;
  std::optional<PreferenceSource> preferences;

  std::map<std::string, FitConfig> reward_fit;  // per property (preference mode)
  std::vector<MethodSpec> methods;
  SweepKnobs knobs;
  Judge judge;
  std::string outputs = "out";
  std::uint64_t reference_seed = 0;
  int jobs = 1;
};

struct Finding {
  std::string path;     // config field path, e.g. "methods[2].weights"
  std::string message;
  bool error = true;
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::vector<std::string> notes;  // informational echoes, e.g. alpha -> gamma

  bool ok() const {
    for (const auto& f : findings)
      if (f.error) return false;
    return true;
  }
};

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error(path + ": " + message), field_path(path) {}
  std::string field_path;
};

// Parses and fully validates; throws ConfigError with the field path on the
// first hard error.
ExperimentConfig load_config(const std::string& path);

// Schema plus cross-field validation without executing anything. Parse
// problems become findings rather than exceptions.
ValidationReport validate_config(const std::string& path);

struct RunOverrides {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

// Executes the experiment described by the config: synthesizes or loads the
// world, fits/derives rewards, sweeps every method, and writes the CSV
// artifacts plus a manifest. Returns an ExitCode.
int run_experiment(const std::string& config_path, const RunOverrides& overrides = {});

// Rewrites a run directory's frontier.csv into a long-format table
// (method, knob_type, knob, kl, metric, value) for plotting.
int emit_plot_data(const std::string& run_dir, const std::string& out_path);

// FNV-1a hash of a file's bytes, in hex; recorded in the manifest.
std::string file_hash_hex(const std::string& path);

}  // namespace tiltlab
