#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tiltlab/config.hpp"

namespace {

int run_validate(const std::string& config_path) {
  const tiltlab::ValidationReport report = tiltlab::validate_config(config_path);
  for (const auto& finding : report.findings)
    std::printf("%s: %s: %s\n", finding.error ? "error" : "warning", finding.path.c_str(),
                finding.message.c_str());
  for (const auto& note : report.notes) std::printf("note: %s\n", note.c_str());
  if (report.ok()) {
    std::printf("ok: %s\n", config_path.c_str());
    return tiltlab::kExitOk;
  }
  return tiltlab::kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-space alignment lab: exact KL-regularized tilting with "
               "log-sigmoid-centered reward transforms"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::string run_dir;
  std::string plot_out;
  std::uint64_t seed = 0;
  int jobs = 0;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Path to the experiment config (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Override the output directory");
  auto* seed_opt = run->add_option("--seed", seed, "Override the synthetic world seed");
  auto* jobs_opt = run->add_option("--jobs", jobs, "Worker pool size for method sweeps");

  auto* validate = app.add_subcommand("validate", "Validate a config without running it");
  validate->add_option("config", config_path, "Path to the experiment config (JSON)")->required();

  auto* plot = app.add_subcommand("plot-data", "Emit a long-format table from a run directory");
  plot->add_option("run_dir", run_dir, "Directory written by 'run'")->required();
  plot->add_option("--output", plot_out, "Destination CSV (default <run_dir>/plot_data.csv)");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(run)) {
    tiltlab::RunOverrides overrides;
    if (!output_dir.empty()) overrides.output_dir = output_dir;
    if (seed_opt->count() > 0) overrides.seed = seed;
    if (jobs_opt->count() > 0) overrides.jobs = jobs;
    return tiltlab::run_experiment(config_path, overrides);
  }
  if (app.got_subcommand(validate)) return run_validate(config_path);
  if (app.got_subcommand(plot)) return tiltlab::emit_plot_data(run_dir, plot_out);
  return tiltlab::kExitValidation;
}
