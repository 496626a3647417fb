// Command-line entry point: train, eval, ablate, analyze, simulate, verify.
#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "netmarl/error.hpp"
#include "netmarl/experiment.hpp"

namespace fs = std::filesystem;
using namespace netmarl;

namespace {

ExperimentConfig load_or_default(const std::string& path, int jobs) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  if (jobs > 0) cfg.jobs = jobs;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netmarl: networked multi-agent RL with emergent communication"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "Seeds trained in parallel (overrides experiment.jobs)")->check(CLI::PositiveNumber);

  std::string config, checkpoint, log_dir, verify_dir;
  bool perturbed = false;
  int frames = -1;

  auto* train = app.add_subcommand("train", "Train every seed of the configured method");
  train->add_option("config", config, "Experiment config file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (or a fixed controller)");
  eval->add_option("config", config, "Experiment config file")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
  eval->add_flag("--perturbed", perturbed, "Close one carriageway per episode");

  auto* ablate = app.add_subcommand("ablate", "Full / blank / blind ablation suite on shared seeds");
  ablate->add_option("config", config, "Experiment config file")->required();

  auto* analyze = app.add_subcommand("analyze", "Language analysis of episode logs");
  analyze->add_option("logs", log_dir, "Directory holding *.jsonl episode logs")->required();
  analyze->add_option("--config", config, "Experiment config file (network, analysis options)");

  auto* simulate = app.add_subcommand("simulate", "Roll out one episode, rendering each tick");
  simulate->add_option("config", config, "Experiment config file")->required();
  simulate->add_option("--checkpoint", checkpoint, "Checkpoint file");
  simulate->add_option("--frames", frames, "Ticks to render (default: episode length)");

  auto* verify = app.add_subcommand("verify", "Check that all artifacts share one config digest");
  verify->add_option("dir", verify_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const CommandIo io{&std::cout, &std::cerr};
  try {
    if (*verify) return cmd_verify(verify_dir, io);
    if (*analyze) return cmd_analyze(load_or_default(config, jobs), log_dir, io);
    const ExperimentConfig cfg = load_or_default(config, jobs);
    if (*train) return cmd_train(cfg, io);
    if (*eval) return cmd_eval(cfg, checkpoint, perturbed, io);
    if (*ablate) return cmd_ablate(cfg, io);
    if (*simulate) return cmd_simulate(cfg, checkpoint, frames, io);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitUsage;
}
