#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "netmarl/baselines.hpp"
#include "netmarl/langlab.hpp"
#include "netmarl/trainer.hpp"

namespace netmarl {

/// Every knob of an experiment. Parsed from flat `key = value` text with
/// `[section]` headers; unknown sections or keys are rejected.
struct ExperimentConfig {
  std::string network = "net1";  // net1 | net2 | path to a serialized graph
  std::string method = "emergent";
  std::vector<AgentId> blind;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output = "runs/default";
  bool record_wall = false;  // wall_ms column; off keeps reruns byte-identical
  int jobs = 1;

  SimConfig sim;
  TrainConfig train;
  PolicyConfig policy;
  DqnConfig dqn;
  int sotl_threshold = 5;

  int eval_episodes = 10;
  bool eval_greedy = true;
  int log_episodes = 20;  // sampled episodes logged after training for analysis

  std::vector<AgentId> ablate_blind_one{4};
  std::vector<AgentId> ablate_blind_two{4, 5};

  lang::GroundingOptions analysis;
  int silhouette_trials = 200;

  void validate() const;
};

/// Methods accepted by `method`.
const std::vector<std::string>& known_methods();
bool is_learned_method(const std::string& method);

/// Parses config text on top of the defaults. Throws ConfigError with the
/// offending line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text of every field; parse_config(config_text(c)) == c.
std::string config_text(const ExperimentConfig& cfg);
/// Stable FNV-1a hash of config_text, ignoring `jobs` and `output`.
std::uint64_t config_digest(const ExperimentConfig& cfg);
std::string digest_hex(std::uint64_t digest);

AgentGraph resolve_network(const std::string& network);

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitArtifact = 3, kExitRuntime = 4 };

/// Maps a library error to its exit code.
int exit_code_for(const std::exception& e);

/// Output directory: NETMARL_OUT when set, else cfg.output.
std::filesystem::path output_dir(const ExperimentConfig& cfg);

struct CommandIo {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

/// Trains every seed; writes seed_<s>/metrics.csv, checkpoints, logs/ and
/// manifest.json under the output directory.
int cmd_train(const ExperimentConfig& cfg, const CommandIo& io);
/// Evaluates a checkpoint (learned methods) or the controller itself.
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, bool perturbed,
             const CommandIo& io);
/// {full, blank, blind one, blind two} on shared seeds; writes ablation.csv.
int cmd_ablate(const ExperimentConfig& cfg, const CommandIo& io);
/// Language analysis of every *.jsonl log below `log_dir`.
int cmd_analyze(const ExperimentConfig& cfg, const std::filesystem::path& log_dir,
                const CommandIo& io);
/// One untrained (or checkpointed) rollout, rendering each tick.
int cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, int frames,
                 const CommandIo& io);
/// Audits that every artifact below `dir` carries the same config digest.
int cmd_verify(const std::filesystem::path& dir, const CommandIo& io);

/// Re-simulates a logged episode from its seed and logged actions.
/// `on_tick(t, state)` sees the state after each tick. Returns the per-tick
/// mean reward series.
std::vector<double> replay_episode(const AgentGraph& graph, const SimConfig& sim, const EpisodeLog& log,
                                   const std::function<void(int, const TrafficState&)>& on_tick = {});
/// Graph with the carriageways named in a log's `blocked` label closed.
AgentGraph graph_for_log(const AgentGraph& base, const EpisodeLog& log);

/// Result of training one seed of a learned method.
struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> metrics;
  std::vector<std::pair<int, std::string>> checkpoints;
  std::string manifest;
  std::vector<EpisodeLog> logs;  // analysis logs
};

/// Policies initialised for `method` (mode, blind set) from `cfg`.
PolicySet make_policies(const AgentGraph& graph, const ExperimentConfig& cfg, const std::string& method,
                        std::span<const AgentId> blind, std::uint64_t seed);

/// Controller for non-REINFORCE methods (fixed_time, sotl); nullptr otherwise.
std::unique_ptr<Controller> make_controller(const AgentGraph& graph, const ExperimentConfig& cfg);

}  // namespace netmarl
