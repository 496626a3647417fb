#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "netmarl/diff/nn.hpp"
#include "netmarl/episode_log.hpp"
#include "netmarl/policy.hpp"

namespace netmarl {

/// Baseline subtracted from the discounted return G_i(T).
enum class BaselineKind : std::uint8_t {
  WindowMean,  // b_i = mean window reward of agent i in the episode
  ReturnEma,   // b_i(T) = moving average of G_i(T) over past episodes
};

const char* baseline_name(BaselineKind b);
BaselineKind parse_baseline(const std::string& s);

struct TrainConfig {
  int episodes = 300;
  double gamma = 0.99;
  double lr = 1e-4;
  int bptt_window = 25;   // ticks; a multiple of the action window
  double clip_norm = 5.0; // global gradient norm; <= 0 disables
  int checkpoint_every = 50;
  bool robust = false;    // train on perturbed variants
  int robust_variants = 25;
  BaselineKind baseline = BaselineKind::WindowMean;
  double baseline_decay = 0.9;  // ReturnEma only
  bool normalize_advantages = false;
  diff::GumbelConfig gumbel;

  /// Throws ConfigError.
  void validate() const;
};

struct RolloutOptions {
  bool train = false;        // keep the whole episode on the tape
  bool greedy = false;       // argmax actions and deterministic message bits
  int bptt_window = 25;
  diff::GumbelConfig gumbel;
};

/// A rollout of learned policies. With `train`, `log_probs[i][T]` are tape
/// variables of agent i's action log-probabilities per window.
struct Rollout {
  EpisodeLog log;
  std::vector<std::vector<diff::Var>> log_probs;
};

/// Full episode of `policies` on `graph`. Ticks 0..episode_len-1 follow the
/// agent timing contract; 4 tail ticks with phases held complete the reward
/// of the last window. Deterministic given `seed`.
Rollout rollout(diff::Tape& tape, const AgentGraph& graph, const PolicySet& policies,
                const SimConfig& sim, const RolloutOptions& opt, std::uint64_t seed);

/// Sampled, gradient-free episode.
EpisodeLog run_episode(const AgentGraph& graph, const PolicySet& policies, const SimConfig& sim,
                       const TrainConfig& train, std::uint64_t seed);

/// Per-agent advantages G_i(T) - b_i, b_i = mean window reward of agent i.
std::vector<std::vector<double>> advantages(const EpisodeLog& log, double gamma);

/// sum_i -sum_T (G_i(T) - b_i) log pi_i(a_T) as one tape scalar.
/// Throws IncompleteLog when log-probabilities are missing.
diff::Var reinforce_loss(diff::Tape& tape, const Rollout& r, double gamma);
/// Same with explicit per-agent, per-window advantages.
diff::Var reinforce_loss(diff::Tape& tape, const Rollout& r,
                         const std::vector<std::vector<double>>& adv);

/// Across-episode state of the ReturnEma baseline.
class ReturnBaseline {
 public:
  explicit ReturnBaseline(double decay) : decay_(decay) {}
  /// Advantages G - b with b from previous episodes, then folds G in.
  std::vector<std::vector<double>> advantages(const EpisodeLog& log, double gamma);

 private:
  double decay_;
  std::vector<std::vector<double>> mean_;
};

/// Phase chooser for non-learning and externally trained controllers.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  /// Called once before tick 0 of every episode.
  virtual void reset(const TrafficState& /*state*/, std::uint64_t /*seed*/) {}
  /// Every agent's observation at every tick, tail ticks included.
  virtual void on_tick(int /*tick*/, AgentId /*agent*/, const ObservationGrid& /*obs*/) {}
  /// Phase for `agent` at the end of window `window`.
  virtual int decide(const TrafficState& state, AgentId agent, int window,
                     const ObservationGrid& obs) = 0;
};

/// Episode driven by a Controller; no messages are exchanged.
EpisodeLog run_controller_episode(const AgentGraph& graph, Controller& controller,
                                  const SimConfig& sim, std::uint64_t seed);

struct MetricsRow {
  int episode = 0;
  std::uint64_t seed = 0;
  double mean_reward = 0.0;
  double std_over_agents = 0.0;
  double tau = 0.0;
  double wall_ms = 0.0;
};

/// CSV with header "episode,seed,mean_reward,std_over_agents,tau,wall_ms".
/// `with_wall` false writes 0 for wall_ms so reruns are byte-identical.
std::string metrics_csv(const std::vector<MetricsRow>& rows, bool with_wall);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<std::pair<int, std::string>> checkpoints;  // (episode, bytes)
  std::vector<int> variant_counts;  // episodes per perturbed variant (robust only)
};

using EpisodeCallback = std::function<void(const MetricsRow&)>;

/// REINFORCE training of `policies` in place. Episode k uses seed
/// derive_seed(seed, "episode", {k}); a checkpoint is taken before the first
/// episode, every `checkpoint_every` episodes and at the end.
TrainResult train(const AgentGraph& graph, PolicySet& policies, const TrainConfig& train,
                  const SimConfig& sim, std::uint64_t seed, std::uint64_t config_digest,
                  const EpisodeCallback& on_episode = {});

/// As train, on perturbation_set(graph, robust_variants, seed); each episode
/// samples one variant uniformly.
TrainResult train_robust(const AgentGraph& graph, PolicySet& policies, const TrainConfig& train,
                         const SimConfig& sim, std::uint64_t seed, std::uint64_t config_digest,
                         const EpisodeCallback& on_episode = {});

/// Variant index used by robust training at `episode`.
int robust_variant(std::uint64_t seed, int episode, int variants);

struct EvalResult {
  std::vector<double> episode_rewards;     // per-agent averaged
  std::vector<std::uint64_t> episode_seeds;
  std::vector<std::string> blocked;        // per episode, perturbed runs
  double mean = 0.0;
  double std = 0.0;
};

struct EvalOptions {
  int episodes = 5;
  bool perturbed = false;
  bool greedy = true;
};

/// Evaluation without gradient. Episode k runs seed derive_seed(seed, "eval",
/// {k}); perturbed runs close perturb(graph, that seed). Throws
/// EmptyEvaluation.
EvalResult evaluate(const AgentGraph& graph, const PolicySet& policies, const SimConfig& sim,
                    const EvalOptions& opt, std::uint64_t seed);
EvalResult evaluate(const AgentGraph& graph, Controller& controller, const SimConfig& sim,
                    const EvalOptions& opt, std::uint64_t seed);
/// Loads `checkpoint` into a copy of `policies` first; throws
/// CheckpointMismatch.
EvalResult evaluate(const AgentGraph& graph, const PolicySet& policies,
                    const std::string& checkpoint, std::uint64_t config_digest,
                    const SimConfig& sim, const EvalOptions& opt, std::uint64_t seed);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(const std::vector<double>& v);

}  // namespace netmarl
