#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netmarl/diff/nn.hpp"
#include "netmarl/trainer.hpp"

namespace netmarl {

/// Round-robin: the window index modulo the action count.
int fixed_time_policy(const JunctionSpec& junction, int tick);

/// Self-organising rule. Switches to the phase serving the longest red-lane
/// queue when that queue exceeds `threshold` (lowest phase index on ties),
/// otherwise holds `current_phase`. `queues` holds halted vehicles per arm.
int sotl_policy(const JunctionSpec& junction, std::span<const int> queues, int current_phase,
                int threshold = 5);

class FixedTimeController : public Controller {
 public:
  explicit FixedTimeController(const AgentGraph& graph) : graph_(&graph) {}
  std::string name() const override { return "fixed_time"; }
  int decide(const TrafficState& state, AgentId agent, int window, const ObservationGrid& obs) override;

 private:
  const AgentGraph* graph_;
};

/// SOTL fed with lane_pressure: waiting vehicle-ticks accumulated behind
/// each red light, the counter the self-organising rule thresholds.
class SotlController : public Controller {
 public:
  explicit SotlController(int threshold = 5);
  std::string name() const override { return "sotl"; }
  int decide(const TrafficState& state, AgentId agent, int window, const ObservationGrid& obs) override;

 private:
  int threshold_;
};

struct DqnConfig {
  int hidden = 32;
  double lr = 1e-3;
  double gamma = 0.95;          // per window
  int replay_capacity = 10000;  // window transitions
  int batch = 16;
  int train_every = 4;          // one update per this many new transitions
  int target_sync = 500;        // updates
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.5;    // of training episodes
  double reward_scale = 0.01;   // TD targets use scaled window rewards
  void validate() const;
};

/// Linear epsilon decay from eps_start at episode 0 to eps_end at
/// eps_fraction * episodes, constant afterwards.
double dqn_epsilon(const DqnConfig& cfg, int episode, int episodes);

/// Observations of one action window, flattened.
using WindowObs = std::vector<double>;  // kWindow * ObservationGrid::kFlatSize

struct Transition {
  AgentId agent = 0;
  WindowObs obs;
  int action = 0;
  double reward = 0.0;  // scaled window reward
  WindowObs next;
  bool done = false;
};

/// Uniform replay ring buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// Per-agent Q-networks: dense + ReLU + LSTM over the 5 window observations,
/// then a linear head. Agents share nothing and exchange no messages.
class DqnAgents {
 public:
  DqnAgents(const AgentGraph& graph, DqnConfig cfg, std::uint64_t init_seed);

  const DqnConfig& config() const { return cfg_; }
  diff::ParamStore& store() { return store_; }
  const diff::ParamStore& store() const { return store_; }
  int agent_count() const { return static_cast<int>(nets_.size()); }
  int action_count(AgentId a) const { return nets_.at(static_cast<std::size_t>(a)).actions; }

  /// Q-values of `agent` for one window.
  std::vector<double> q_values(AgentId agent, const WindowObs& obs) const;
  diff::Var q_var(diff::Tape& tape, AgentId agent, const WindowObs& obs) const;

  /// Squared TD loss sum_b (Q(s,a) - y)^2 / B with y = r + gamma max Q_target(s').
  /// Returns the loss value; gradients land in store().
  double td_update_gradients(std::span<const Transition* const> batch, const DqnAgents& target);

 private:
  struct Net {
    int actions = 0;
    diff::Dense enc;
    diff::LstmParams lstm;
    diff::Dense head;
  };
  DqnConfig cfg_;
  diff::ParamStore store_;
  std::vector<Net> nets_;
};

/// Greedy (or epsilon-greedy) controller over trained Q-networks.
class DqnController : public Controller {
 public:
  DqnController(const DqnAgents& agents, double epsilon = 0.0, std::uint64_t seed = 0);
  std::string name() const override { return "dqn"; }
  void reset(const TrafficState& state, std::uint64_t seed) override;
  void on_tick(int tick, AgentId agent, const ObservationGrid& obs) override;
  int decide(const TrafficState& state, AgentId agent, int window, const ObservationGrid& obs) override;

  /// Window observations recorded for `agent` in the episode, per window.
  const std::vector<WindowObs>& windows(AgentId agent) const { return windows_.at(static_cast<std::size_t>(agent)); }
  /// The tail ticks after the last action, padded to a full window.
  WindowObs tail(AgentId agent) const;

 private:
  const DqnAgents* agents_;
  double epsilon_;
  std::uint64_t seed_;
  std::uint64_t episode_seed_ = 0;
  std::vector<WindowObs> current_;
  std::vector<std::vector<WindowObs>> windows_;
};

struct DqnTrainResult {
  std::vector<MetricsRow> metrics;
  int updates = 0;
  std::vector<std::pair<int, std::string>> checkpoints;
};

/// Independent DQN training; agents act epsilon-greedily and learn from their
/// own window transitions only.
DqnTrainResult dqn_independent_train(const AgentGraph& graph, DqnAgents& agents, int episodes,
                                     const SimConfig& sim, std::uint64_t seed,
                                     std::uint64_t config_digest, int checkpoint_every = 50,
                                     const EpisodeCallback& on_episode = {});

/// Ablation wrappers over a learned policy set.
void fixed_protocol_wrapper(PolicySet& policies);
void blank_message_wrapper(PolicySet& policies);
/// Throws UnknownAgent.
void blind_wrapper(PolicySet& policies, std::span<const AgentId> blind);

}  // namespace netmarl
