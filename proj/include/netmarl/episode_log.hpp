#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "netmarl/graph.hpp"
#include "netmarl/traffic.hpp"

namespace netmarl {

struct InboxWord {
  AgentId sender = 0;
  std::int64_t word = 0;
  double weight = 0.0;  // attention weight
};

/// One (tick, agent) record. Ticks past the episode length are tail ticks
/// that only complete the last window's reward.
struct TickRecord {
  int tick = 0;
  AgentId agent = 0;
  std::array<int, kArms> occupancy{};  // observation digest: visible vehicles per arm
  std::int64_t word = -1;              // outgoing word, -1 when nothing was sent
  std::vector<InboxWord> inbox;
  int action = -1;                     // -1 outside window ends
  double log_prob = 0.0;
  RewardComponents components;
  double reward = 0.0;
};

struct EpisodeLog {
  static constexpr int kSchemaVersion = 1;

  std::string method;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  int agents = 0;
  int episode_len = 0;
  int tail = 0;       // extra ticks simulated after the last action
  int msg_bits = 0;   // 0 when the method does not communicate
  std::string blocked;  // comma-separated blocked road ids
  std::vector<TickRecord> records;  // tick-major, agent-minor

  int total_ticks() const { return episode_len + tail; }
  int windows() const { return episode_len / 5; }
  const TickRecord& at(int tick, AgentId agent) const;
  TickRecord& at(int tick, AgentId agent);

  /// sum_{t'=T}^{T+4} r(t') for the window ending at action tick T.
  std::vector<double> window_rewards(AgentId agent) const;
  std::vector<int> actions(AgentId agent) const;
  /// Discounted returns over window rewards.
  std::vector<double> returns(AgentId agent, double gamma) const;
  /// Sum of window rewards of each agent.
  std::vector<double> agent_rewards() const;
  /// Episode reward averaged over agents.
  double mean_reward() const;

  /// Structural audit; throws IncompleteLog on the first problem.
  void audit() const;

  /// Line-delimited JSON: a header line then one line per record.
  std::string to_jsonl() const;
  /// Throws FormatError on malformed input or schema drift.
  static EpisodeLog from_jsonl(const std::string& text);
};

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

}  // namespace netmarl
