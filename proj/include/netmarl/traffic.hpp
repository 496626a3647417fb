#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "netmarl/graph.hpp"
#include "netmarl/rng.hpp"

namespace netmarl {

struct SimConfig {
  int v_max = 3;               // cells/tick
  double p_slow = 0.1;         // random slowdown probability
  double spawn_rate = 0.10;    // per boundary source per tick
  int brake_threshold = 2;     // speed drop (cells/tick) counted as emergency braking
  double p_straight = 0.5;
  double p_left = 0.25;
  double p_right = 0.25;
  int episode_len = 500;       // ticks
  int wait_cap = 50;           // per-vehicle waiting counter cap (ticks)
  int observe_cells = 4;       // visible cells per incoming lane

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// A movement through a junction, from an incoming arm to an outgoing arm.
struct Movement {
  Compass from;
  Compass to;
  friend bool operator==(const Movement&, const Movement&) = default;
};

/// One traffic-light configuration. Phases are split: each serves every
/// movement out of one approach, which keeps them conflict-free.
struct Phase {
  Compass served;
  std::vector<Movement> movements;
};

/// Phase table of a junction: one phase per existing arm, in compass order.
std::vector<Phase> legal_actions(const JunctionSpec& junction);

/// True when two simultaneous movements cross or merge (left-hand traffic).
bool movements_conflict(Movement a, Movement b);

/// Directed lane derived from a road.
struct LaneInfo {
  int road = 0;
  RoadEnd from;  // junction arm the lane leaves, or boundary source
  RoadEnd to;    // junction arm the lane enters, or boundary sink
  int length = 0;
  bool blocked = false;
};

/// Lane-level view of an AgentGraph. Immutable; shared by states.
class LaneMap {
 public:
  explicit LaneMap(AgentGraph graph);

  const AgentGraph& graph() const { return graph_; }
  const std::vector<LaneInfo>& lanes() const { return lanes_; }
  const LaneInfo& lane(int id) const { return lanes_[static_cast<std::size_t>(id)]; }
  int lane_count() const { return static_cast<int>(lanes_.size()); }
  /// Lane entering junction `j` through `arm`, or -1.
  int incoming(AgentId j, Compass arm) const { return incoming_[idx(j, arm)]; }
  /// Lane leaving junction `j` through `arm`, or -1.
  int outgoing(AgentId j, Compass arm) const { return outgoing_[idx(j, arm)]; }
  const std::vector<int>& sources() const { return sources_; }
  /// Arm served by `phase` at junction `j`.
  Compass served_arm(AgentId j, int phase) const;
  const std::vector<Phase>& phases(AgentId j) const {
    return phases_[static_cast<std::size_t>(j)];
  }

 private:
  static std::size_t idx(AgentId j, Compass arm) {
    return static_cast<std::size_t>(j) * kArms + static_cast<std::size_t>(arm);
  }
  AgentGraph graph_;
  std::vector<LaneInfo> lanes_;
  std::vector<int> incoming_;
  std::vector<int> outgoing_;
  std::vector<int> sources_;
  std::vector<std::vector<Phase>> phases_;
};

/// Cell content. `id < 0` marks an empty cell.
struct Vehicle {
  std::int32_t id = -1;
  std::int32_t entry_tick = 0;
  std::int8_t speed = 0;
  std::int8_t waiting = 0;     // consecutive ticks at speed 0, capped
  std::int8_t turn = -1;       // outgoing arm at the downstream junction; -1 for sinks
  std::int8_t braked = 0;      // emergency braking during the last tick

  bool present() const { return id >= 0; }
  friend bool operator==(const Vehicle&, const Vehicle&) = default;
};

struct TrafficState {
  std::shared_ptr<const LaneMap> map;
  std::vector<std::vector<Vehicle>> lanes;  // lanes[lane][cell], cell 0 = lane entry
  std::vector<int> phases;                  // per junction
  std::int64_t tick = 0;
  std::int32_t next_vehicle_id = 0;
  std::uint64_t seed = 0;

  int vehicle_count() const;
  /// Cell exclusivity and per-vehicle field invariants.
  bool invariants_hold(const SimConfig& config) const;
  friend bool operator==(const TrafficState& a, const TrafficState& b) {
    return a.lanes == b.lanes && a.phases == b.phases && a.tick == b.tick &&
           a.next_vehicle_id == b.next_vehicle_id && a.seed == b.seed;
  }
};

/// Reward inputs for one junction, measured on its visible incoming cells.
struct RewardComponents {
  int halted = 0;                  // vehicles at speed 0
  double waiting_sum = 0.0;        // sum of their waiting counters (ticks)
  std::vector<double> lane_delays; // mean speed / v_max per incoming lane; 1 when empty
  int emergency_brakes = 0;

  friend bool operator==(const RewardComponents&, const RewardComponents&) = default;
};

/// r = -(halted + waiting_sum - sum(lane_delays) + emergency_brakes)
double reward(const RewardComponents& c);

struct StepResult {
  TrafficState state;
  std::vector<RewardComponents> components;  // per agent
  int spawned = 0;
  int exited = 0;
};

TrafficState init_state(const AgentGraph& graph, const SimConfig& config, std::uint64_t seed);
TrafficState init_state(std::shared_ptr<const LaneMap> map, std::uint64_t seed);

/// One tick. `actions[j]` is the phase index for junction j; throws InvalidAction.
StepResult step(const TrafficState& state, std::span<const int> actions,
                const SimConfig& config, Rng& rng);

/// Components of `agent` measured on `state`.
RewardComponents measure(const TrafficState& state, AgentId agent, const SimConfig& config);

bool conservation_audit(const TrafficState& before, const TrafficState& after, int spawned,
                        int exited);

/// Halted vehicles on the whole incoming lane of each arm (4 entries, 0 for
/// absent arms). The stop-line sensor that SOTL reads.
std::vector<int> lane_queues(const TrafficState& state, AgentId agent);

/// Accumulated waiting of the halted vehicles on each incoming lane, in
/// vehicle-ticks (sum of their waiting counters; 4 entries).
std::vector<int> lane_pressure(const TrafficState& state, AgentId agent);

/// Versioned binary snapshot; the LaneMap is not stored and must be supplied.
std::string serialize_state(const TrafficState& state);
TrafficState deserialize_state(const std::string& bytes, std::shared_ptr<const LaneMap> map);

/// One text row per lane: '.' empty, digit = vehicle speed.
std::string render(const TrafficState& state);

}  // namespace netmarl
