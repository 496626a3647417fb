#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace netmarl {

using AgentId = int;

/// Arms are indexed clockwise starting from north.
enum class Compass : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };
inline constexpr int kArms = 4;

const char* compass_name(Compass c);
Compass compass_from_index(int i);

enum class JunctionKind : std::uint8_t { ThreeWay, FourWay };

/// One end of a road: a junction arm, or the boundary when `junction < 0`.
struct RoadEnd {
  AgentId junction = -1;
  Compass arm = Compass::North;

  bool is_boundary() const { return junction < 0; }
  friend bool operator==(const RoadEnd&, const RoadEnd&) = default;
};

/// A road carries one lane per direction, or a single `from -> to` lane when
/// `one_way` is set.
struct RoadSpec {
  int id = 0;
  RoadEnd from;
  RoadEnd to;
  bool one_way = false;
  int length_cells = 10;
  bool blocked = false;          // from -> to carriageway closed
  bool blocked_reverse = false;  // to -> from carriageway closed (two-way roads)
  bool connector = false;

  bool is_boundary() const { return from.is_boundary() || to.is_boundary(); }
  bool is_internal() const { return !is_boundary(); }
  bool any_blocked() const { return blocked || blocked_reverse; }
  bool fully_blocked() const { return blocked && (one_way || blocked_reverse); }
  friend bool operator==(const RoadSpec&, const RoadSpec&) = default;
};

struct JunctionSpec {
  AgentId id = 0;
  JunctionKind kind = JunctionKind::FourWay;
  /// Road attached to each compass arm, -1 when the arm is absent.
  std::array<int, kArms> arm_road{-1, -1, -1, -1};

  int arm_count() const;
  int action_count() const { return kind == JunctionKind::ThreeWay ? 3 : 4; }
  bool has_arm(Compass c) const { return arm_road[static_cast<int>(c)] >= 0; }
  friend bool operator==(const JunctionSpec&, const JunctionSpec&) = default;
};

/// Junctions, roads and the communication topology they induce. Immutable
/// after construction.
class AgentGraph {
 public:
  AgentGraph() = default;
  /// Validates every structural invariant; throws InvalidGraph.
  AgentGraph(std::string name, std::vector<JunctionSpec> junctions,
             std::vector<RoadSpec> roads);

  const std::string& name() const { return name_; }
  int agent_count() const { return static_cast<int>(junctions_.size()); }
  const std::vector<JunctionSpec>& junctions() const { return junctions_; }
  const JunctionSpec& junction(AgentId id) const;
  const std::vector<RoadSpec>& roads() const { return roads_; }
  const RoadSpec& road(int id) const { return roads_.at(static_cast<std::size_t>(id)); }

  /// Sorted neighbour list; throws UnknownAgent.
  const std::vector<AgentId>& neighbors(AgentId agent) const;
  bool are_neighbors(AgentId a, AgentId b) const;
  /// Unordered pairs (lo, hi), sorted.
  const std::vector<std::pair<AgentId, AgentId>>& comm_edges() const { return comm_edges_; }

  /// Connected over unblocked roads, ignoring boundary ends.
  bool is_connected(bool include_blocked = false) const;
  std::vector<int> blockable_roads() const;
  std::vector<int> blocked_roads() const;

  /// Directed carriageways that perturbations may close: both directions of
  /// every internal, non-connector road. `second` selects the to -> from one.
  std::vector<std::pair<int, bool>> blockable_carriageways() const;

  /// Copy with both carriageways of `road_id` closed.
  AgentGraph with_blocked(int road_id) const;
  /// Copy with one carriageway closed.
  AgentGraph with_blocked(int road_id, bool reverse) const;

  std::string serialize() const;
  static AgentGraph parse(const std::string& text);

  friend bool operator==(const AgentGraph& a, const AgentGraph& b) {
    return a.name_ == b.name_ && a.junctions_ == b.junctions_ && a.roads_ == b.roads_;
  }

 private:
  void validate_and_index();

  std::string name_;
  std::vector<JunctionSpec> junctions_;
  std::vector<RoadSpec> roads_;
  std::vector<std::vector<AgentId>> adjacency_;
  std::vector<std::pair<AgentId, AgentId>> comm_edges_;
};

/// Fixed 10-agent arterial grid (3x3 plus an eastern appendage).
AgentGraph build_network1();
/// Two identical 14-agent communities joined by two one-way connectors.
/// Agents 0..13 form community A and 14..27 community B.
AgentGraph build_network2();
/// Community label (0 = A, 1 = B) of each network-2 agent.
std::vector<int> network2_communities();

/// Closes one uniformly chosen blockable carriageway.
AgentGraph perturb(const AgentGraph& graph, std::uint64_t seed);
/// `count` variants closing pairwise distinct carriageways, drawn without
/// replacement; throws NoBlockableRoad when too few exist.
std::vector<AgentGraph> perturbation_set(const AgentGraph& graph, int count, std::uint64_t seed);
/// "road" or "road+" / "road-" labels of closed carriageways, comma-separated.
std::string blocked_label(const AgentGraph& graph);

}  // namespace netmarl
