#include "netmarl/observation.hpp"

#include "netmarl/error.hpp"

namespace netmarl {

std::array<int, kArms> ObservationGrid::occupancy_counts() const {
  std::array<int, kArms> counts{};
  for (int a = 0; a < kArms; ++a) {
    for (const auto& cell : vehicles[static_cast<std::size_t>(a)]) {
      counts[static_cast<std::size_t>(a)] += cell[0] > 0.5 ? 1 : 0;
    }
  }
  return counts;
}

ObservationGrid observe(const TrafficState& state, AgentId agent, const SimConfig& config) {
  const LaneMap& map = *state.map;
  const JunctionSpec& junction = map.graph().junction(agent);
  ObservationGrid g;
  for (int a = 0; a < kArms; ++a) {
    const Compass arm = compass_from_index(a);
    if (!junction.has_arm(arm)) continue;
    g.arm_mask[static_cast<std::size_t>(a)] = 1.0;
    const int lane = map.incoming(agent, arm);
    if (lane < 0) continue;
    const auto& cells = state.lanes[static_cast<std::size_t>(lane)];
    const int len = static_cast<int>(cells.size());
    const int visible = std::min(ObservationGrid::kCells, config.observe_cells);
    for (int k = 0; k < visible && k < len; ++k) {
      const Vehicle& v = cells[static_cast<std::size_t>(len - 1 - k)];
      if (!v.present()) continue;
      auto& ch = g.vehicles[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)];
      ch[0] = 1.0;
      ch[1] = static_cast<double>(v.speed) / config.v_max;
      ch[2] = v.speed == 0 ? 1.0 : 0.0;
    }
  }
  const int phase = state.phases[static_cast<std::size_t>(agent)];
  if (phase >= 0 && phase < ObservationGrid::kPhaseSlots) g.phase[static_cast<std::size_t>(phase)] = 1.0;
  return g;
}

void flatten_into(const ObservationGrid& grid, std::span<double> out) {
  if (out.size() != ObservationGrid::kFlatSize) throw ShapeMismatch("observation buffer size");
  std::size_t i = 0;
  for (const auto& arm : grid.vehicles) {
    for (const auto& cell : arm) {
      for (double x : cell) out[i++] = x;
    }
  }
  for (double x : grid.phase) out[i++] = x;
  for (double x : grid.arm_mask) out[i++] = x;
}

std::vector<double> flatten(const ObservationGrid& grid) {
  std::vector<double> out(ObservationGrid::kFlatSize);
  flatten_into(grid, out);
  return out;
}

ObservationGrid unflatten(std::span<const double> flat) {
  if (flat.size() != ObservationGrid::kFlatSize) {
    throw ShapeMismatch("expected " + std::to_string(ObservationGrid::kFlatSize) + " values, got " +
                        std::to_string(flat.size()));
  }
  ObservationGrid g;
  std::size_t i = 0;
  for (auto& arm : g.vehicles) {
    for (auto& cell : arm) {
      for (double& x : cell) x = flat[i++];
    }
  }
  for (double& x : g.phase) x = flat[i++];
  for (double& x : g.arm_mask) x = flat[i++];
  return g;
}

}  // namespace netmarl
