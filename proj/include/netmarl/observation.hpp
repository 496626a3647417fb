#pragma once

#include <array>
#include <span>
#include <vector>

#include "netmarl/traffic.hpp"

namespace netmarl {

/// Local view of one junction: the last `kObsCells` cells of each incoming
/// lane plus its own phase. Cell 0 is the cell at the stop line.
struct ObservationGrid {
  static constexpr int kCells = 4;
  static constexpr int kChannels = 3;  // occupancy, speed / v_max, waiting flag
  static constexpr int kPhaseSlots = 4;
  static constexpr int kFlatSize = kArms * kCells * kChannels + kPhaseSlots + kArms;

  std::array<std::array<std::array<double, kChannels>, kCells>, kArms> vehicles{};
  std::array<double, kPhaseSlots> phase{};
  std::array<double, kArms> arm_mask{};

  /// Vehicles visible on each arm.
  std::array<int, kArms> occupancy_counts() const;
  friend bool operator==(const ObservationGrid&, const ObservationGrid&) = default;
};

/// Throws UnknownAgent.
ObservationGrid observe(const TrafficState& state, AgentId agent, const SimConfig& config);

std::vector<double> flatten(const ObservationGrid& grid);
void flatten_into(const ObservationGrid& grid, std::span<double> out);
/// Inverse of flatten; throws ShapeMismatch.
ObservationGrid unflatten(std::span<const double> flat);

}  // namespace netmarl
