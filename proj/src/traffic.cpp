#include "netmarl/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "netmarl/binio.hpp"
#include "netmarl/error.hpp"

namespace netmarl {

namespace {

constexpr std::uint32_t kStateMagic = 0x53544D4E;  // "NMTS"
constexpr std::uint32_t kStateVersion = 1;

int arm_index(Compass c) { return static_cast<int>(c); }

// Points where movements enter and leave the junction box, as angles on a
// circle. Under left-hand traffic the inbound lane of an arm sits clockwise of
// its outbound lane.
double in_angle(Compass arm) {
  static constexpr double base[4] = {90.0, 0.0, 270.0, 180.0};
  return base[arm_index(arm)] - 10.0;
}
double out_angle(Compass arm) {
  static constexpr double base[4] = {90.0, 0.0, 270.0, 180.0};
  return base[arm_index(arm)] + 10.0;
}
double norm_angle(double a) {
  a = std::fmod(a, 360.0);
  return a < 0 ? a + 360.0 : a;
}
// Is x strictly inside the counter-clockwise arc from a to b?
bool inside_arc(double a, double b, double x) {
  const double span = norm_angle(b - a);
  const double off = norm_angle(x - a);
  return off > 0.0 && off < span;
}

double turn_weight(const SimConfig& cfg, Compass from, Compass to) {
  const int rel = ((arm_index(to) - arm_index(from)) % kArms + kArms) % kArms;
  switch (rel) {
    case 2: return cfg.p_straight;
    case 1: return cfg.p_left;
    case 3: return cfg.p_right;
    default: return 0.0;
  }
}

// Outgoing arm for a vehicle arriving at `lane.to`, or -1 for sink lanes.
std::int8_t sample_turn(const LaneMap& map, const LaneInfo& lane, const SimConfig& cfg,
                        Rng& rng) {
  if (lane.to.is_boundary()) return -1;
  const AgentId j = lane.to.junction;
  double weights[kArms] = {0, 0, 0, 0};
  double total = 0.0;
  for (int a = 0; a < kArms; ++a) {
    const Compass to = compass_from_index(a);
    if (to == lane.to.arm) continue;
    const int out = map.outgoing(j, to);
    if (out < 0 || map.lane(out).blocked) continue;
    weights[a] = turn_weight(cfg, lane.to.arm, to);
    total += weights[a];
  }
  const double u = uniform01(rng);
  if (total <= 0.0) {
    const int back = map.outgoing(j, lane.to.arm);
    if (back >= 0 && !map.lane(back).blocked) return static_cast<std::int8_t>(lane.to.arm);
    throw std::logic_error("junction " + std::to_string(j) + " is a dead end");
  }
  double acc = 0.0;
  int last = -1;
  for (int a = 0; a < kArms; ++a) {
    if (weights[a] <= 0.0) continue;
    last = a;
    acc += weights[a] / total;
    if (u < acc) return static_cast<std::int8_t>(a);
  }
  return static_cast<std::int8_t>(last);
}

}  // namespace

void SimConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
  };
  prob(p_slow, "sim.p_slow");
  prob(spawn_rate, "sim.spawn_rate");
  prob(p_straight, "sim.p_straight");
  prob(p_left, "sim.p_left");
  prob(p_right, "sim.p_right");
  if (std::abs(p_straight + p_left + p_right - 1.0) > 1e-9) {
    throw ConfigError("turn probabilities must sum to 1");
  }
  if (v_max < 1 || v_max > 100) throw ConfigError("sim.v_max must be in [1,100]");
  if (brake_threshold < 0) throw ConfigError("sim.brake_threshold must be >= 0");
  if (episode_len < 5 || episode_len % 5 != 0) {
    throw ConfigError("sim.episode_len must be a positive multiple of 5");
  }
  if (wait_cap < 1 || wait_cap > 127) throw ConfigError("sim.wait_cap must be in [1,127]");
  if (observe_cells < 1 || observe_cells > 6) throw ConfigError("sim.observe_cells must be in [1,6]");
}

std::vector<Phase> legal_actions(const JunctionSpec& junction) {
  std::vector<Phase> phases;
  for (int a = 0; a < kArms; ++a) {
    const Compass from = compass_from_index(a);
    if (!junction.has_arm(from)) continue;
    Phase p{from, {}};
    for (int b = 1; b < kArms; ++b) {
      const Compass to = compass_from_index(a + b);
      if (junction.has_arm(to)) p.movements.push_back({from, to});
    }
    phases.push_back(std::move(p));
  }
  return phases;
}

bool movements_conflict(Movement a, Movement b) {
  if (a == b) return false;
  if (a.to == b.to) return true;  // merge
  if (a.from == b.from) return false;
  const double a0 = in_angle(a.from), a1 = out_angle(a.to);
  const double b0 = in_angle(b.from), b1 = out_angle(b.to);
  return inside_arc(a0, a1, b0) != inside_arc(a0, a1, b1);
}

LaneMap::LaneMap(AgentGraph graph) : graph_(std::move(graph)) {
  const auto n = static_cast<std::size_t>(graph_.agent_count());
  incoming_.assign(n * kArms, -1);
  outgoing_.assign(n * kArms, -1);
  auto add = [this](int road, RoadEnd from, RoadEnd to, int length, bool blocked) {
    const int id = static_cast<int>(lanes_.size());
    lanes_.push_back({road, from, to, length, blocked});
    if (!from.is_boundary()) {
      outgoing_[idx(from.junction, from.arm)] = id;
    } else {
      sources_.push_back(id);
    }
    if (!to.is_boundary()) incoming_[idx(to.junction, to.arm)] = id;
  };
  for (const auto& r : graph_.roads()) {
    add(r.id, r.from, r.to, r.length_cells, r.blocked);
    if (!r.one_way) add(r.id, r.to, r.from, r.length_cells, r.blocked_reverse);
  }
  for (const auto& j : graph_.junctions()) phases_.push_back(legal_actions(j));
}

Compass LaneMap::served_arm(AgentId j, int phase) const {
  return phases_[static_cast<std::size_t>(j)][static_cast<std::size_t>(phase)].served;
}

int TrafficState::vehicle_count() const {
  int n = 0;
  for (const auto& lane : lanes) {
    for (const auto& v : lane) n += v.present() ? 1 : 0;
  }
  return n;
}

bool TrafficState::invariants_hold(const SimConfig& config) const {
  std::vector<std::int32_t> ids;
  for (const auto& lane : lanes) {
    for (const auto& v : lane) {
      if (!v.present()) continue;
      if (v.speed < 0 || v.speed > config.v_max) return false;
      if (v.speed > 0 && v.waiting != 0) return false;
      if (v.waiting < 0 || v.waiting > config.wait_cap) return false;
      ids.push_back(v.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return std::adjacent_find(ids.begin(), ids.end()) == ids.end();
}

double reward(const RewardComponents& c) {
  const double delay = std::accumulate(c.lane_delays.begin(), c.lane_delays.end(), 0.0);
  return -(static_cast<double>(c.halted) + c.waiting_sum - delay +
           static_cast<double>(c.emergency_brakes));
}

TrafficState init_state(std::shared_ptr<const LaneMap> map, std::uint64_t seed) {
  TrafficState s;
  s.lanes.reserve(map->lanes().size());
  for (const auto& lane : map->lanes()) s.lanes.emplace_back(static_cast<std::size_t>(lane.length));
  s.phases.assign(static_cast<std::size_t>(map->graph().agent_count()), 0);
  s.seed = seed;
  s.map = std::move(map);
  return s;
}

TrafficState init_state(const AgentGraph& graph, const SimConfig& config, std::uint64_t seed) {
  config.validate();
  return init_state(std::make_shared<const LaneMap>(graph), seed);
}

RewardComponents measure(const TrafficState& state, AgentId agent, const SimConfig& config) {
  const LaneMap& map = *state.map;
  const auto& junction = map.graph().junction(agent);
  RewardComponents c;
  for (int a = 0; a < kArms; ++a) {
    if (!junction.has_arm(compass_from_index(a))) continue;
    const int lane = map.incoming(agent, compass_from_index(a));
    if (lane < 0) continue;
    const auto& cells = state.lanes[static_cast<std::size_t>(lane)];
    const int len = static_cast<int>(cells.size());
    int count = 0;
    double speed_sum = 0.0;
    for (int p = std::max(0, len - config.observe_cells); p < len; ++p) {
      const Vehicle& v = cells[static_cast<std::size_t>(p)];
      if (!v.present()) continue;
      ++count;
      speed_sum += v.speed;
      if (v.speed == 0) {
        ++c.halted;
        c.waiting_sum += v.waiting;
      }
      if (v.braked) ++c.emergency_brakes;
    }
    c.lane_delays.push_back(count == 0 ? 1.0 : speed_sum / count / config.v_max);
  }
  return c;
}

StepResult step(const TrafficState& state, std::span<const int> actions, const SimConfig& cfg,
                Rng& rng) {
  const LaneMap& map = *state.map;
  const int n_agents = map.graph().agent_count();
  if (static_cast<int>(actions.size()) != n_agents) {
    throw InvalidAction("expected " + std::to_string(n_agents) + " actions, got " +
                        std::to_string(actions.size()));
  }
  for (int j = 0; j < n_agents; ++j) {
    const int a = actions[static_cast<std::size_t>(j)];
    if (a < 0 || a >= static_cast<int>(map.phases(j).size())) {
      throw InvalidAction("agent " + std::to_string(j) + " action " + std::to_string(a));
    }
  }

  StepResult out;
  TrafficState& next = out.state;
  next.map = state.map;
  next.phases.assign(actions.begin(), actions.end());
  next.tick = state.tick + 1;
  next.next_vehicle_id = state.next_vehicle_id;
  next.seed = state.seed;
  next.lanes.reserve(state.lanes.size());
  for (const auto& lane : state.lanes) next.lanes.emplace_back(lane.size());

  struct Crossing {
    int lane;
    int cell;
    int desired;
    Vehicle v;
  };
  std::vector<Crossing> crossings;

  auto settle = [&](Vehicle v, int prev_speed, int new_speed) {
    v.speed = static_cast<std::int8_t>(new_speed);
    v.waiting = new_speed == 0
                    ? static_cast<std::int8_t>(std::min<int>(v.waiting + 1, cfg.wait_cap))
                    : std::int8_t{0};
    v.braked = (prev_speed - new_speed) > cfg.brake_threshold ? 1 : 0;
    return v;
  };

  // In-lane update, downstream vehicles first. Gaps use pre-step positions.
  for (int l = 0; l < map.lane_count(); ++l) {
    const LaneInfo& info = map.lane(l);
    const auto& cells = state.lanes[static_cast<std::size_t>(l)];
    const int len = info.length;
    int ahead = -1;
    for (int p = len - 1; p >= 0; --p) {
      const Vehicle& v = cells[static_cast<std::size_t>(p)];
      if (!v.present()) continue;
      int desired = std::min<int>(v.speed + 1, cfg.v_max);
      bool may_cross = false;
      if (ahead >= 0) {
        desired = std::min(desired, ahead - p - 1);
      } else if (info.to.is_boundary()) {
        may_cross = true;
      } else if (map.served_arm(info.to.junction, next.phases[static_cast<std::size_t>(
                                                      info.to.junction)]) == info.to.arm) {
        may_cross = true;
      } else {
        desired = std::min(desired, len - 1 - p);
      }
      if (uniform01(rng) < cfg.p_slow) desired = std::max(desired - 1, 0);
      if (may_cross && p + desired > len - 1) {
        crossings.push_back({l, p, desired, v});
      } else {
        next.lanes[static_cast<std::size_t>(l)][static_cast<std::size_t>(p + desired)] =
            settle(v, v.speed, desired);
      }
      ahead = p;
    }
  }

  // Junction transfers in clockwise arm priority per junction; sinks first.
  std::stable_sort(crossings.begin(), crossings.end(), [&](const Crossing& a, const Crossing& b) {
    const auto& la = map.lane(a.lane).to;
    const auto& lb = map.lane(b.lane).to;
    if (la.junction != lb.junction) return la.junction < lb.junction;
    return arm_index(la.arm) < arm_index(lb.arm);
  });
  for (const Crossing& c : crossings) {
    const LaneInfo& info = map.lane(c.lane);
    const int len = info.length;
    if (info.to.is_boundary()) {
      ++out.exited;
      continue;
    }
    const int target = map.outgoing(info.to.junction, compass_from_index(c.v.turn));
    auto& tcells = next.lanes[static_cast<std::size_t>(target)];
    const int tlen = static_cast<int>(tcells.size());
    int first = tlen;
    for (int q = 0; q < tlen; ++q) {
      if (tcells[static_cast<std::size_t>(q)].present()) {
        first = q;
        break;
      }
    }
    const int landing = std::min(c.cell + c.desired - len, first - 1);
    if (landing >= 0) {
      Vehicle moved = settle(c.v, c.v.speed, (len - 1 - c.cell) + 1 + landing);
      moved.turn = sample_turn(map, map.lane(target), cfg, rng);
      tcells[static_cast<std::size_t>(landing)] = moved;
    } else {
      next.lanes[static_cast<std::size_t>(c.lane)][static_cast<std::size_t>(len - 1)] =
          settle(c.v, c.v.speed, len - 1 - c.cell);
    }
  }

  for (int src : map.sources()) {
    const LaneInfo& info = map.lane(src);
    const double u = uniform01(rng);
    if (info.blocked || u >= cfg.spawn_rate) continue;
    auto& cell0 = next.lanes[static_cast<std::size_t>(src)][0];
    if (cell0.present()) continue;
    Vehicle v;
    v.id = next.next_vehicle_id++;
    v.entry_tick = static_cast<std::int32_t>(next.tick);
    v.turn = sample_turn(map, info, cfg, rng);
    cell0 = v;
    ++out.spawned;
  }

  out.components.reserve(static_cast<std::size_t>(n_agents));
  for (int j = 0; j < n_agents; ++j) out.components.push_back(measure(next, j, cfg));
  return out;
}

bool conservation_audit(const TrafficState& before, const TrafficState& after, int spawned,
                        int exited) {
  std::vector<std::int32_t> ids;
  for (const auto& lane : after.lanes) {
    for (const auto& v : lane) {
      if (v.present()) ids.push_back(v.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) return false;
  return after.vehicle_count() == before.vehicle_count() + spawned - exited;
}

std::vector<int> lane_queues(const TrafficState& state, AgentId agent) {
  const LaneMap& map = *state.map;
  map.graph().junction(agent);
  std::vector<int> q(kArms, 0);
  for (int a = 0; a < kArms; ++a) {
    const int lane = map.incoming(agent, compass_from_index(a));
    if (lane < 0) continue;
    for (const auto& v : state.lanes[static_cast<std::size_t>(lane)]) {
      if (v.present() && v.speed == 0) ++q[static_cast<std::size_t>(a)];
    }
  }
  return q;
}

std::vector<int> lane_pressure(const TrafficState& state, AgentId agent) {
  const LaneMap& map = *state.map;
  map.graph().junction(agent);
  std::vector<int> q(kArms, 0);
  for (int a = 0; a < kArms; ++a) {
    const int lane = map.incoming(agent, compass_from_index(a));
    if (lane < 0) continue;
    for (const auto& v : state.lanes[static_cast<std::size_t>(lane)]) {
      if (v.present() && v.speed == 0) q[static_cast<std::size_t>(a)] += v.waiting;
    }
  }
  return q;
}

std::string serialize_state(const TrafficState& state) {
  binio::Writer w;
  w.put(kStateMagic);
  w.put(kStateVersion);
  w.put(state.tick);
  w.put(state.next_vehicle_id);
  w.put(state.seed);
  w.put(static_cast<std::uint32_t>(state.phases.size()));
  for (int p : state.phases) w.put(static_cast<std::int32_t>(p));
  w.put(static_cast<std::uint32_t>(state.lanes.size()));
  for (const auto& lane : state.lanes) {
    w.put(static_cast<std::uint32_t>(lane.size()));
    for (const auto& v : lane) {
      w.put(v.id);
      if (!v.present()) continue;
      w.put(v.entry_tick);
      w.put(v.speed);
      w.put(v.waiting);
      w.put(v.turn);
      w.put(v.braked);
    }
  }
  return w.take();
}

TrafficState deserialize_state(const std::string& bytes, std::shared_ptr<const LaneMap> map) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kStateMagic) throw FormatError("not a traffic state record");
  const auto version = r.get<std::uint32_t>();
  if (version != kStateVersion) throw FormatError("unsupported state version " + std::to_string(version));
  TrafficState s;
  s.tick = r.get<std::int64_t>();
  s.next_vehicle_id = r.get<std::int32_t>();
  s.seed = r.get<std::uint64_t>();
  const auto np = r.get<std::uint32_t>();
  if (np != static_cast<std::uint32_t>(map->graph().agent_count())) {
    throw FormatError("state junction count does not match graph");
  }
  for (std::uint32_t i = 0; i < np; ++i) s.phases.push_back(r.get<std::int32_t>());
  const auto nl = r.get<std::uint32_t>();
  if (nl != static_cast<std::uint32_t>(map->lane_count())) {
    throw FormatError("state lane count does not match graph");
  }
  for (std::uint32_t l = 0; l < nl; ++l) {
    const auto len = r.get<std::uint32_t>();
    if (static_cast<int>(len) != map->lane(static_cast<int>(l)).length) {
      throw FormatError("lane length mismatch");
    }
    std::vector<Vehicle> cells(len);
    for (auto& v : cells) {
      v.id = r.get<std::int32_t>();
      if (!v.present()) continue;
      v.entry_tick = r.get<std::int32_t>();
      v.speed = r.get<std::int8_t>();
      v.waiting = r.get<std::int8_t>();
      v.turn = r.get<std::int8_t>();
      v.braked = r.get<std::int8_t>();
    }
    s.lanes.push_back(std::move(cells));
  }
  if (!r.at_end()) throw FormatError("trailing bytes in state record");
  s.map = std::move(map);
  return s;
}

std::string render(const TrafficState& state) {
  const LaneMap& map = *state.map;
  std::ostringstream os;
  os << "tick " << state.tick << "  vehicles " << state.vehicle_count() << '\n';
  auto end_name = [](const RoadEnd& e) {
    return e.is_boundary() ? std::string("B") : std::to_string(e.junction) + compass_name(e.arm);
  };
  for (int l = 0; l < map.lane_count(); ++l) {
    const auto& info = map.lane(l);
    std::string label = end_name(info.from) + ">" + end_name(info.to);
    label.resize(10, ' ');
    os << label << '|';
    for (const auto& v : state.lanes[static_cast<std::size_t>(l)]) {
      os << (v.present() ? static_cast<char>('0' + v.speed) : '.');
    }
    if (!info.to.is_boundary()) {
      const bool green =
          map.served_arm(info.to.junction, state.phases[static_cast<std::size_t>(info.to.junction)]) ==
          info.to.arm;
      os << (green ? "|G" : "|R");
    }
    if (info.blocked) os << " blocked";
    os << '\n';
  }
  return os.str();
}

}  // namespace netmarl
