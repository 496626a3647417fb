#include "netmarl/graph.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

#include "netmarl/error.hpp"
#include "netmarl/rng.hpp"

namespace netmarl {

namespace {

constexpr const char* kGraphMagic = "netmarl-graph";
constexpr int kGraphVersion = 1;

std::string end_to_string(const RoadEnd& e) {
  if (e.is_boundary()) return "B";
  return std::to_string(e.junction) + ":" + compass_name(e.arm);
}

const char* block_token(const RoadSpec& r) {
  if (r.fully_blocked()) return "blocked";
  if (r.blocked) return "forward";
  if (r.blocked_reverse) return "reverse";
  return "open";
}

RoadEnd end_from_string(const std::string& s) {
  if (s == "B") return {};
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw FormatError("bad road end '" + s + "'");
  RoadEnd e;
  e.junction = std::stoi(s.substr(0, colon));
  const std::string arm = s.substr(colon + 1);
  for (int i = 0; i < kArms; ++i) {
    if (arm == compass_name(compass_from_index(i))) {
      e.arm = compass_from_index(i);
      return e;
    }
  }
  throw FormatError("bad arm '" + arm + "'");
}

/// Incremental construction of the fixed networks.
class Builder {
 public:
  AgentId junction(JunctionKind kind) {
    JunctionSpec j;
    j.id = static_cast<AgentId>(junctions_.size());
    j.kind = kind;
    junctions_.push_back(j);
    return j.id;
  }
  void link(AgentId a, Compass arm_a, AgentId b, Compass arm_b, int length,
            bool one_way = false, bool connector = false) {
    RoadSpec r;
    r.id = static_cast<int>(roads_.size());
    r.from = {a, arm_a};
    r.to = {b, arm_b};
    r.one_way = one_way;
    r.length_cells = length;
    r.connector = connector;
    attach(r);
  }
  void boundary(AgentId a, Compass arm, int length) {
    RoadSpec r;
    r.id = static_cast<int>(roads_.size());
    r.from = {};
    r.to = {a, arm};
    r.length_cells = length;
    attach(r);
  }
  std::vector<JunctionSpec>& junctions() { return junctions_; }
  std::vector<RoadSpec>& roads() { return roads_; }

 private:
  void attach(const RoadSpec& r) {
    for (const RoadEnd* e : {&r.from, &r.to}) {
      if (!e->is_boundary()) {
        junctions_[static_cast<std::size_t>(e->junction)]
            .arm_road[static_cast<int>(e->arm)] = r.id;
      }
    }
    roads_.push_back(r);
  }
  std::vector<JunctionSpec> junctions_;
  std::vector<RoadSpec> roads_;
};

constexpr int kInternalLength = 10;
constexpr int kBoundaryLength = 8;
constexpr int kConnectorLength = 14;

using C = Compass;
using K = JunctionKind;

// One 14-agent community. Local ids 0..11 form a 3x4 grid, 12 and 13 hang off
// the east side and carry the connector arms.
void add_community(Builder& b) {
  const AgentId base = static_cast<AgentId>(b.junctions().size());
  const K kinds[14] = {K::ThreeWay, K::FourWay, K::ThreeWay, K::FourWay, K::FourWay,
                       K::FourWay,  K::FourWay, K::FourWay,  K::ThreeWay, K::FourWay,
                       K::ThreeWay, K::FourWay, K::ThreeWay, K::ThreeWay};
  for (K k : kinds) b.junction(k);
  auto at = [base](int local) { return base + local; };
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col + 1 < 4; ++col) {
      b.link(at(row * 4 + col), C::East, at(row * 4 + col + 1), C::West, kInternalLength);
    }
  }
  for (int row = 0; row + 1 < 3; ++row) {
    for (int col = 0; col < 4; ++col) {
      b.link(at(row * 4 + col), C::South, at((row + 1) * 4 + col), C::North, kInternalLength);
    }
  }
  b.link(at(3), C::East, at(12), C::West, kInternalLength);
  b.link(at(11), C::East, at(13), C::West, kInternalLength);
  b.boundary(at(0), C::West, kBoundaryLength);
  b.boundary(at(1), C::North, kBoundaryLength);
  b.boundary(at(3), C::North, kBoundaryLength);
  b.boundary(at(4), C::West, kBoundaryLength);
  b.boundary(at(7), C::East, kBoundaryLength);
  b.boundary(at(8), C::South, kBoundaryLength);
  b.boundary(at(9), C::South, kBoundaryLength);
  b.boundary(at(11), C::South, kBoundaryLength);
  b.boundary(at(12), C::North, kBoundaryLength);
  b.boundary(at(13), C::South, kBoundaryLength);
}

}  // namespace

const char* compass_name(Compass c) {
  switch (c) {
    case Compass::North: return "N";
    case Compass::East: return "E";
    case Compass::South: return "S";
    case Compass::West: return "W";
  }
  return "?";
}

Compass compass_from_index(int i) { return static_cast<Compass>(((i % kArms) + kArms) % kArms); }

int JunctionSpec::arm_count() const {
  return static_cast<int>(std::count_if(arm_road.begin(), arm_road.end(),
                                        [](int r) { return r >= 0; }));
}

AgentGraph::AgentGraph(std::string name, std::vector<JunctionSpec> junctions,
                       std::vector<RoadSpec> roads)
    : name_(std::move(name)), junctions_(std::move(junctions)), roads_(std::move(roads)) {
  validate_and_index();
}

void AgentGraph::validate_and_index() {
  const int n = agent_count();
  if (n == 0) throw InvalidGraph("graph has no junctions");
  for (int i = 0; i < n; ++i) {
    const auto& j = junctions_[static_cast<std::size_t>(i)];
    if (j.id != i) throw InvalidGraph("junction ids must be 0..n-1 in order");
    const int expected = j.kind == JunctionKind::ThreeWay ? 3 : 4;
    if (j.arm_count() != expected) {
      throw InvalidGraph("junction " + std::to_string(i) + " declares " +
                         std::to_string(expected) + " arms but has " +
                         std::to_string(j.arm_count()));
    }
  }
  for (std::size_t r = 0; r < roads_.size(); ++r) {
    const auto& road = roads_[r];
    if (road.id != static_cast<int>(r)) throw InvalidGraph("road ids must be 0..m-1 in order");
    if (road.length_cells < 6) throw InvalidGraph("road " + std::to_string(r) + " shorter than 6 cells");
    if (road.from.is_boundary() && road.to.is_boundary()) {
      throw InvalidGraph("road " + std::to_string(r) + " joins boundary to boundary");
    }
    if (road.is_boundary() && (road.one_way || road.connector)) {
      throw InvalidGraph("boundary road " + std::to_string(r) + " must be two-way");
    }
    for (const RoadEnd* e : {&road.from, &road.to}) {
      if (e->is_boundary()) continue;
      if (e->junction >= n) throw InvalidGraph("road " + std::to_string(r) + " names unknown junction");
      if (junctions_[static_cast<std::size_t>(e->junction)].arm_road[static_cast<int>(e->arm)] !=
          road.id) {
        throw InvalidGraph("road " + std::to_string(r) + " not registered on its junction arm");
      }
    }
    if (road.is_internal() && road.from.junction == road.to.junction) {
      throw InvalidGraph("road " + std::to_string(r) + " is a self-loop");
    }
  }
  for (const auto& j : junctions_) {
    for (int a = 0; a < kArms; ++a) {
      const int r = j.arm_road[static_cast<std::size_t>(a)];
      if (r < 0) continue;
      if (r >= static_cast<int>(roads_.size())) throw InvalidGraph("arm names unknown road");
      const auto& road = roads_[static_cast<std::size_t>(r)];
      const RoadEnd here{j.id, compass_from_index(a)};
      if (!(road.from == here) && !(road.to == here)) {
        throw InvalidGraph("junction " + std::to_string(j.id) + " arm does not match its road");
      }
    }
  }

  adjacency_.assign(static_cast<std::size_t>(n), {});
  comm_edges_.clear();
  for (const auto& road : roads_) {
    if (!road.is_internal()) continue;
    const AgentId lo = std::min(road.from.junction, road.to.junction);
    const AgentId hi = std::max(road.from.junction, road.to.junction);
    comm_edges_.emplace_back(lo, hi);
  }
  std::sort(comm_edges_.begin(), comm_edges_.end());
  comm_edges_.erase(std::unique(comm_edges_.begin(), comm_edges_.end()), comm_edges_.end());
  for (auto [a, b] : comm_edges_) {
    adjacency_[static_cast<std::size_t>(a)].push_back(b);
    adjacency_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());

  if (!is_connected(true)) throw InvalidGraph("graph is not connected");
}

const JunctionSpec& AgentGraph::junction(AgentId id) const {
  if (id < 0 || id >= agent_count()) throw UnknownAgent("agent " + std::to_string(id));
  return junctions_[static_cast<std::size_t>(id)];
}

const std::vector<AgentId>& AgentGraph::neighbors(AgentId agent) const {
  if (agent < 0 || agent >= agent_count()) throw UnknownAgent("agent " + std::to_string(agent));
  return adjacency_[static_cast<std::size_t>(agent)];
}

bool AgentGraph::are_neighbors(AgentId a, AgentId b) const {
  const auto& adj = neighbors(a);
  return std::binary_search(adj.begin(), adj.end(), b);
}

bool AgentGraph::is_connected(bool include_blocked) const {
  const int n = agent_count();
  std::vector<std::vector<AgentId>> adj(static_cast<std::size_t>(n));
  for (const auto& road : roads_) {
    if (!road.is_internal() || (road.fully_blocked() && !include_blocked)) continue;
    adj[static_cast<std::size_t>(road.from.junction)].push_back(road.to.junction);
    adj[static_cast<std::size_t>(road.to.junction)].push_back(road.from.junction);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<AgentId> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const AgentId u = q.front();
    q.pop();
    for (AgentId v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n;
}

std::vector<int> AgentGraph::blockable_roads() const {
  std::vector<int> out;
  for (const auto& road : roads_) {
    if (road.is_internal() && !road.connector) out.push_back(road.id);
  }
  return out;
}

std::vector<int> AgentGraph::blocked_roads() const {
  std::vector<int> out;
  for (const auto& road : roads_) {
    if (road.any_blocked()) out.push_back(road.id);
  }
  return out;
}

std::vector<std::pair<int, bool>> AgentGraph::blockable_carriageways() const {
  std::vector<std::pair<int, bool>> out;
  for (int id : blockable_roads()) {
    out.emplace_back(id, false);
    if (!road(id).one_way) out.emplace_back(id, true);
  }
  return out;
}

AgentGraph AgentGraph::with_blocked(int road_id) const {
  AgentGraph copy = *this;
  auto& r = copy.roads_.at(static_cast<std::size_t>(road_id));
  r.blocked = true;
  r.blocked_reverse = !r.one_way;
  return copy;
}

AgentGraph AgentGraph::with_blocked(int road_id, bool reverse) const {
  AgentGraph copy = *this;
  auto& r = copy.roads_.at(static_cast<std::size_t>(road_id));
  if (reverse) {
    if (r.one_way) throw InvalidGraph("one-way road " + std::to_string(road_id) + " has no reverse carriageway");
    r.blocked_reverse = true;
  } else {
    r.blocked = true;
  }
  return copy;
}

std::string AgentGraph::serialize() const {
  std::ostringstream os;
  os << kGraphMagic << ' ' << kGraphVersion << '\n';
  os << "name " << name_ << '\n';
  os << "junctions " << junctions_.size() << '\n';
  for (const auto& j : junctions_) {
    os << "junction " << j.id << ' ' << (j.kind == JunctionKind::ThreeWay ? "three" : "four");
    for (int a = 0; a < kArms; ++a) {
      const int r = j.arm_road[static_cast<std::size_t>(a)];
      os << ' ' << compass_name(compass_from_index(a)) << '=';
      if (r < 0) {
        os << '-';
      } else {
        os << r;
      }
    }
    os << '\n';
  }
  os << "roads " << roads_.size() << '\n';
  for (const auto& r : roads_) {
    os << "road " << r.id << ' ' << end_to_string(r.from) << ' ' << end_to_string(r.to) << ' '
       << (r.one_way ? "one_way" : "two_way") << ' ' << r.length_cells << ' '
       << block_token(r) << ' ' << (r.connector ? "connector" : "plain") << '\n';
  }
  return os.str();
}

AgentGraph AgentGraph::parse(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  int version = 0;
  if (!(is >> tok >> version) || tok != kGraphMagic) throw FormatError("not a netmarl graph file");
  if (version != kGraphVersion) throw FormatError("unsupported graph version " + std::to_string(version));
  std::string name;
  std::size_t nj = 0, nr = 0;
  if (!(is >> tok >> name) || tok != "name") throw FormatError("expected 'name'");
  if (!(is >> tok >> nj) || tok != "junctions") throw FormatError("expected 'junctions'");
  std::vector<JunctionSpec> junctions(nj);
  for (std::size_t i = 0; i < nj; ++i) {
    std::string kind;
    auto& j = junctions[i];
    if (!(is >> tok >> j.id >> kind) || tok != "junction") throw FormatError("expected 'junction'");
    if (kind == "three") {
      j.kind = JunctionKind::ThreeWay;
    } else if (kind == "four") {
      j.kind = JunctionKind::FourWay;
    } else {
      throw FormatError("bad junction kind '" + kind + "'");
    }
    for (int a = 0; a < kArms; ++a) {
      std::string arm;
      if (!(is >> arm)) throw FormatError("truncated junction line");
      const std::string prefix = std::string(compass_name(compass_from_index(a))) + "=";
      if (arm.rfind(prefix, 0) != 0) throw FormatError("bad arm field '" + arm + "'");
      const std::string v = arm.substr(prefix.size());
      j.arm_road[static_cast<std::size_t>(a)] = v == "-" ? -1 : std::stoi(v);
    }
  }
  if (!(is >> tok >> nr) || tok != "roads") throw FormatError("expected 'roads'");
  std::vector<RoadSpec> roads(nr);
  for (std::size_t i = 0; i < nr; ++i) {
    auto& r = roads[i];
    std::string from, to, dir, blocked, connector;
    if (!(is >> tok >> r.id >> from >> to >> dir >> r.length_cells >> blocked >> connector) ||
        tok != "road") {
      throw FormatError("bad road line");
    }
    r.from = end_from_string(from);
    r.to = end_from_string(to);
    if (dir != "one_way" && dir != "two_way") throw FormatError("bad direction '" + dir + "'");
    if (blocked != "blocked" && blocked != "open" && blocked != "forward" && blocked != "reverse") {
      throw FormatError("bad blocked flag");
    }
    if (connector != "connector" && connector != "plain") throw FormatError("bad connector flag");
    r.one_way = dir == "one_way";
    r.blocked = blocked == "blocked" || blocked == "forward";
    r.blocked_reverse = blocked == "reverse" || (blocked == "blocked" && !r.one_way);
    r.connector = connector == "connector";
  }
  if (is >> tok) throw FormatError("trailing content '" + tok + "'");
  return AgentGraph(name, std::move(junctions), std::move(roads));
}

AgentGraph build_network1() {
  Builder b;
  const K kinds[10] = {K::ThreeWay, K::FourWay, K::ThreeWay, K::FourWay, K::FourWay,
                       K::FourWay,  K::ThreeWay, K::FourWay, K::ThreeWay, K::ThreeWay};
  for (K k : kinds) b.junction(k);
  // 3x3 grid, row-major: 0 1 2 / 3 4 5 / 6 7 8, with 9 east of 5.
  b.link(0, C::East, 1, C::West, kInternalLength);
  b.link(1, C::East, 2, C::West, kInternalLength);
  b.link(3, C::East, 4, C::West, kInternalLength);
  b.link(4, C::East, 5, C::West, kInternalLength);
  b.link(6, C::East, 7, C::West, kInternalLength);
  b.link(7, C::East, 8, C::West, kInternalLength);
  b.link(0, C::South, 3, C::North, kInternalLength);
  b.link(1, C::South, 4, C::North, kInternalLength);
  b.link(2, C::South, 5, C::North, kInternalLength);
  b.link(3, C::South, 6, C::North, kInternalLength);
  b.link(4, C::South, 7, C::North, kInternalLength);
  b.link(5, C::South, 8, C::North, kInternalLength);
  b.link(5, C::East, 9, C::West, kInternalLength);
  b.boundary(0, C::North, kBoundaryLength);
  b.boundary(1, C::North, kBoundaryLength);
  b.boundary(2, C::East, kBoundaryLength);
  b.boundary(3, C::West, kBoundaryLength);
  b.boundary(6, C::West, kBoundaryLength);
  b.boundary(7, C::South, kBoundaryLength);
  b.boundary(8, C::South, kBoundaryLength);
  b.boundary(9, C::East, kBoundaryLength);
  b.boundary(9, C::South, kBoundaryLength);
  return AgentGraph("network1", std::move(b.junctions()), std::move(b.roads()));
}

AgentGraph build_network2() {
  Builder b;
  add_community(b);
  add_community(b);
  // A.12 -> B.13 and B.12 -> A.13, each a single directed lane.
  b.link(12, C::East, 14 + 13, C::East, kConnectorLength, true, true);
  b.link(14 + 12, C::East, 13, C::East, kConnectorLength, true, true);
  return AgentGraph("network2", std::move(b.junctions()), std::move(b.roads()));
}

std::vector<int> network2_communities() {
  std::vector<int> labels(28, 0);
  for (int i = 14; i < 28; ++i) labels[static_cast<std::size_t>(i)] = 1;
  return labels;
}

AgentGraph perturb(const AgentGraph& graph, std::uint64_t seed) {
  const auto candidates = graph.blockable_carriageways();
  if (candidates.empty()) throw NoBlockableRoad("graph '" + graph.name() + "' has no internal road");
  Rng rng(derive_seed(seed, "perturb"));
  const auto [road, reverse] = candidates[uniform_index(rng, candidates.size())];
  return graph.with_blocked(road, reverse);
}

std::vector<AgentGraph> perturbation_set(const AgentGraph& graph, int count, std::uint64_t seed) {
  auto candidates = graph.blockable_carriageways();
  if (count < 0 || static_cast<std::size_t>(count) > candidates.size()) {
    throw NoBlockableRoad("graph '" + graph.name() + "' has " + std::to_string(candidates.size()) +
                          " blockable carriageways, " + std::to_string(count) + " requested");
  }
  Rng rng(derive_seed(seed, "perturbation-set"));
  // Partial Fisher-Yates: the first `count` entries are a uniform draw.
  std::vector<AgentGraph> out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    const std::size_t j = i + uniform_index(rng, candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    out.push_back(graph.with_blocked(candidates[i].first, candidates[i].second));
  }
  return out;
}

std::string blocked_label(const AgentGraph& graph) {
  std::string out;
  for (const auto& r : graph.roads()) {
    if (!r.any_blocked()) continue;
    if (!out.empty()) out += ",";
    out += std::to_string(r.id);
    if (r.fully_blocked()) continue;
    out += r.blocked ? "+" : "-";
  }
  return out;
}

}  // namespace netmarl
