#include <doctest.h>

#include <algorithm>
#include <set>

#include "common/fixtures.hpp"
#include "netmarl/error.hpp"
#include "netmarl/graph.hpp"

using namespace netmarl;

namespace {

bool contains(const std::vector<AgentId>& v, AgentId x) { return std::find(v.begin(), v.end(), x) != v.end(); }

// Independent reachability over roads that carry traffic in at least one direction.
int component_size(const AgentGraph& g, AgentId start, bool skip_connectors) {
  std::set<AgentId> seen{start};
  std::vector<AgentId> stack{start};
  while (!stack.empty()) {
    const AgentId a = stack.back();
    stack.pop_back();
    for (const auto& r : g.roads()) {
      if (r.is_boundary() || r.fully_blocked() || (skip_connectors && r.connector)) continue;
      AgentId other = -1;
      if (r.from.junction == a) other = r.to.junction;
      if (r.to.junction == a) other = r.from.junction;
      if (other >= 0 && seen.insert(other).second) stack.push_back(other);
    }
  }
  return static_cast<int>(seen.size());
}

}  // namespace

TEST_SUITE("graphnet") {
  TEST_CASE("network1 adjacency required by the analysis") {
    const AgentGraph g = build_network1();
    CHECK(g.agent_count() == 10);
    for (AgentId j : {1, 3, 5, 7}) CHECK(contains(g.neighbors(4), j));
    for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 1}, {1, 4}, {3, 4}, {4, 5}, {4, 7}}) {
      CHECK(g.are_neighbors(a, b));
    }
    CHECK(g.is_connected());
    CHECK(component_size(g, 0, false) == 10);
    int three = 0, four = 0;
    for (const auto& j : g.junctions()) (j.kind == JunctionKind::ThreeWay ? three : four)++;
    CHECK(three > 0);
    CHECK(four > 0);
  }

  TEST_CASE("builders are referentially transparent") {
    CHECK(build_network1().serialize() == build_network1().serialize());
    CHECK(build_network2().serialize() == build_network2().serialize());
  }

  TEST_CASE("network2 communities joined by two one-way connectors") {
    const AgentGraph g = build_network2();
    CHECK(g.agent_count() == 28);
    const auto comm = network2_communities();
    int cross = 0;
    for (const auto& r : g.roads()) {
      if (r.is_boundary()) continue;
      if (comm[static_cast<std::size_t>(r.from.junction)] != comm[static_cast<std::size_t>(r.to.junction)]) {
        ++cross;
        CHECK(r.one_way);
        CHECK(r.connector);
      }
    }
    CHECK(cross == 2);
    CHECK(component_size(g, 0, true) == 14);
    CHECK(component_size(g, 14, true) == 14);
    CHECK(component_size(g, 0, false) == 28);
  }

  TEST_CASE("communication symmetry, arm counts and comm edges on both networks") {
    for (const AgentGraph& g : {build_network1(), build_network2()}) {
      for (AgentId i = 0; i < g.agent_count(); ++i) {
        CHECK_FALSE(contains(g.neighbors(i), i));
        for (AgentId j : g.neighbors(i)) CHECK(contains(g.neighbors(j), i));
        const auto& jn = g.junction(i);
        CHECK(jn.arm_count() == (jn.kind == JunctionKind::ThreeWay ? 3 : 4));
      }
      // comm_edges <-> some road joins the pair.
      std::set<std::pair<int, int>> from_roads;
      for (const auto& r : g.roads()) {
        if (r.is_internal()) {
          from_roads.insert({std::min(r.from.junction, r.to.junction), std::max(r.from.junction, r.to.junction)});
        }
      }
      const std::set<std::pair<int, int>> edges(g.comm_edges().begin(), g.comm_edges().end());
      CHECK(edges == from_roads);
    }
  }

  TEST_CASE("unknown agent") {
    const AgentGraph g = build_network1();
    CHECK_THROWS_AS(g.neighbors(10), UnknownAgent);
    CHECK_THROWS_AS(g.neighbors(-1), UnknownAgent);
  }

  TEST_CASE("serialization round trip, including blocked carriageways") {
    for (const AgentGraph& g : {build_network1(), build_network2(), build_network1().with_blocked(3, true),
                                build_network1().with_blocked(2)}) {
      const AgentGraph back = AgentGraph::parse(g.serialize());
      CHECK(back == g);
      CHECK(back.serialize() == g.serialize());
    }
    CHECK_THROWS_AS(AgentGraph::parse("netmarl-graph 2\n"), FormatError);
  }

  TEST_CASE("perturb is deterministic and closes exactly one carriageway") {
    const AgentGraph g = build_network1();
    CHECK(perturb(g, 7) == perturb(g, 7));
    for (std::uint64_t s = 0; s < 50; ++s) {
      const AgentGraph p = perturb(g, s);
      int closed = 0;
      for (const auto& r : p.roads()) closed += (r.blocked ? 1 : 0) + (r.blocked_reverse ? 1 : 0);
      CHECK(closed == 1);
      CHECK(p.comm_edges() == g.comm_edges());
    }
    CHECK(g.blocked_roads().empty());  // original untouched
  }

  TEST_CASE("every internal road is blocked by some seed in 0..999") {
    const AgentGraph g = build_network1();
    std::set<int> hit;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const AgentGraph p = perturb(g, s);
      for (const auto& r : p.roads()) {
        if (r.any_blocked()) hit.insert(r.id);
      }
    }
    std::set<int> internal;
    for (const auto& r : g.roads()) {
      if (r.is_internal()) internal.insert(r.id);
    }
    CHECK(hit == internal);
  }

  TEST_CASE("perturb never touches network2 connectors") {
    const AgentGraph g = build_network2();
    for (std::uint64_t s = 0; s < 300; ++s) {
      const AgentGraph p = perturb(g, s);
      for (const auto& r : p.roads()) {
        if (r.connector) CHECK_FALSE(r.any_blocked());
      }
      CHECK(p.comm_edges() == g.comm_edges());
    }
  }

  TEST_CASE("perturbation_set draws distinct carriageways") {
    const AgentGraph g = build_network1();
    const auto set = perturbation_set(g, 25, 3);
    CHECK(set.size() == 25);
    std::set<std::string> labels;
    for (const auto& v : set) labels.insert(blocked_label(v));
    CHECK(labels.size() == 25);
    CHECK_THROWS_AS(perturbation_set(g, 27, 3), NoBlockableRoad);
  }

  TEST_CASE("graph without internal roads cannot be perturbed") {
    const AgentGraph lone = AgentGraph::parse(
        "netmarl-graph 1\nname lone\njunctions 1\njunction 0 three N=0 E=1 S=2 W=-\nroads 3\n"
        "road 0 B 0:N two_way 8 open plain\nroad 1 B 0:E two_way 8 open plain\nroad 2 B 0:S two_way 8 open plain\n");
    CHECK(lone.neighbors(0).empty());
    CHECK_THROWS_AS(perturb(lone, 1), NoBlockableRoad);
  }

  TEST_CASE("structural validation") {
    // Road shorter than the 4-cell observation region plus margin.
    CHECK_THROWS_AS(AgentGraph::parse("netmarl-graph 1\nname bad\njunctions 1\njunction 0 three N=0 E=1 S=2 W=-\n"
                                      "roads 3\nroad 0 B 0:N two_way 5 open plain\nroad 1 B 0:E two_way 8 open plain\n"
                                      "road 2 B 0:S two_way 8 open plain\n"),
                    InvalidGraph);
    // Three-way junction with four arms.
    CHECK_THROWS_AS(AgentGraph::parse("netmarl-graph 1\nname bad\njunctions 1\njunction 0 three N=0 E=1 S=2 W=3\n"
                                      "roads 4\nroad 0 B 0:N two_way 8 open plain\nroad 1 B 0:E two_way 8 open plain\n"
                                      "road 2 B 0:S two_way 8 open plain\nroad 3 B 0:W two_way 8 open plain\n"),
                    InvalidGraph);
  }
}
