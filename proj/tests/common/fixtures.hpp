#pragma once

#include <string>

#include "netmarl/graph.hpp"

namespace netmarl::testing {

/// Two 3-way junctions joined by one internal road, each with two boundary arms.
inline AgentGraph two_agent_graph() {
  return AgentGraph::parse(
      "netmarl-graph 1\n"
      "name pair\n"
      "junctions 2\n"
      "junction 0 three N=1 E=0 S=2 W=-\n"
      "junction 1 three N=3 E=- S=4 W=0\n"
      "roads 5\n"
      "road 0 0:E 1:W two_way 10 open plain\n"
      "road 1 B 0:N two_way 8 open plain\n"
      "road 2 B 0:S two_way 8 open plain\n"
      "road 3 B 1:N two_way 8 open plain\n"
      "road 4 B 1:S two_way 8 open plain\n");
}

/// Three junctions in a row; 1 is the only agent with two neighbours.
inline AgentGraph three_agent_line() {
  return AgentGraph::parse(
      "netmarl-graph 1\n"
      "name line3\n"
      "junctions 3\n"
      "junction 0 three N=2 E=0 S=3 W=-\n"
      "junction 1 four N=4 E=1 S=5 W=0\n"
      "junction 2 three N=6 E=- S=7 W=1\n"
      "roads 8\n"
      "road 0 0:E 1:W two_way 10 open plain\n"
      "road 1 1:E 2:W two_way 10 open plain\n"
      "road 2 B 0:N two_way 8 open plain\n"
      "road 3 B 0:S two_way 8 open plain\n"
      "road 4 B 1:N two_way 8 open plain\n"
      "road 5 B 1:S two_way 8 open plain\n"
      "road 6 B 2:N two_way 8 open plain\n"
      "road 7 B 2:S two_way 8 open plain\n");
}

}  // namespace netmarl::testing
