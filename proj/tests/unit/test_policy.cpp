#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "common/fixtures.hpp"
#include "common/gradcheck.hpp"
#include "netmarl/error.hpp"
#include "netmarl/trainer.hpp"

using namespace netmarl;
using namespace netmarl::testing;

namespace {

PolicyConfig small_config() {
  PolicyConfig pc;
  pc.hidden = 8;
  pc.msg_bits = 4;
  pc.msg_hidden = 6;
  return pc;
}

ObservationGrid random_grid(Rng& rng) {
  ObservationGrid g;
  for (auto& arm : g.vehicles)
    for (auto& cell : arm)
      if (uniform01(rng) < 0.5) cell = {1.0, uniform01(rng), uniform01(rng) < 0.3 ? 1.0 : 0.0};
  g.phase[uniform_index(rng, 4)] = 1.0;
  g.arm_mask = {1.0, 1.0, 1.0, 1.0};
  return g;
}

struct TickTrace {
  std::vector<std::vector<double>> bits;  // [tick * n + agent]
  std::vector<int> actions;
  std::vector<double> log_probs;
};

// Runs `ticks` ticks of agent_tick with agents processed in `order`.
TickTrace run_order(const AgentGraph& g, const PolicySet& set, const std::vector<std::vector<ObservationGrid>>& obs,
                    const std::vector<AgentId>& order, std::uint64_t seed) {
  const int n = g.agent_count();
  const int ticks = static_cast<int>(obs.size());
  Tape tape(const_cast<ParamStore*>(&set.store()));
  MessageBus bus(g, set.config().msg_bits);
  std::vector<AgentRuntime> rts;
  for (int a = 0; a < n; ++a) rts.push_back(initial_runtime(tape, set));
  TickTrace tr;
  tr.bits.assign(static_cast<std::size_t>(ticks * n), {});
  tr.actions.assign(static_cast<std::size_t>(ticks * n), -1);
  tr.log_probs.assign(static_cast<std::size_t>(ticks * n), 0.0);
  CommOptions opt;
  for (int t = 0; t < ticks; ++t) {
    bus.begin_tick(t);
    for (AgentId a : order) {
      Rng rng = agent_rng(seed, a, t);
      auto out = agent_tick(tape, set.policy(a), g, bus, obs[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)],
                            t, rts[static_cast<std::size_t>(a)], opt, false, rng);
      const auto k = static_cast<std::size_t>(t * n + a);
      tr.bits[k] = out.comm.bits;
      if (out.action) {
        tr.actions[k] = out.action->action;
        tr.log_probs[k] = tape.value(out.action->log_prob)[0];
      }
    }
  }
  return tr;
}

}  // namespace

TEST_SUITE("agentpolicy") {
  TEST_CASE("zero heads give a uniform action distribution") {
    const AgentGraph g = two_agent_graph();
    PolicySet set(g, small_config(), 1);
    for (auto& p : set.store().params()) {
      if (p.name.find("act") != std::string::npos) std::fill(p.value.begin(), p.value.end(), 0.0);
    }
    Tape tape(&set.store());
    AgentRuntime rt = initial_runtime(tape, set);
    Rng rng(1);
    Var h = encode(tape, set.policy(0), random_grid(rng), rt);
    auto out = act(tape, set.policy(0), h, tape.zeros(6), 4, false, rng);
    REQUIRE(out.probs.size() == 3);
    for (double p : out.probs) CHECK(p == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(act(tape, set.policy(0), h, tape.zeros(6), 3, false, rng), WrongTick);
  }

  TEST_CASE("action head width follows the junction kind") {
    const AgentGraph g = build_network1();
    PolicySet set(g, small_config(), 2);
    for (AgentId a = 0; a < g.agent_count(); ++a) CHECK(set.policy(a).action_count == g.junction(a).action_count());
  }

  TEST_CASE("empty inbox aggregates to zero and a single message passes through") {
    const AgentGraph g = two_agent_graph();
    PolicySet set(g, small_config(), 3);
    Tape tape(&set.store());
    Rng rng(3);
    AgentRuntime rt = initial_runtime(tape, set);
    Var h = encode(tape, set.policy(1), random_grid(rng), rt);
    CommOptions opt;
    auto empty = communicate(tape, set.policy(1), g, h, {}, rt, opt, rng);
    CHECK(empty.alpha.empty());
    for (double b : empty.bits) CHECK((b == 0.0 || b == 1.0));
    const std::vector<double> m{1, 0, 1, 1};
    std::vector<InboxEntry> inbox{{0, tape.constant(m)}};
    auto one = communicate(tape, set.policy(1), g, h, inbox, rt, opt, rng);
    REQUIRE(one.alpha.size() == 1);
    CHECK(one.alpha[0] == 1.0);
    const auto q = diff::attention_aggregate(tape, set.policy(1).attn, h, std::vector<Var>{inbox[0].message});
    for (int i = 0; i < 4; ++i) CHECK(tape.value(q.q_bar)[i] == m[static_cast<std::size_t>(i)]);

    PolicySet line(three_agent_line(), small_config(), 3);
    std::vector<InboxEntry> bad{{2, tape.constant(m)}};
    Tape t2(&line.store());
    AgentRuntime r2 = initial_runtime(t2, line);
    Var h0 = encode(t2, line.policy(0), random_grid(rng), r2);
    CHECK_THROWS_AS(communicate(t2, line.policy(0), three_agent_line(), h0, bad, r2, opt, rng), NonNeighborMessage);
  }

  TEST_CASE("one-tick delay on the message bus") {
    const AgentGraph g = three_agent_line();
    MessageBus bus(g, 2);
    ParamStore s;
    Tape tape(&s);
    bus.begin_tick(0);
    for (AgentId a = 0; a < 3; ++a) CHECK(bus.inbox(a, 0).empty());
    bus.post(0, 0, tape.constant(std::vector<double>{1, 0}), {1, 0});
    CHECK(bus.inbox(1, 0).empty());  // same tick: not yet visible
    CHECK_THROWS_AS(bus.post(1, 1, tape.zeros(2), {0, 0}), WrongTick);
    bus.begin_tick(1);
    const auto in1 = bus.inbox(1, 1);
    REQUIRE(in1.size() == 1);
    CHECK(in1[0].sender == 0);
    CHECK(bus.inbox(2, 1).empty());  // 0 and 2 are not neighbours
    CHECK(bus.previous_bits(0) == std::vector<double>{1, 0});
    bus.begin_tick(2);
    CHECK(bus.inbox(1, 2).empty());  // nothing posted at tick 1
  }

  TEST_CASE("rollout audit: every consumed message came from a neighbour one tick earlier") {
    for (const AgentGraph& g : {build_network1(), build_network2()}) {
      PolicySet set(g, small_config(), 4);
      SimConfig sim;
      sim.episode_len = 50;
      TrainConfig tc;
      const EpisodeLog log = run_episode(g, set, sim, tc, 4);
      std::size_t consumed = 0;
      for (const auto& rec : log.records) {
        if (rec.tick >= log.episode_len) continue;
        CHECK(rec.word >= 0);
        CHECK(rec.word < (1 << 4));
        if (rec.tick == 0) CHECK(rec.inbox.empty());
        for (const auto& m : rec.inbox) {
          ++consumed;
          CHECK(g.are_neighbors(rec.agent, m.sender));
          CHECK(m.word == log.at(rec.tick - 1, m.sender).word);
        }
        if (rec.tick > 0) CHECK(rec.inbox.size() == g.neighbors(rec.agent).size());
      }
      CHECK(consumed > 0);
      for (AgentId a = 0; a < g.agent_count(); ++a) CHECK(log.actions(a).size() == 10);
    }
  }

  TEST_CASE("500 ticks give exactly 100 actions per agent") {
    const AgentGraph g = build_network1();
    PolicySet set(g, small_config(), 5);
    SimConfig sim;
    TrainConfig tc;
    const EpisodeLog log = run_episode(g, set, sim, tc, 5);
    for (AgentId a = 0; a < 10; ++a) CHECK(log.actions(a).size() == 100);
  }

  TEST_CASE("processing order within a tick does not change any outcome") {
    const AgentGraph g = build_network1();
    PolicySet set(g, small_config(), 6);
    Rng rng(6);
    std::vector<std::vector<ObservationGrid>> obs(20);
    for (auto& tick : obs)
      for (int a = 0; a < 10; ++a) tick.push_back(random_grid(rng));
    std::vector<AgentId> order(10);
    std::iota(order.begin(), order.end(), 0);
    const TickTrace base = run_order(g, set, obs, order, 6);
    for (int k = 0; k < 5; ++k) {
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
      const TickTrace other = run_order(g, set, obs, order, 6);
      CHECK(other.bits == base.bits);
      CHECK(other.actions == base.actions);
      CHECK(other.log_probs == base.log_probs);
    }
  }

  TEST_CASE("blind agent's action distribution ignores its own observations") {
    const AgentGraph g = two_agent_graph();
    PolicySet set(g, small_config(), 7);
    const AgentId blind[] = {1};
    set.set_blind(blind);
    Rng rng(7);
    std::vector<std::vector<double>> inbox_words;
    std::vector<ObservationGrid> own_a, own_b;
    for (int t = 0; t < 25; ++t) {
      std::vector<double> w(4);
      for (auto& x : w) x = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      inbox_words.push_back(w);
      own_a.push_back(random_grid(rng));
      own_b.push_back(random_grid(rng));
    }
    auto run = [&](const std::vector<ObservationGrid>& own) {
      Tape tape(&set.store());
      AgentRuntime rt = initial_runtime(tape, set);
      std::vector<std::vector<double>> probs;
      CommOptions opt;
      for (int t = 0; t < 25; ++t) {
        Rng r = agent_rng(7, 1, t);
        Var h = encode(tape, set.policy(1), own[static_cast<std::size_t>(t)], rt);
        std::vector<InboxEntry> inbox;
        if (t > 0) inbox.push_back({0, tape.constant(inbox_words[static_cast<std::size_t>(t)])});
        auto comm = communicate(tape, set.policy(1), g, h, inbox, rt, opt, r);
        if (is_action_tick(t)) probs.push_back(act(tape, set.policy(1), h, comm.q_hat, t, false, r).probs);
      }
      return probs;
    };
    CHECK(run(own_a) == run(own_b));
    set.set_blind({});
    CHECK(run(own_a) != run(own_b));  // the observation path is live when sighted
    CHECK_THROWS_AS(set.set_blind(std::vector<AgentId>{5}), UnknownAgent);
  }

  TEST_CASE("fixed protocol encoding") {
    RewardComponents c{0, 0.0, {1.0, 1.0, 1.0}, 0};
    CHECK(fixed_protocol_bits(c, 14) == std::vector<double>{0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0});
    c.halted = 20;
    const auto b = fixed_protocol_bits(c, 14);
    CHECK(std::vector<double>(b.begin(), b.begin() + 4) == std::vector<double>{1, 1, 1, 1});
    RewardComponents d{3, 6.0, {0.2, 0.6}, 5};
    // halted 3 -> 0011; floor(log2 7) = 2 -> 0010; round(0.4 * 15) = 6 -> 0110; brakes 5 -> 3 -> 11
    CHECK(fixed_protocol_bits(d, 14) == std::vector<double>{0, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1, 0, 1, 1});
    CHECK(fixed_protocol_bits(d, 8) == std::vector<double>{0, 0, 1, 1, 0, 0, 1, 0});
    const auto padded = fixed_protocol_bits(d, 16);
    CHECK(padded.size() == 16);
    CHECK(padded[14] == 0.0);
    CHECK(padded[15] == 0.0);
    CHECK(bits_to_word(std::vector<double>{1, 0, 1}) == 5);
  }

  TEST_CASE("encoder gradient matches finite differences") {
    const AgentGraph g = two_agent_graph();
    PolicyConfig pc = small_config();
    auto set = std::make_shared<PolicySet>(g, pc, 8);
    Rng rng(8);
    std::vector<ObservationGrid> obs;
    for (int t = 0; t < 5; ++t) obs.push_back(random_grid(rng));
    const auto r = random_vec(rng, pc.hidden);
    GradProblem p{std::shared_ptr<ParamStore>(set, &set->store()), [set, obs, r](Tape& t) {
                    AgentRuntime rt = initial_runtime(t, *set);
                    Var h;
                    for (const auto& o : obs) h = encode(t, set->policy(0), o, rt);
                    return project(t, h, r);
                  }};
    Rng dir(9);
    for (int k = 0; k < 5; ++k) CHECK(directional_check(p, dir, "a0/") < kFdTolerance);
  }
}
