#include "netmarl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "netmarl/error.hpp"

namespace netmarl {

using diff::Tape;
using diff::Var;

const char* message_mode_name(MessageMode m) {
  switch (m) {
    case MessageMode::Emergent: return "emergent";
    case MessageMode::FixedProtocol: return "fixed_protocol";
    case MessageMode::Blank: return "blank";
  }
  return "?";
}

MessageMode parse_message_mode(const std::string& s) {
  if (s == "emergent") return MessageMode::Emergent;
  if (s == "fixed_protocol") return MessageMode::FixedProtocol;
  if (s == "blank") return MessageMode::Blank;
  throw ConfigError("unknown message mode '" + s + "'");
}

void PolicyConfig::validate() const {
  if (hidden < 1 || hidden > 1024) throw ConfigError("policy.hidden out of range");
  if (msg_bits < 1 || msg_bits > 30) throw ConfigError("policy.msg_bits must be in [1, 30]");
  if (msg_hidden < 1 || msg_hidden > 1024) throw ConfigError("policy.msg_hidden out of range");
}

namespace {

struct Block {
  diff::Dense enc;
  diff::LstmParams enc_lstm;
  diff::Dense msg_head;
  diff::ParamId attn;
  diff::LstmParams msg_lstm;
};

Block make_block(diff::ParamStore& s, const std::string& prefix, const PolicyConfig& c) {
  Block b;
  b.enc = diff::make_dense(s, prefix + "enc", ObservationGrid::kFlatSize, c.hidden);
  b.enc_lstm = diff::make_lstm(s, prefix + "enc_lstm", c.hidden, c.hidden);
  b.msg_head = diff::make_dense(s, prefix + "msg_head", c.hidden, 2 * c.msg_bits);
  b.attn = s.add(prefix + "attn.w", c.msg_bits, c.hidden);
  b.msg_lstm = diff::make_lstm(s, prefix + "msg_lstm", c.msg_bits, c.msg_hidden);
  return b;
}

void init_block(diff::ParamStore& s, const Block& b, Rng& rng) {
  diff::init_dense(s, b.enc, rng);
  diff::init_lstm(s, b.enc_lstm, rng);
  diff::init_dense(s, b.msg_head, rng);
  diff::glorot_init(s, b.attn, rng);
  diff::init_lstm(s, b.msg_lstm, rng);
}

struct Head {
  diff::ParamId h, q, b;
};

Head make_head(diff::ParamStore& s, const std::string& prefix, int actions,
               const PolicyConfig& c, Rng& rng) {
  Head hd;
  hd.h = s.add(prefix + "act_h.w", actions, c.hidden);
  hd.q = s.add(prefix + "act_q.w", actions, c.msg_hidden);
  hd.b = s.add(prefix + "act.b", actions, 1);
  // Small heads start the policy close to uniform.
  diff::glorot_init(s, hd.h, rng, 0.1);
  diff::glorot_init(s, hd.q, rng, 0.1);
  return hd;
}

}  // namespace

PolicySet::PolicySet(const AgentGraph& graph, PolicyConfig config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  Rng rng(derive_seed(init_seed, "policy-init"));
  std::optional<Block> shared;
  std::optional<Head> shared_head[2];
  for (const auto& j : graph.junctions()) {
    AgentPolicy p;
    p.agent = j.id;
    p.action_count = j.action_count();
    Block b;
    Head hd;
    if (config_.share_weights) {
      p.block = "shared/";
      if (!shared) {
        shared = make_block(store_, p.block, config_);
        init_block(store_, *shared, rng);
      }
      b = *shared;
      auto& slot = shared_head[p.action_count == 3 ? 0 : 1];
      if (!slot) {
        slot = make_head(store_, p.block + "a" + std::to_string(p.action_count) + "/",
                         p.action_count, config_, rng);
      }
      hd = *slot;
    } else {
      p.block = "a" + std::to_string(j.id) + "/";
      b = make_block(store_, p.block, config_);
      init_block(store_, b, rng);
      hd = make_head(store_, p.block, p.action_count, config_, rng);
    }
    p.enc = b.enc;
    p.enc_lstm = b.enc_lstm;
    p.msg_head = b.msg_head;
    p.attn = b.attn;
    p.msg_lstm = b.msg_lstm;
    p.act_h = hd.h;
    p.act_q = hd.q;
    p.act_b = hd.b;
    policies_.push_back(p);
  }
  apply_mode_freezing();
}

const AgentPolicy& PolicySet::policy(AgentId id) const {
  if (id < 0 || id >= agent_count()) throw UnknownAgent("agent " + std::to_string(id));
  return policies_[static_cast<std::size_t>(id)];
}

void PolicySet::set_blind(std::span<const AgentId> agents) {
  for (AgentId a : agents) {
    if (a < 0 || a >= agent_count()) throw UnknownAgent("blind agent " + std::to_string(a));
  }
  for (auto& p : policies_) p.blind = false;
  for (AgentId a : agents) policies_[static_cast<std::size_t>(a)].blind = true;
}

std::vector<AgentId> PolicySet::blind_agents() const {
  std::vector<AgentId> out;
  for (const auto& p : policies_) {
    if (p.blind) out.push_back(p.agent);
  }
  return out;
}

void PolicySet::set_mode(MessageMode mode) {
  config_.mode = mode;
  apply_mode_freezing();
}

void PolicySet::apply_mode_freezing() {
  const bool learned = config_.mode == MessageMode::Emergent;
  for (const auto& p : policies_) {
    store_.at(p.msg_head.w).frozen = !learned;
    store_.at(p.msg_head.b).frozen = !learned;
  }
}

std::string PolicySet::manifest() const {
  std::ostringstream os;
  for (const auto& p : policies_) {
    os << "agent " << p.agent << " " << p.block;
    for (const auto& prm : store_.params()) {
      if (prm.name.rfind(p.block, 0) == 0) os << " " << prm.name;
    }
    os << "\n";
  }
  return os.str();
}

AgentRuntime initial_runtime(Tape& tape, const PolicySet& set) {
  return {diff::lstm_zero_state(tape, set.config().hidden),
          diff::lstm_zero_state(tape, set.config().msg_hidden)};
}

AgentRuntime detach_runtime(Tape& tape, const AgentRuntime& rt) {
  return {{tape.detach(rt.enc.h), tape.detach(rt.enc.c)},
          {tape.detach(rt.msg.h), tape.detach(rt.msg.c)}};
}

MessageBus::MessageBus(const AgentGraph& graph, int bits)
    : graph_(&graph),
      bits_(bits),
      prev_(static_cast<std::size_t>(graph.agent_count())),
      cur_(static_cast<std::size_t>(graph.agent_count())) {}

void MessageBus::begin_tick(int tick) {
  if (tick != tick_ + 1) throw WrongTick("bus advanced from " + std::to_string(tick_) + " to " + std::to_string(tick));
  std::swap(prev_, cur_);
  for (auto& s : cur_) s = Slot{};
  tick_ = tick;
}

void MessageBus::post(AgentId sender, int tick, Var message, std::vector<double> bits) {
  if (tick != tick_) throw WrongTick("post at tick " + std::to_string(tick) + " on bus tick " + std::to_string(tick_));
  if (sender < 0 || sender >= graph_->agent_count()) throw UnknownAgent("sender " + std::to_string(sender));
  if (static_cast<int>(bits.size()) != bits_) throw ShapeMismatch("message width");
  auto& s = cur_[static_cast<std::size_t>(sender)];
  s.posted = true;
  s.var = message;
  s.bits = std::move(bits);
}

std::vector<InboxEntry> MessageBus::inbox(AgentId receiver, int tick) const {
  if (tick != tick_) throw WrongTick("inbox read at tick " + std::to_string(tick) + " on bus tick " + std::to_string(tick_));
  std::vector<InboxEntry> out;
  for (AgentId j : graph_->neighbors(receiver)) {
    const auto& s = prev_[static_cast<std::size_t>(j)];
    if (s.posted) out.push_back({j, s.var});
  }
  return out;
}

const std::vector<double>& MessageBus::previous_bits(AgentId sender) const {
  return prev_.at(static_cast<std::size_t>(sender)).bits;
}

void MessageBus::detach(Tape& tape) {
  for (auto& s : prev_) {
    if (s.posted) s.var = tape.constant(s.bits);
  }
}

std::vector<double> fixed_protocol_bits(const RewardComponents& c, int bits) {
  auto put = [](std::vector<double>& out, int value, int width) {
    for (int b = width - 1; b >= 0; --b) out.push_back(((value >> b) & 1) ? 1.0 : 0.0);
  };
  const int l = std::clamp(c.halted, 0, 15);
  const int w = std::min(15, static_cast<int>(std::floor(std::log2(std::max(0.0, c.waiting_sum) + 1.0))));
  double dbar = 1.0;
  if (!c.lane_delays.empty()) {
    dbar = 0.0;
    for (double d : c.lane_delays) dbar += d;
    dbar /= static_cast<double>(c.lane_delays.size());
  }
  const int dq = std::clamp(static_cast<int>(std::lround(dbar * 15.0)), 0, 15);
  const int e = std::clamp(c.emergency_brakes, 0, 3);
  std::vector<double> out;
  out.reserve(kFixedProtocolBits);
  put(out, l, 4);
  put(out, w, 4);
  put(out, dq, 4);
  put(out, e, 2);
  out.resize(static_cast<std::size_t>(bits), 0.0);
  return out;
}

std::uint64_t bits_to_word(std::span<const double> bits) {
  std::uint64_t w = 0;
  for (double b : bits) w = (w << 1) | (b > 0.5 ? 1u : 0u);
  return w;
}

Var encode(Tape& tape, const AgentPolicy& p, const ObservationGrid& obs, AgentRuntime& rt) {
  double flat[ObservationGrid::kFlatSize];
  flatten_into(obs, flat);
  Var x = tape.constant(flat);
  Var e = tape.relu(diff::dense(tape, p.enc, x));
  rt.enc = diff::lstm_step(tape, p.enc_lstm, e, rt.enc);
  return rt.enc.h;
}

CommOutput communicate(Tape& tape, const AgentPolicy& p, const AgentGraph& graph, Var h,
                       std::span<const InboxEntry> inbox, AgentRuntime& rt,
                       const CommOptions& opt, Rng& rng) {
  const int d = p.msg_head.out / 2;
  for (const auto& m : inbox) {
    if (!graph.are_neighbors(p.agent, m.sender)) {
      throw NonNeighborMessage("agent " + std::to_string(p.agent) + " received from " +
                               std::to_string(m.sender));
    }
  }
  CommOutput out;
  switch (opt.mode) {
    case MessageMode::Emergent: {
      Var logits = diff::dense(tape, p.msg_head, h);
      if (opt.greedy) {
        std::vector<double> zero(static_cast<std::size_t>(2 * d), 0.0);
        out.outgoing = tape.gumbel_binary(logits, zero, opt.gumbel.tau, true);
      } else {
        out.outgoing = diff::gumbel_sample(tape, logits, opt.gumbel, rng);
      }
      auto v = tape.value(out.outgoing);
      out.bits.assign(v.begin(), v.end());
      break;
    }
    case MessageMode::FixedProtocol: {
      if (!opt.own_components) throw ShapeMismatch("fixed protocol needs the sender's reward components");
      out.bits = fixed_protocol_bits(*opt.own_components, d);
      out.outgoing = tape.constant(out.bits);
      break;
    }
    case MessageMode::Blank:
      out.bits.assign(static_cast<std::size_t>(d), 0.0);
      out.outgoing = tape.constant(out.bits);
      break;
  }

  Var q_bar;
  if (inbox.empty()) {
    q_bar = tape.zeros(d);
  } else {
    std::vector<Var> msgs;
    msgs.reserve(inbox.size());
    for (const auto& m : inbox) msgs.push_back(m.message);
    // A blind agent must not leak its observation into the aggregation query.
    Var query = p.blind ? tape.zeros(tape.size(h)) : h;
    auto agg = diff::attention_aggregate(tape, p.attn, query, msgs);
    q_bar = agg.q_bar;
    out.alpha = std::move(agg.alpha);
  }
  rt.msg = diff::lstm_step(tape, p.msg_lstm, q_bar, rt.msg);
  out.q_hat = rt.msg.h;
  return out;
}

ActOutput act(Tape& tape, const AgentPolicy& p, Var h, Var q_hat, int tick, bool greedy,
              Rng& rng) {
  if (!is_action_tick(tick)) throw WrongTick("act at tick " + std::to_string(tick));
  Var hin = p.blind ? tape.zeros(tape.size(h)) : h;
  Var logits = tape.affine2(p.act_h, hin, p.act_q, q_hat, p.act_b);
  Var logp = tape.log_softmax(logits);
  ActOutput out;
  auto lp = tape.value(logp);
  out.probs.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) out.probs[i] = std::exp(lp[i]);
  if (greedy) {
    out.action = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  } else {
    const double u = uniform01(rng);
    double acc = 0.0;
    out.action = static_cast<int>(lp.size()) - 1;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      acc += out.probs[i];
      if (u < acc) {
        out.action = static_cast<int>(i);
        break;
      }
    }
  }
  out.log_prob = tape.pick(logp, out.action);
  return out;
}

Rng agent_rng(std::uint64_t seed, AgentId agent, int tick) {
  return Rng(derive_seed(seed, "gumbel", {static_cast<std::uint64_t>(agent),
                                          static_cast<std::uint64_t>(tick)}));
}

TickOutput agent_tick(Tape& tape, const AgentPolicy& p, const AgentGraph& graph,
                      MessageBus& bus, const ObservationGrid& obs, int tick, AgentRuntime& rt,
                      const CommOptions& opt, bool greedy_action, Rng& rng) {
  TickOutput out;
  Var h = encode(tape, p, obs, rt);
  auto inbox = bus.inbox(p.agent, tick);
  for (const auto& m : inbox) out.senders.push_back(m.sender);
  out.comm = communicate(tape, p, graph, h, inbox, rt, opt, rng);
  bus.post(p.agent, tick, out.comm.outgoing, out.comm.bits);
  if (is_action_tick(tick)) out.action = act(tape, p, h, out.comm.q_hat, tick, greedy_action, rng);
  return out;
}

}  // namespace netmarl
