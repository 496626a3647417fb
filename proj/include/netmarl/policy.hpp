#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netmarl/diff/nn.hpp"
#include "netmarl/graph.hpp"
#include "netmarl/observation.hpp"
#include "netmarl/traffic.hpp"

namespace netmarl {

inline constexpr int kWindow = 5;  // ticks per action

/// What agents put on the bus.
enum class MessageMode : std::uint8_t {
  Emergent,       // learned Gumbel-Softmax bits
  FixedProtocol,  // quantised reward components of the sender
  Blank,          // all-zero words
};

const char* message_mode_name(MessageMode m);
MessageMode parse_message_mode(const std::string& s);

struct PolicyConfig {
  int hidden = 32;      // encoder width and observation LSTM size
  int msg_bits = 8;     // d
  int msg_hidden = 16;  // message-history LSTM size
  bool share_weights = false;
  MessageMode mode = MessageMode::Emergent;

  /// Throws ConfigError.
  void validate() const;
};

/// Parameter handles of one agent. Runtime state lives in AgentRuntime.
struct AgentPolicy {
  AgentId agent = 0;
  int action_count = 4;
  bool blind = false;
  std::string block;  // parameter-name prefix
  diff::Dense enc;
  diff::LstmParams enc_lstm;
  diff::Dense msg_head;  // hidden -> 2d logits
  diff::ParamId attn;    // d x hidden
  diff::LstmParams msg_lstm;
  diff::ParamId act_h;   // |A| x hidden
  diff::ParamId act_q;   // |A| x msg_hidden
  diff::ParamId act_b;   // |A|
};

/// The policies of every agent of a graph, over one parameter store.
class PolicySet {
 public:
  PolicySet(const AgentGraph& graph, PolicyConfig config, std::uint64_t init_seed);

  const PolicyConfig& config() const { return config_; }
  diff::ParamStore& store() { return store_; }
  const diff::ParamStore& store() const { return store_; }
  int agent_count() const { return static_cast<int>(policies_.size()); }
  const AgentPolicy& policy(AgentId id) const;
  /// Marks the listed agents blind; throws UnknownAgent.
  void set_blind(std::span<const AgentId> agents);
  std::vector<AgentId> blind_agents() const;
  /// Switches the message mode and refreezes message heads accordingly.
  void set_mode(MessageMode mode);
  /// Message heads are excluded from optimisation unless messages are learned.
  void apply_mode_freezing();
  /// One line per agent: "agent <id> <block> <param names...>".
  std::string manifest() const;

 private:
  PolicyConfig config_;
  diff::ParamStore store_;
  std::vector<AgentPolicy> policies_;
};

/// Recurrent state of one agent during a rollout.
struct AgentRuntime {
  diff::LstmState enc;
  diff::LstmState msg;
};

AgentRuntime initial_runtime(diff::Tape& tape, const PolicySet& set);
/// Copies the state into fresh constants (gradient cut).
AgentRuntime detach_runtime(diff::Tape& tape, const AgentRuntime& rt);

struct InboxEntry {
  AgentId sender = 0;
  diff::Var message;
};

/// One broadcast slot per sender, double-buffered by tick: messages posted at
/// tick t are readable by graph neighbours at tick t + 1 only.
class MessageBus {
 public:
  MessageBus(const AgentGraph& graph, int bits);

  /// Advances to `tick`; the slots of tick - 1 become readable.
  void begin_tick(int tick);
  int tick() const { return tick_; }
  /// Throws WrongTick unless `tick` is the current one, UnknownAgent.
  void post(AgentId sender, int tick, diff::Var message, std::vector<double> bits);
  /// Messages posted at tick - 1 by neighbours of `receiver`, sorted by sender.
  std::vector<InboxEntry> inbox(AgentId receiver, int tick) const;
  /// Bits a sender posted at tick - 1 (empty when it posted nothing).
  const std::vector<double>& previous_bits(AgentId sender) const;
  /// Replaces every readable message by a constant copy.
  void detach(diff::Tape& tape);

 private:
  struct Slot {
    bool posted = false;
    diff::Var var;
    std::vector<double> bits;
  };
  const AgentGraph* graph_;
  int bits_;
  int tick_ = -1;
  std::vector<Slot> prev_;
  std::vector<Slot> cur_;
};

/// Fixed 14-bit encoding of reward components, most significant field first:
/// halted (4 bits, clamped to 15), waiting bucket min(15, floor(log2(w + 1)))
/// (4 bits), round(mean lane delay * 15) (4 bits), emergency brakes (2 bits,
/// clamped to 3). Truncated to the first `bits` bits, or zero-padded.
std::vector<double> fixed_protocol_bits(const RewardComponents& c, int bits);
inline constexpr int kFixedProtocolBits = 14;

/// Big-endian integer of a binary vector.
std::uint64_t bits_to_word(std::span<const double> bits);

/// h_i(t): dense + ReLU + observation LSTM.
diff::Var encode(diff::Tape& tape, const AgentPolicy& p, const ObservationGrid& obs,
                 AgentRuntime& rt);

struct CommOutput {
  diff::Var outgoing;
  std::vector<double> bits;
  diff::Var q_hat;
  std::vector<double> alpha;  // aligned with the inbox
};

struct CommOptions {
  MessageMode mode = MessageMode::Emergent;
  diff::GumbelConfig gumbel;
  bool greedy = false;  // deterministic bits: class 1 iff its logit is larger
  const RewardComponents* own_components = nullptr;  // FixedProtocol only
};

/// Outgoing message, attention over the inbox and the message-history LSTM.
/// Throws NonNeighborMessage.
CommOutput communicate(diff::Tape& tape, const AgentPolicy& p, const AgentGraph& graph,
                       diff::Var h, std::span<const InboxEntry> inbox, AgentRuntime& rt,
                       const CommOptions& opt, Rng& rng);

struct ActOutput {
  int action = 0;
  diff::Var log_prob;
  std::vector<double> probs;
};

/// softmax(W_h h + W_q q_hat + b); blind agents see a zero h.
/// Throws WrongTick unless tick is the last of a window.
ActOutput act(diff::Tape& tape, const AgentPolicy& p, diff::Var h, diff::Var q_hat, int tick,
              bool greedy, Rng& rng);

inline bool is_action_tick(int tick) { return tick % kWindow == kWindow - 1; }

/// Rng of agent `agent` at `tick` under episode seed `seed`.
Rng agent_rng(std::uint64_t seed, AgentId agent, int tick);

struct TickOutput {
  CommOutput comm;
  std::vector<AgentId> senders;
  std::optional<ActOutput> action;
};

/// encode -> communicate (reads tick-1 slots, posts the tick-t slot) -> act at
/// window ends.
TickOutput agent_tick(diff::Tape& tape, const AgentPolicy& p, const AgentGraph& graph,
                      MessageBus& bus, const ObservationGrid& obs, int tick, AgentRuntime& rt,
                      const CommOptions& opt, bool greedy_action, Rng& rng);

}  // namespace netmarl
