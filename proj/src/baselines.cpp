#include "netmarl/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "netmarl/error.hpp"

namespace netmarl {

using diff::Tape;
using diff::Var;

int fixed_time_policy(const JunctionSpec& junction, int tick) {
  if (!is_action_tick(tick)) throw WrongTick("fixed-time decision at tick " + std::to_string(tick));
  return (tick / kWindow) % junction.action_count();
}

int sotl_policy(const JunctionSpec& junction, std::span<const int> queues, int current_phase,
                int threshold) {
  if (threshold < 1) throw ConfigError("sotl threshold must be >= 1");
  if (queues.size() != kArms) throw ShapeMismatch("sotl expects one queue per arm");
  const auto phases = legal_actions(junction);
  int best = -1;
  int best_queue = threshold;
  for (int p = 0; p < static_cast<int>(phases.size()); ++p) {
    if (p == current_phase) continue;
    const int q = queues[static_cast<std::size_t>(phases[static_cast<std::size_t>(p)].served)];
    if (q > best_queue) {
      best = p;
      best_queue = q;
    }
  }
  return best < 0 ? current_phase : best;
}

int FixedTimeController::decide(const TrafficState&, AgentId agent, int window, const ObservationGrid&) {
  return fixed_time_policy(graph_->junction(agent), window * kWindow + kWindow - 1);
}

SotlController::SotlController(int threshold) : threshold_(threshold) {
  if (threshold < 1) throw ConfigError("sotl threshold must be >= 1");
}

int SotlController::decide(const TrafficState& state, AgentId agent, int, const ObservationGrid&) {
  const auto queues = lane_pressure(state, agent);
  return sotl_policy(state.map->graph().junction(agent), queues,
                     state.phases[static_cast<std::size_t>(agent)], threshold_);
}

void DqnConfig::validate() const {
  if (hidden < 1) throw ConfigError("dqn.hidden must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("dqn.lr must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dqn.gamma must be in [0, 1]");
  if (replay_capacity < 1 || batch < 1 || train_every < 1 || target_sync < 1) {
    throw ConfigError("dqn sizes must be positive");
  }
  if (!(eps_fraction > 0.0 && eps_fraction <= 1.0)) throw ConfigError("dqn.eps_fraction must be in (0, 1]");
}

double dqn_epsilon(const DqnConfig& cfg, int episode, int episodes) {
  const double horizon = cfg.eps_fraction * episodes;
  if (horizon <= 0.0 || episode >= horizon) return cfg.eps_end;
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * (episode / horizon);
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(static_cast<std::size_t>(capacity)) {
  if (capacity < 1) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<const Transition*> out;
  if (items_.empty()) return out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[uniform_index(rng, items_.size())]);
  return out;
}

DqnAgents::DqnAgents(const AgentGraph& graph, DqnConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, "dqn-init"));
  for (const auto& j : graph.junctions()) {
    const std::string p = "q" + std::to_string(j.id) + "/";
    Net n;
    n.actions = j.action_count();
    n.enc = diff::make_dense(store_, p + "enc", ObservationGrid::kFlatSize, cfg_.hidden);
    n.lstm = diff::make_lstm(store_, p + "lstm", cfg_.hidden, cfg_.hidden);
    n.head = diff::make_dense(store_, p + "head", cfg_.hidden, n.actions);
    diff::init_dense(store_, n.enc, rng);
    diff::init_lstm(store_, n.lstm, rng);
    diff::init_dense(store_, n.head, rng, 0.1);
    nets_.push_back(n);
  }
}

Var DqnAgents::q_var(Tape& tape, AgentId agent, const WindowObs& obs) const {
  const Net& n = nets_.at(static_cast<std::size_t>(agent));
  if (obs.size() != static_cast<std::size_t>(kWindow * ObservationGrid::kFlatSize)) {
    throw ShapeMismatch("window observation size");
  }
  auto st = diff::lstm_zero_state(tape, cfg_.hidden);
  for (int k = 0; k < kWindow; ++k) {
    Var x = tape.constant(std::span<const double>(obs).subspan(
        static_cast<std::size_t>(k * ObservationGrid::kFlatSize), ObservationGrid::kFlatSize));
    st = diff::lstm_step(tape, n.lstm, tape.relu(diff::dense(tape, n.enc, x)), st);
  }
  return diff::dense(tape, n.head, st.h);
}

std::vector<double> DqnAgents::q_values(AgentId agent, const WindowObs& obs) const {
  diff::ParamStore& store = const_cast<diff::ParamStore&>(store_);  // read-only forward
  Tape tape(&store);
  auto v = tape.value(q_var(tape, agent, obs));
  return {v.begin(), v.end()};
}

double DqnAgents::td_update_gradients(std::span<const Transition* const> batch, const DqnAgents& target) {
  if (batch.empty()) return 0.0;
  Tape tape(&store_);
  std::vector<Var> terms;
  std::vector<double> weights;
  double loss = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Transition* t : batch) {
    double y = t->reward;
    if (!t->done) {
      const auto qn = target.q_values(t->agent, t->next);
      y += cfg_.gamma * *std::max_element(qn.begin(), qn.end());
    }
    Var q = tape.pick(q_var(tape, t->agent, t->obs), t->action);
    const double neg_y = -y;
    Var diff = tape.add(q, tape.constant(std::span<const double>(&neg_y, 1)));
    Var sq = tape.mul(diff, diff);
    loss += w * tape.value(sq)[0];
    terms.push_back(sq);
    weights.push_back(w);
  }
  tape.backward(tape.weighted_sum(terms, weights));
  return loss;
}

DqnController::DqnController(const DqnAgents& agents, double epsilon, std::uint64_t seed)
    : agents_(&agents), epsilon_(epsilon), seed_(seed) {}

void DqnController::reset(const TrafficState& state, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(state.map->graph().agent_count());
  current_.assign(n, {});
  windows_.assign(n, {});
  episode_seed_ = derive_seed(seed_, "dqn-act", {seed});
}

void DqnController::on_tick(int, AgentId agent, const ObservationGrid& obs) {
  auto& cur = current_.at(static_cast<std::size_t>(agent));
  const auto flat = flatten(obs);
  cur.insert(cur.end(), flat.begin(), flat.end());
  if (cur.size() == static_cast<std::size_t>(kWindow * ObservationGrid::kFlatSize)) {
    windows_[static_cast<std::size_t>(agent)].push_back(std::move(cur));
    cur.clear();
  }
}

int DqnController::decide(const TrafficState&, AgentId agent, int window, const ObservationGrid&) {
  const auto& ws = windows_.at(static_cast<std::size_t>(agent));
  if (static_cast<int>(ws.size()) != window + 1) throw WrongTick("dqn window bookkeeping out of step");
  const int n = agents_->action_count(agent);
  Rng rng(derive_seed(episode_seed_, {static_cast<std::uint64_t>(agent), static_cast<std::uint64_t>(window)}));
  if (epsilon_ > 0.0 && uniform01(rng) < epsilon_) {
    return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
  }
  const auto q = agents_->q_values(agent, ws.back());
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

WindowObs DqnController::tail(AgentId agent) const {
  WindowObs w = current_.at(static_cast<std::size_t>(agent));
  const std::size_t full = static_cast<std::size_t>(kWindow * ObservationGrid::kFlatSize);
  const std::size_t f = ObservationGrid::kFlatSize;
  if (w.empty()) {
    w.assign(full, 0.0);
    return w;
  }
  while (w.size() < full) w.insert(w.end(), w.end() - static_cast<std::ptrdiff_t>(f), w.end());
  return w;
}

DqnTrainResult dqn_independent_train(const AgentGraph& graph, DqnAgents& agents, int episodes,
                                     const SimConfig& sim, std::uint64_t seed,
                                     std::uint64_t config_digest, int checkpoint_every,
                                     const EpisodeCallback& on_episode) {
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  const DqnConfig& cfg = agents.config();
  DqnTrainResult res;
  ReplayBuffer replay(cfg.replay_capacity);
  DqnAgents target = agents;
  Rng rng(derive_seed(seed, "dqn-replay"));
  diff::AdamConfig adam;
  adam.lr = cfg.lr;
  agents.store().zero_grad();
  res.checkpoints.emplace_back(0, agents.store().save_checkpoint(config_digest));
  int pending = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    const double eps = dqn_epsilon(cfg, ep, episodes);
    DqnController ctl(agents, eps, seed);
    const std::uint64_t ep_seed = derive_seed(seed, "episode", {static_cast<std::uint64_t>(ep)});
    const EpisodeLog log = run_controller_episode(graph, ctl, sim, ep_seed);
    for (AgentId a = 0; a < log.agents; ++a) {
      const auto rewards = log.window_rewards(a);
      const auto acts = log.actions(a);
      const auto& ws = ctl.windows(a);
      for (std::size_t k = 0; k < rewards.size(); ++k) {
        Transition t;
        t.agent = a;
        t.obs = ws[k];
        t.action = acts[k];
        t.reward = rewards[k] * cfg.reward_scale;
        t.done = k + 1 == rewards.size();
        t.next = t.done ? ctl.tail(a) : ws[k + 1];
        replay.push(std::move(t));
        ++pending;
      }
    }
    while (pending >= cfg.train_every) {
      pending -= cfg.train_every;
      if (replay.size() < static_cast<std::size_t>(cfg.batch)) continue;
      const auto batch = replay.sample(static_cast<std::size_t>(cfg.batch), rng);
      agents.td_update_gradients(batch, target);
      diff::adam_update(agents.store(), adam);
      ++res.updates;
      if (res.updates % cfg.target_sync == 0) target = agents;
    }
    const auto rewards = log.agent_rewards();
    MetricsRow row;
    row.episode = ep;
    row.seed = seed;
    row.mean_reward = mean_of(rewards);
    double var = 0.0;
    for (double x : rewards) var += (x - row.mean_reward) * (x - row.mean_reward);
    row.std_over_agents = std::sqrt(var / static_cast<double>(rewards.size()));
    row.tau = eps;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.metrics.push_back(row);
    if (on_episode) on_episode(row);
    if ((ep + 1) % checkpoint_every == 0 || ep + 1 == episodes) {
      res.checkpoints.emplace_back(ep + 1, agents.store().save_checkpoint(config_digest));
    }
  }
  return res;
}

void fixed_protocol_wrapper(PolicySet& policies) { policies.set_mode(MessageMode::FixedProtocol); }
void blank_message_wrapper(PolicySet& policies) { policies.set_mode(MessageMode::Blank); }
void blind_wrapper(PolicySet& policies, std::span<const AgentId> blind) { policies.set_blind(blind); }

}  // namespace netmarl
