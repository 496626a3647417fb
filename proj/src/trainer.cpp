#include "netmarl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "netmarl/error.hpp"

namespace netmarl {

using diff::Tape;
using diff::Var;

void TrainConfig::validate() const {
  if (episodes < 0) throw ConfigError("train.episodes must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must be in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (bptt_window < kWindow || bptt_window % kWindow != 0) {
    throw ConfigError("train.bptt_window must be a positive multiple of 5");
  }
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (robust_variants < 1) throw ConfigError("train.robust_variants must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw ConfigError("train.baseline_decay must be in [0, 1)");
  gumbel.validate();
}

namespace {

constexpr int kTail = kWindow - 1;

void fill_record(TickRecord& rec, int tick, AgentId agent, const ObservationGrid& obs) {
  rec.tick = tick;
  rec.agent = agent;
  rec.occupancy = obs.occupancy_counts();
}

struct Snapshot {
  std::vector<std::vector<double>> values;  // 4 per agent: enc.h, enc.c, msg.h, msg.c
};

Snapshot snapshot(const Tape& tape, const std::vector<AgentRuntime>& rts) {
  Snapshot s;
  for (const auto& rt : rts) {
    for (Var v : {rt.enc.h, rt.enc.c, rt.msg.h, rt.msg.c}) {
      auto x = tape.value(v);
      s.values.emplace_back(x.begin(), x.end());
    }
  }
  return s;
}

void restore(Tape& tape, const Snapshot& s, std::vector<AgentRuntime>& rts) {
  std::size_t k = 0;
  for (auto& rt : rts) {
    rt.enc.h = tape.constant(s.values[k++]);
    rt.enc.c = tape.constant(s.values[k++]);
    rt.msg.h = tape.constant(s.values[k++]);
    rt.msg.c = tape.constant(s.values[k++]);
  }
}

void step_and_record(TrafficState& state, std::vector<int>& phases, const SimConfig& sim, Rng& rng,
                     EpisodeLog& log, int tick) {
  StepResult res = step(state, phases, sim, rng);
  state = std::move(res.state);
  for (AgentId a = 0; a < log.agents; ++a) {
    TickRecord& rec = log.at(tick, a);
    rec.components = std::move(res.components[static_cast<std::size_t>(a)]);
    rec.reward = reward(rec.components);
  }
}

EpisodeLog empty_log(const AgentGraph& graph, const SimConfig& sim, std::uint64_t seed,
                     const std::string& method, int bits) {
  EpisodeLog log;
  log.method = method;
  log.seed = seed;
  log.agents = graph.agent_count();
  log.episode_len = sim.episode_len;
  log.tail = kTail;
  log.msg_bits = bits;
  log.blocked = blocked_label(graph);
  log.records.resize(static_cast<std::size_t>(log.total_ticks()) * static_cast<std::size_t>(log.agents));
  return log;
}

}  // namespace

Rollout rollout(Tape& tape, const AgentGraph& graph, const PolicySet& policies,
                const SimConfig& sim, const RolloutOptions& opt, std::uint64_t seed) {
  sim.validate();
  const int n = graph.agent_count();
  if (policies.agent_count() != n) throw UnknownAgent("policy count differs from agent count");
  const PolicyConfig& pc = policies.config();
  if (opt.train && (opt.bptt_window < kWindow || opt.bptt_window % kWindow != 0)) {
    throw ConfigError("bptt_window must be a positive multiple of 5");
  }

  Rollout out;
  std::string method = message_mode_name(pc.mode);
  if (!policies.blind_agents().empty()) method += "+blind";
  out.log = empty_log(graph, sim, seed, method, pc.msg_bits);
  out.log_probs.assign(static_cast<std::size_t>(n), {});
  EpisodeLog& log = out.log;

  auto map = std::make_shared<const LaneMap>(graph);
  TrafficState state = init_state(map, derive_seed(seed, "spawn"));
  Rng sim_rng(derive_seed(seed, "sim"));
  std::vector<int> phases(static_cast<std::size_t>(n), 0);
  MessageBus bus(graph, pc.msg_bits);
  if (!opt.train) tape.clear();
  std::vector<AgentRuntime> rts;
  for (int i = 0; i < n; ++i) rts.push_back(initial_runtime(tape, policies));

  CommOptions comm;
  comm.mode = pc.mode;
  comm.gumbel = opt.gumbel;
  comm.greedy = opt.greedy;
  std::vector<RewardComponents> own;
  std::vector<ObservationGrid> obs(static_cast<std::size_t>(n));

  for (int t = 0; t < sim.episode_len; ++t) {
    bus.begin_tick(t);
    if (!opt.train) {
      Snapshot s = snapshot(tape, rts);
      tape.clear();
      restore(tape, s, rts);
      bus.detach(tape);
    } else if (t > 0 && t % opt.bptt_window == 0) {
      for (auto& rt : rts) rt = detach_runtime(tape, rt);
      bus.detach(tape);
    }
    for (AgentId i = 0; i < n; ++i) obs[static_cast<std::size_t>(i)] = observe(state, i, sim);
    if (pc.mode == MessageMode::FixedProtocol) {
      own.clear();
      for (AgentId i = 0; i < n; ++i) own.push_back(measure(state, i, sim));
    }
    for (AgentId i = 0; i < n; ++i) {
      const auto& p = policies.policy(i);
      comm.own_components = own.empty() ? nullptr : &own[static_cast<std::size_t>(i)];
      Rng rng = agent_rng(seed, i, t);
      TickOutput o = agent_tick(tape, p, graph, bus, obs[static_cast<std::size_t>(i)], t,
                                rts[static_cast<std::size_t>(i)], comm, opt.greedy, rng);
      TickRecord& rec = log.at(t, i);
      fill_record(rec, t, i, obs[static_cast<std::size_t>(i)]);
      rec.word = static_cast<std::int64_t>(bits_to_word(o.comm.bits));
      for (std::size_t k = 0; k < o.senders.size(); ++k) {
        rec.inbox.push_back({o.senders[k],
                             static_cast<std::int64_t>(bits_to_word(bus.previous_bits(o.senders[k]))),
                             o.comm.alpha[k]});
      }
      if (o.action) {
        phases[static_cast<std::size_t>(i)] = o.action->action;
        rec.action = o.action->action;
        rec.log_prob = tape.value(o.action->log_prob)[0];
        if (opt.train) out.log_probs[static_cast<std::size_t>(i)].push_back(o.action->log_prob);
      }
    }
    step_and_record(state, phases, sim, sim_rng, log, t);
  }
  for (int t = sim.episode_len; t < log.total_ticks(); ++t) {
    for (AgentId i = 0; i < n; ++i) fill_record(log.at(t, i), t, i, observe(state, i, sim));
    step_and_record(state, phases, sim, sim_rng, log, t);
  }
  if (!opt.train) tape.clear();
  return out;
}

EpisodeLog run_episode(const AgentGraph& graph, const PolicySet& policies, const SimConfig& sim,
                       const TrainConfig& train, std::uint64_t seed) {
  PolicySet scratch = policies;
  Tape tape(&scratch.store());
  RolloutOptions opt;
  opt.gumbel = train.gumbel;
  opt.bptt_window = train.bptt_window;
  return rollout(tape, graph, scratch, sim, opt, seed).log;
}

std::vector<std::vector<double>> advantages(const EpisodeLog& log, double gamma) {
  std::vector<std::vector<double>> out;
  for (AgentId a = 0; a < log.agents; ++a) {
    const auto w = log.window_rewards(a);
    const double b = mean_of(w);
    auto g = discounted_returns(w, gamma);
    for (double& x : g) x -= b;
    out.push_back(std::move(g));
  }
  return out;
}

const char* baseline_name(BaselineKind b) {
  return b == BaselineKind::WindowMean ? "window_mean" : "return_ema";
}

BaselineKind parse_baseline(const std::string& s) {
  if (s == "window_mean") return BaselineKind::WindowMean;
  if (s == "return_ema") return BaselineKind::ReturnEma;
  throw ConfigError("unknown baseline '" + s + "'");
}

std::vector<std::vector<double>> ReturnBaseline::advantages(const EpisodeLog& log, double gamma) {
  std::vector<std::vector<double>> out;
  if (mean_.size() != static_cast<std::size_t>(log.agents)) mean_.assign(static_cast<std::size_t>(log.agents), {});
  for (AgentId a = 0; a < log.agents; ++a) {
    auto g = log.returns(a, gamma);
    auto& m = mean_[static_cast<std::size_t>(a)];
    std::vector<double> adv(g.size(), 0.0);
    if (m.size() == g.size()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        adv[k] = g[k] - m[k];
        m[k] = decay_ * m[k] + (1.0 - decay_) * g[k];
      }
    } else {
      m = g;  // first episode: no reference yet, zero advantage
    }
    out.push_back(std::move(adv));
  }
  return out;
}

Var reinforce_loss(Tape& tape, const Rollout& r, double gamma) {
  return reinforce_loss(tape, r, advantages(r.log, gamma));
}

Var reinforce_loss(Tape& tape, const Rollout& r, const std::vector<std::vector<double>>& adv) {
  if (r.log_probs.size() != adv.size()) throw IncompleteLog("log-probabilities missing for some agents");
  std::vector<Var> terms;
  std::vector<double> weights;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (r.log_probs[i].size() != adv[i].size()) {
      throw IncompleteLog("agent " + std::to_string(i) + " has " + std::to_string(r.log_probs[i].size()) +
                          " log-probabilities for " + std::to_string(adv[i].size()) + " windows");
    }
    for (std::size_t k = 0; k < adv[i].size(); ++k) {
      terms.push_back(r.log_probs[i][k]);
      weights.push_back(-adv[i][k]);
    }
  }
  return tape.weighted_sum(terms, weights);
}

EpisodeLog run_controller_episode(const AgentGraph& graph, Controller& controller,
                                  const SimConfig& sim, std::uint64_t seed) {
  sim.validate();
  const int n = graph.agent_count();
  EpisodeLog log = empty_log(graph, sim, seed, controller.name(), 0);
  auto map = std::make_shared<const LaneMap>(graph);
  TrafficState state = init_state(map, derive_seed(seed, "spawn"));
  Rng sim_rng(derive_seed(seed, "sim"));
  std::vector<int> phases(static_cast<std::size_t>(n), 0);
  controller.reset(state, seed);
  for (int t = 0; t < log.total_ticks(); ++t) {
    for (AgentId i = 0; i < n; ++i) {
      const ObservationGrid obs = observe(state, i, sim);
      TickRecord& rec = log.at(t, i);
      fill_record(rec, t, i, obs);
      controller.on_tick(t, i, obs);
      if (t < sim.episode_len && is_action_tick(t)) {
        const int a = controller.decide(state, i, t / kWindow, obs);
        phases[static_cast<std::size_t>(i)] = a;
        rec.action = a;
      }
    }
    step_and_record(state, phases, sim, sim_rng, log, t);
  }
  return log;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool with_wall) {
  std::string out = "episode,seed,mean_reward,std_over_agents,tau,wall_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%llu,%.10g,%.10g,%.6g,%.3f\n", r.episode,
                  static_cast<unsigned long long>(r.seed), r.mean_reward, r.std_over_agents, r.tau,
                  with_wall ? r.wall_ms : 0.0);
    out += buf;
  }
  return out;
}

int robust_variant(std::uint64_t seed, int episode, int variants) {
  Rng rng(derive_seed(seed, "variant", {static_cast<std::uint64_t>(episode)}));
  return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(variants)));
}

namespace {

TrainResult train_impl(const std::vector<AgentGraph>& graphs, bool robust, PolicySet& policies,
                       const TrainConfig& cfg, const SimConfig& sim, std::uint64_t seed,
                       std::uint64_t digest, const EpisodeCallback& cb) {
  cfg.validate();
  sim.validate();
  TrainResult res;
  if (robust) res.variant_counts.assign(graphs.size(), 0);
  auto& store = policies.store();
  store.zero_grad();
  res.checkpoints.emplace_back(0, store.save_checkpoint(digest));
  diff::AdamConfig adam;
  adam.lr = cfg.lr;
  Tape tape(&store);
  ReturnBaseline ema(cfg.baseline_decay);
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    int v = 0;
    if (robust) {
      v = robust_variant(seed, ep, static_cast<int>(graphs.size()));
      ++res.variant_counts[static_cast<std::size_t>(v)];
    }
    RolloutOptions opt;
    opt.train = true;
    opt.bptt_window = cfg.bptt_window;
    opt.gumbel = cfg.gumbel;
    opt.gumbel.tau = cfg.gumbel.tau_after(ep);
    const std::uint64_t ep_seed = derive_seed(seed, "episode", {static_cast<std::uint64_t>(ep)});
    tape.clear();
    Rollout r = rollout(tape, graphs[static_cast<std::size_t>(v)], policies, sim, opt, ep_seed);
    auto adv = cfg.baseline == BaselineKind::WindowMean ? advantages(r.log, cfg.gamma)
                                                        : ema.advantages(r.log, cfg.gamma);
    if (cfg.normalize_advantages) {
      std::vector<double> all;
      for (const auto& a : adv) all.insert(all.end(), a.begin(), a.end());
      const double sd = stddev_of(all);
      if (sd > 1e-8) {
        for (auto& a : adv) {
          for (double& x : a) x /= sd;
        }
      }
    }
    Var loss = reinforce_loss(tape, r, adv);
    tape.backward(loss);
    if (cfg.clip_norm > 0.0) {
      const double norm = store.grad_norm();
      if (norm > cfg.clip_norm) store.scale_grads(cfg.clip_norm / norm);
    }
    diff::adam_update(store, adam);
    tape.clear();

    const auto rewards = r.log.agent_rewards();
    MetricsRow row;
    row.episode = ep;
    row.seed = seed;
    row.mean_reward = mean_of(rewards);
    double var = 0.0;
    for (double x : rewards) var += (x - row.mean_reward) * (x - row.mean_reward);
    row.std_over_agents = rewards.empty() ? 0.0 : std::sqrt(var / static_cast<double>(rewards.size()));
    row.tau = opt.gumbel.tau;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.metrics.push_back(row);
    if (cb) cb(row);
    if ((ep + 1) % cfg.checkpoint_every == 0 || ep + 1 == cfg.episodes) {
      res.checkpoints.emplace_back(ep + 1, store.save_checkpoint(digest));
    }
  }
  return res;
}

}  // namespace

TrainResult train(const AgentGraph& graph, PolicySet& policies, const TrainConfig& cfg,
                  const SimConfig& sim, std::uint64_t seed, std::uint64_t digest,
                  const EpisodeCallback& cb) {
  if (cfg.robust) return train_robust(graph, policies, cfg, sim, seed, digest, cb);
  return train_impl({graph}, false, policies, cfg, sim, seed, digest, cb);
}

TrainResult train_robust(const AgentGraph& graph, PolicySet& policies, const TrainConfig& cfg,
                         const SimConfig& sim, std::uint64_t seed, std::uint64_t digest,
                         const EpisodeCallback& cb) {
  cfg.validate();
  auto variants = perturbation_set(graph, cfg.robust_variants, seed);
  return train_impl(variants, true, policies, cfg, sim, seed, digest, cb);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace {

template <typename RunFn>
EvalResult evaluate_impl(const AgentGraph& graph, const EvalOptions& opt, std::uint64_t seed,
                         RunFn run) {
  if (opt.episodes <= 0) throw EmptyEvaluation("evaluation needs at least one episode");
  EvalResult res;
  for (int k = 0; k < opt.episodes; ++k) {
    const std::uint64_t s = derive_seed(seed, "eval", {static_cast<std::uint64_t>(k)});
    const AgentGraph g = opt.perturbed ? perturb(graph, s) : graph;
    const EpisodeLog log = run(g, s);
    res.episode_rewards.push_back(log.mean_reward());
    res.episode_seeds.push_back(s);
    res.blocked.push_back(log.blocked);
  }
  res.mean = mean_of(res.episode_rewards);
  res.std = stddev_of(res.episode_rewards);
  return res;
}

}  // namespace

EvalResult evaluate(const AgentGraph& graph, const PolicySet& policies, const SimConfig& sim,
                    const EvalOptions& opt, std::uint64_t seed) {
  PolicySet scratch = policies;
  Tape tape(&scratch.store());
  RolloutOptions ro;
  ro.greedy = opt.greedy;
  ro.gumbel.tau = 1.0;
  return evaluate_impl(graph, opt, seed, [&](const AgentGraph& g, std::uint64_t s) {
    return rollout(tape, g, scratch, sim, ro, s).log;
  });
}

EvalResult evaluate(const AgentGraph& graph, Controller& controller, const SimConfig& sim,
                    const EvalOptions& opt, std::uint64_t seed) {
  return evaluate_impl(graph, opt, seed, [&](const AgentGraph& g, std::uint64_t s) {
    return run_controller_episode(g, controller, sim, s);
  });
}

EvalResult evaluate(const AgentGraph& graph, const PolicySet& policies,
                    const std::string& checkpoint, std::uint64_t config_digest,
                    const SimConfig& sim, const EvalOptions& opt, std::uint64_t seed) {
  PolicySet loaded = policies;
  loaded.store().load_checkpoint(checkpoint, config_digest);
  return evaluate(graph, loaded, sim, opt, seed);
}

}  // namespace netmarl
