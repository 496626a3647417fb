#include "netmarl/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "netmarl/error.hpp"

namespace netmarl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCodeVersion = "0.1.0";

std::ostream& out_of(const CommandIo& io) { return io.out ? *io.out : std::cout; }
std::ostream& err_of(const CommandIo& io) { return io.err ? *io.err : std::cerr; }

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + p.string() + "'");
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string digest_line(std::uint64_t digest) { return "# config_digest " + digest_hex(digest) + "\n"; }

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string padded(int k, int width) {
  std::string s = std::to_string(k);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

EvalOptions eval_options(const ExperimentConfig& cfg, bool perturbed) {
  EvalOptions o;
  o.episodes = cfg.eval_episodes;
  o.greedy = cfg.eval_greedy;
  o.perturbed = perturbed;
  return o;
}

json substreams() {
  return json::array({"spawn", "sim", "policy-init", "gumbel", "episode", "eval", "variant",
                      "perturbation-set", "analysis"});
}

struct SeedOutcome {
  SeedRun run;
  EvalResult eval;
};

/// Trains (or runs) one seed of `method` and evaluates it.
SeedOutcome run_seed(const ExperimentConfig& cfg, const AgentGraph& graph, const std::string& method,
                     std::span<const AgentId> blind, std::uint64_t seed, std::uint64_t digest,
                     std::ostream* progress) {
  SeedOutcome o;
  o.run.seed = seed;
  json manifest;
  manifest["config_digest"] = digest_hex(digest);
  manifest["code_version"] = kCodeVersion;
  manifest["method"] = method;
  manifest["network"] = graph.name();
  manifest["seed"] = seed;
  manifest["blind"] = std::vector<AgentId>(blind.begin(), blind.end());
  manifest["substreams"] = substreams();
  const EvalOptions eopt = eval_options(cfg, false);
  auto cb = [&](const MetricsRow& r) {
    if (progress && (r.episode + 1) % 50 == 0) {
      *progress << method << " seed " << seed << " episode " << r.episode + 1 << " reward " << r.mean_reward
                << "\n";
    }
  };

  if (is_learned_method(method)) {
    PolicySet ps = make_policies(graph, cfg, method, blind, seed);
    TrainResult tr = train(graph, ps, cfg.train, cfg.sim, seed, digest, cb);
    o.run.metrics = std::move(tr.metrics);
    o.run.checkpoints = std::move(tr.checkpoints);
    for (int k = 0; k < cfg.log_episodes; ++k) {
      EpisodeLog log = run_episode(graph, ps, cfg.sim, cfg.train,
                                   derive_seed(seed, "analysis", {static_cast<std::uint64_t>(k)}));
      log.config_digest = digest;
      o.run.logs.push_back(std::move(log));
    }
    o.eval = evaluate(graph, ps, cfg.sim, eopt, seed);
    manifest["parameter_blocks"] = ps.manifest();
    if (cfg.train.robust) manifest["variant_counts"] = tr.variant_counts;
  } else if (method == "dqn") {
    DqnAgents agents(graph, cfg.dqn, derive_seed(seed, "policy-init"));
    DqnTrainResult tr = dqn_independent_train(graph, agents, cfg.train.episodes, cfg.sim, seed, digest,
                                              cfg.train.checkpoint_every, cb);
    o.run.metrics = std::move(tr.metrics);
    o.run.checkpoints = std::move(tr.checkpoints);
    manifest["dqn_updates"] = tr.updates;
    DqnController ctl(agents, 0.0, seed);
    for (int k = 0; k < cfg.log_episodes; ++k) {
      EpisodeLog log = run_controller_episode(graph, ctl, cfg.sim,
                                              derive_seed(seed, "analysis", {static_cast<std::uint64_t>(k)}));
      log.config_digest = digest;
      o.run.logs.push_back(std::move(log));
    }
    o.eval = evaluate(graph, ctl, cfg.sim, eopt, seed);
  } else {
    auto ctl = make_controller(graph, cfg);
    for (int ep = 0; ep < cfg.train.episodes; ++ep) {
      const std::uint64_t s = derive_seed(seed, "episode", {static_cast<std::uint64_t>(ep)});
      const EpisodeLog log = run_controller_episode(graph, *ctl, cfg.sim, s);
      const auto per_agent = log.agent_rewards();
      MetricsRow r;
      r.episode = ep;
      r.seed = s;
      r.mean_reward = log.mean_reward();
      r.std_over_agents = stddev_of(per_agent);
      o.run.metrics.push_back(r);
      cb(r);
    }
    for (int k = 0; k < cfg.log_episodes; ++k) {
      EpisodeLog log = run_controller_episode(graph, *ctl, cfg.sim,
                                              derive_seed(seed, "analysis", {static_cast<std::uint64_t>(k)}));
      log.config_digest = digest;
      o.run.logs.push_back(std::move(log));
    }
    o.eval = evaluate(graph, *ctl, cfg.sim, eopt, seed);
  }
  manifest["episodes"] = o.run.metrics.size();
  json ck = json::array();
  for (const auto& [ep, bytes] : o.run.checkpoints) ck.push_back("checkpoints/ep_" + padded(ep, 5) + ".ckpt");
  manifest["checkpoints"] = ck;
  manifest["logs"] = o.run.logs.size();
  manifest["eval"] = {{"episodes", o.eval.episode_rewards.size()},
                      {"seeds", o.eval.episode_seeds},
                      {"rewards", o.eval.episode_rewards},
                      {"mean", o.eval.mean},
                      {"std", o.eval.std}};
  o.run.manifest = manifest.dump(2) + "\n";
  return o;
}

void write_seed(const fs::path& dir, const SeedOutcome& o, std::uint64_t digest, bool with_wall) {
  write_file(dir / "metrics.csv", digest_line(digest) + metrics_csv(o.run.metrics, with_wall));
  for (const auto& [ep, bytes] : o.run.checkpoints) {
    write_file(dir / "checkpoints" / ("ep_" + padded(ep, 5) + ".ckpt"), bytes);
  }
  for (std::size_t k = 0; k < o.run.logs.size(); ++k) {
    write_file(dir / "logs" / ("episode_" + padded(static_cast<int>(k), 3) + ".jsonl"), o.run.logs[k].to_jsonl());
  }
  write_file(dir / "manifest.json", o.run.manifest);
}

/// Runs `fn(k)` for k in [0, n) with at most `jobs` in flight; results keep
/// index order so outputs do not depend on scheduling.
template <class F>
auto parallel_map(int n, int jobs, F fn) {
  using R = decltype(fn(0));
  std::vector<R> out;
  out.reserve(static_cast<std::size_t>(n));
  if (jobs <= 1) {
    for (int k = 0; k < n; ++k) out.push_back(fn(k));
    return out;
  }
  std::vector<std::future<R>> pending;
  for (int k = 0; k < n; ++k) {
    pending.push_back(std::async(std::launch::async, fn, k));
    if (static_cast<int>(pending.size()) == jobs || k == n - 1) {
      for (auto& f : pending) out.push_back(f.get());
      pending.clear();
    }
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::vector<int> default_partition(const AgentGraph& graph) {
  if (graph.name() == build_network2().name() && graph.agent_count() == static_cast<int>(network2_communities().size())) {
    return network2_communities();
  }
  return {};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  if (dynamic_cast<const CheckpointMismatch*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const IoError*>(&e)) {
    return kExitArtifact;
  }
  return kExitRuntime;
}

fs::path output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("NETMARL_OUT"); env && *env) return fs::path(env);
  return fs::path(cfg.output);
}

AgentGraph resolve_network(const std::string& network) {
  if (network == "net1") return build_network1();
  if (network == "net2") return build_network2();
  if (!fs::exists(network)) throw ConfigError("experiment.network: no such network or file '" + network + "'");
  try {
    return AgentGraph::parse(read_file(network));
  } catch (const InvalidGraph& e) {
    throw ConfigError(std::string("experiment.network: ") + e.what());
  }
}

PolicySet make_policies(const AgentGraph& graph, const ExperimentConfig& cfg, const std::string& method,
                        std::span<const AgentId> blind, std::uint64_t seed) {
  PolicyConfig pc = cfg.policy;
  pc.mode = parse_message_mode(method);
  PolicySet ps(graph, pc, seed);
  if (!blind.empty()) blind_wrapper(ps, blind);
  return ps;
}

std::unique_ptr<Controller> make_controller(const AgentGraph& graph, const ExperimentConfig& cfg) {
  if (cfg.method == "fixed_time") return std::make_unique<FixedTimeController>(graph);
  if (cfg.method == "sotl") return std::make_unique<SotlController>(cfg.sotl_threshold);
  return nullptr;
}

AgentGraph graph_for_log(const AgentGraph& base, const EpisodeLog& log) {
  AgentGraph g = base;
  std::stringstream ss(log.blocked);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const char last = item.back();
    const bool forward = last == '+', reverse = last == '-';
    if (forward || reverse) item.pop_back();
    int road = 0;
    try {
      road = std::stoi(item);
    } catch (const std::exception&) {
      throw FormatError("bad blocked label '" + log.blocked + "'");
    }
    g = forward || reverse ? g.with_blocked(road, reverse) : g.with_blocked(road);
  }
  return g;
}

std::vector<double> replay_episode(const AgentGraph& graph, const SimConfig& sim, const EpisodeLog& log,
                                   const std::function<void(int, const TrafficState&)>& on_tick) {
  if (log.agents != graph.agent_count()) throw FormatError("log agent count differs from the network");
  SimConfig s = sim;
  s.episode_len = log.episode_len;
  auto map = std::make_shared<const LaneMap>(graph);
  TrafficState state = init_state(map, derive_seed(log.seed, "spawn"));
  Rng rng(derive_seed(log.seed, "sim"));
  std::vector<int> phases(static_cast<std::size_t>(log.agents), 0);
  std::vector<double> series;
  for (int t = 0; t < log.total_ticks(); ++t) {
    for (AgentId a = 0; a < log.agents; ++a) {
      const int act = log.at(t, a).action;
      if (act >= 0) phases[static_cast<std::size_t>(a)] = act;
    }
    StepResult res = step(state, phases, s, rng);
    state = std::move(res.state);
    double sum = 0.0;
    for (const auto& c : res.components) sum += reward(c);
    series.push_back(sum / log.agents);
    if (on_tick) on_tick(t, state);
  }
  return series;
}

int cmd_train(const ExperimentConfig& cfg, const CommandIo& io) {
  cfg.validate();
  const AgentGraph graph = resolve_network(cfg.network);
  const std::uint64_t digest = config_digest(cfg);
  const fs::path dir = output_dir(cfg);
  fs::create_directories(dir);
  write_file(dir / "config.txt", config_text(cfg));
  std::ostream* progress = cfg.jobs == 1 ? &err_of(io) : nullptr;
  const auto outcomes = parallel_map(static_cast<int>(cfg.seeds.size()), cfg.jobs, [&](int k) {
    return run_seed(cfg, graph, cfg.method, cfg.blind, cfg.seeds[static_cast<std::size_t>(k)], digest, progress);
  });
  std::string summary = digest_line(digest) + "seed,eval_mean,eval_std,episodes\n";
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    write_seed(dir / seed_dir(cfg.seeds[k]), outcomes[k], digest, cfg.record_wall);
    summary += std::to_string(cfg.seeds[k]) + "," + fmt(outcomes[k].eval.mean) + "," + fmt(outcomes[k].eval.std) +
               "," + std::to_string(outcomes[k].eval.episode_rewards.size()) + "\n";
    out_of(io) << cfg.method << " seed " << cfg.seeds[k] << ": eval reward " << fmt(outcomes[k].eval.mean) << " +- "
               << fmt(outcomes[k].eval.std) << "\n";
  }
  write_file(dir / "summary.csv", summary);
  out_of(io) << "config digest " << digest_hex(digest) << ", outputs in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, bool perturbed, const CommandIo& io) {
  cfg.validate();
  const AgentGraph graph = resolve_network(cfg.network);
  const std::uint64_t digest = config_digest(cfg);
  const EvalOptions opt = eval_options(cfg, perturbed);
  std::string bytes;
  const bool needs_checkpoint = is_learned_method(cfg.method) || cfg.method == "dqn";
  if (needs_checkpoint) {
    if (checkpoint.empty() || !fs::exists(checkpoint)) {
      err_of(io) << "error: checkpoint '" << checkpoint.string() << "' not found\n";
      return kExitArtifact;
    }
    bytes = read_file(checkpoint);
  }
  std::string csv = digest_line(digest) + "seed,episode,episode_seed,reward,blocked\n";
  std::vector<double> seed_means;
  for (std::uint64_t seed : cfg.seeds) {
    EvalResult r;
    if (is_learned_method(cfg.method)) {
      const PolicySet ps = make_policies(graph, cfg, cfg.method, cfg.blind, seed);
      r = evaluate(graph, ps, bytes, digest, cfg.sim, opt, seed);
    } else if (cfg.method == "dqn") {
      DqnAgents agents(graph, cfg.dqn, derive_seed(seed, "policy-init"));
      agents.store().load_checkpoint(bytes, digest);
      DqnController ctl(agents, 0.0, seed);
      r = evaluate(graph, ctl, cfg.sim, opt, seed);
    } else {
      auto ctl = make_controller(graph, cfg);
      r = evaluate(graph, *ctl, cfg.sim, opt, seed);
    }
    for (std::size_t k = 0; k < r.episode_rewards.size(); ++k) {
      csv += std::to_string(seed) + "," + std::to_string(k) + "," + std::to_string(r.episode_seeds[k]) + "," +
             fmt(r.episode_rewards[k]) + "," + (perturbed ? r.blocked[k] : std::string()) + "\n";
    }
    seed_means.push_back(r.mean);
    out_of(io) << "seed " << seed << ": " << fmt(r.mean) << " +- " << fmt(r.std) << " over " << r.episode_rewards.size()
               << " episodes\n";
  }
  const double m = mean_of(seed_means), s = stddev_of(seed_means);
  out_of(io) << cfg.method << (perturbed ? " perturbed" : "") << ": mean reward " << fmt(m) << " +- " << fmt(s)
             << " across " << seed_means.size() << " seeds\n";
  const fs::path dir = output_dir(cfg);
  write_file(dir / (perturbed ? "eval_perturbed.csv" : "eval.csv"), csv);
  return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg, const CommandIo& io) {
  cfg.validate();
  const AgentGraph graph = resolve_network(cfg.network);
  const std::uint64_t digest = config_digest(cfg);
  struct Condition {
    std::string name;
    std::string method;
    std::vector<AgentId> blind;
  };
  const std::vector<Condition> conds = {{"full", "emergent", {}},
                                        {"blank", "blank", {}},
                                        {"blind_1", "emergent", cfg.ablate_blind_one},
                                        {"blind_2", "emergent", cfg.ablate_blind_two}};
  const fs::path dir = output_dir(cfg);
  fs::create_directories(dir);
  write_file(dir / "config.txt", config_text(cfg));
  std::string table = digest_line(digest) + "condition,blind_agents,mean,std,n_seeds\n";
  std::string per_seed = digest_line(digest) + "condition,seed,mean,std\n";
  json manifest;
  manifest["config_digest"] = digest_hex(digest);
  manifest["code_version"] = kCodeVersion;
  manifest["seeds"] = cfg.seeds;
  std::ostream* progress = cfg.jobs == 1 ? &err_of(io) : nullptr;
  out_of(io) << "condition   blind  mean         std        seeds\n";
  for (const auto& c : conds) {
    const auto outcomes = parallel_map(static_cast<int>(cfg.seeds.size()), cfg.jobs, [&](int k) {
      return run_seed(cfg, graph, c.method, c.blind, cfg.seeds[static_cast<std::size_t>(k)], digest, progress);
    });
    std::vector<double> means;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
      means.push_back(outcomes[k].eval.mean);
      per_seed += c.name + "," + std::to_string(cfg.seeds[k]) + "," + fmt(outcomes[k].eval.mean) + "," +
                  fmt(outcomes[k].eval.std) + "\n";
      write_seed(dir / c.name / seed_dir(cfg.seeds[k]), outcomes[k], digest, cfg.record_wall);
    }
    const double m = mean_of(means), s = stddev_of(means);
    table += c.name + "," + std::to_string(c.blind.size()) + "," + fmt(m) + "," + fmt(s) + "," +
             std::to_string(means.size()) + "\n";
    manifest["conditions"][c.name] = {{"method", c.method}, {"blind", c.blind}, {"seeds", cfg.seeds}};
    char line[160];
    std::snprintf(line, sizeof line, "%-11s %-6zu %-12.3f %-10.3f %zu\n", c.name.c_str(), c.blind.size(), m, s,
                  means.size());
    out_of(io) << line;
  }
  write_file(dir / "ablation.csv", table);
  write_file(dir / "ablation_seeds.csv", per_seed);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

int cmd_analyze(const ExperimentConfig& cfg, const fs::path& log_dir, const CommandIo& io) {
  if (!fs::is_directory(log_dir)) {
    err_of(io) << "error: '" << log_dir.string() << "' is not a directory\n";
    return kExitUsage;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(log_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    err_of(io) << "error: no episode logs under '" << log_dir.string() << "'\n";
    return kExitUsage;
  }
  std::vector<EpisodeLog> logs;
  for (const auto& f : files) logs.push_back(EpisodeLog::from_jsonl(read_file(f)));
  const std::uint64_t digest = logs.front().config_digest;
  const AgentGraph graph = resolve_network(cfg.network);
  const fs::path dir = output_dir(cfg) / "analysis";
  fs::create_directories(dir);

  const auto shuffled = lang::shuffle_words(logs, derive_seed(cfg.analysis.seed, "grounding-null"));
  std::string grounding = digest_line(digest) + "actor,sender,status,words,purity,null_purity,chance\n";
  int ok = 0, good = 0;
  for (AgentId i = 0; i < graph.agent_count(); ++i) {
    for (AgentId j : graph.neighbors(i)) {
      const int na = graph.junction(i).action_count();
      std::string row = std::to_string(i) + "," + std::to_string(j) + ",";
      try {
        const auto g = lang::grounding_score(logs, graph, i, j, cfg.analysis);
        std::string null_purity = "";
        try {
          null_purity = fmt(lang::grounding_score(shuffled, graph, i, j, cfg.analysis).purity);
        } catch (const InsufficientData&) {
          null_purity = "";
        }
        row += "ok," + std::to_string(g.words.size()) + "," + fmt(g.purity) + "," + null_purity + "," + fmt(1.0 / na);
        ++ok;
        if (g.purity >= 0.6) ++good;
      } catch (const InsufficientData& e) {
        row += "insufficient_data,0,,," + fmt(1.0 / na);
      }
      grounding += row + "\n";
    }
  }
  write_file(dir / "grounding.csv", grounding);

  std::string consistency = digest_line(digest) + "agent,status,pairs,statistic,null_statistic\n";
  for (AgentId i = 0; i < graph.agent_count(); ++i) {
    std::string row = std::to_string(i) + ",";
    try {
      const auto c = lang::neighbor_consistency(logs, graph, i, cfg.analysis);
      row += "ok," + std::to_string(c.pairs) + "," + fmt(c.statistic) + "," + fmt(c.null_statistic);
    } catch (const InsufficientData&) {
      row += "insufficient_data,0,,";
    }
    consistency += row + "\n";
  }
  write_file(dir / "consistency.csv", consistency);

  json summary;
  summary["config_digest"] = digest_hex(digest);
  summary["logs"] = logs.size();
  summary["grounding_pairs_ok"] = ok;
  summary["grounding_pairs_purity_ge_0_6"] = good;
  try {
    const lang::Matrix prof = lang::tfidf_profiles(logs);
    write_file(dir / "tfidf.txt", "# config_digest " + digest_hex(digest) + "\n" + lang::matrix_text(prof));
    const lang::Matrix pts = lang::project2d(prof);
    const auto part = default_partition(graph);
    std::string proj = digest_line(digest) + "agent,x,y,community\n";
    for (int a = 0; a < pts.rows; ++a) {
      proj += std::to_string(a) + "," + fmt(pts(a, 0)) + "," + fmt(pts(a, 1)) + "," +
              (part.empty() ? std::string() : std::to_string(part[static_cast<std::size_t>(a)])) + "\n";
    }
    write_file(dir / "projection.csv", proj);
    if (!part.empty()) {
      const double sil = lang::community_separation(prof, part);
      const auto null = lang::silhouette_null(prof, part, cfg.silhouette_trials, cfg.analysis.seed);
      summary["silhouette"] = sil;
      summary["silhouette_null_mean"] = null.mean;
      summary["silhouette_null_sd"] = null.sd;
    }
  } catch (const InsufficientData& e) {
    summary["tfidf"] = e.what();
  } catch (const DegeneratePartition& e) {
    summary["silhouette"] = e.what();
  }
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  out_of(io) << "analysed " << logs.size() << " logs: " << ok << " pairs with enough data, " << good
             << " with purity >= 0.6; bundle in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg, const fs::path& checkpoint, int frames, const CommandIo& io) {
  cfg.validate();
  const AgentGraph graph = resolve_network(cfg.network);
  const std::uint64_t digest = config_digest(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  EpisodeLog log;
  if (is_learned_method(cfg.method)) {
    PolicySet ps = make_policies(graph, cfg, cfg.method, cfg.blind, seed);
    if (!checkpoint.empty()) ps.store().load_checkpoint(read_file(checkpoint), digest);
    log = run_episode(graph, ps, cfg.sim, cfg.train, seed);
  } else if (cfg.method == "dqn") {
    DqnAgents agents(graph, cfg.dqn, derive_seed(seed, "policy-init"));
    if (!checkpoint.empty()) agents.store().load_checkpoint(read_file(checkpoint), digest);
    DqnController ctl(agents, 0.0, seed);
    log = run_controller_episode(graph, ctl, cfg.sim, seed);
  } else {
    auto ctl = make_controller(graph, cfg);
    log = run_controller_episode(graph, *ctl, cfg.sim, seed);
  }
  log.config_digest = digest;
  const int limit = frames < 0 ? cfg.sim.episode_len : frames;
  std::ostream& out = out_of(io);
  const auto series = replay_episode(graph, cfg.sim, log, [&](int t, const TrafficState& s) {
    if (t < limit) out << "tick " << t << "\n" << render(s) << "\n";
  });
  for (int t = 0; t < log.total_ticks(); ++t) {
    double sum = 0.0;
    for (AgentId a = 0; a < log.agents; ++a) sum += log.at(t, a).reward;
    if (sum / log.agents != series[static_cast<std::size_t>(t)]) {
      err_of(io) << "error: replay diverged from the log at tick " << t << "\n";
      return kExitRuntime;
    }
  }
  const fs::path dir = output_dir(cfg);
  write_file(dir / "simulate" / "episode.jsonl", log.to_jsonl());
  out << "episode reward " << fmt(log.mean_reward()) << "; log in " << (dir / "simulate").string() << "\n";
  return kExitOk;
}

int cmd_verify(const fs::path& dir, const CommandIo& io) {
  if (!fs::is_directory(dir)) {
    err_of(io) << "error: '" << dir.string() << "' is not a directory\n";
    return kExitUsage;
  }
  std::map<std::string, std::vector<std::string>> by_digest;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const std::string ext = p.extension().string();
    const std::string name = p.filename().string();
    std::string d;
    if (name == "config.txt") {
      d = digest_hex(config_digest(parse_config(read_file(p))));
    } else if (ext == ".json") {
      const json j = json::parse(read_file(p), nullptr, false);
      if (j.is_discarded() || !j.contains("config_digest")) {
        err_of(io) << "error: " << p.string() << " has no config digest\n";
        return kExitArtifact;
      }
      d = j.at("config_digest").get<std::string>();
    } else if (ext == ".csv" || ext == ".txt") {
      std::ifstream f(p);
      std::string first;
      std::getline(f, first);
      const std::string tag = "# config_digest ";
      if (first.rfind(tag, 0) != 0) {
        err_of(io) << "error: " << p.string() << " has no config digest line\n";
        return kExitArtifact;
      }
      d = first.substr(tag.size());
    } else if (ext == ".jsonl") {
      d = digest_hex(EpisodeLog::from_jsonl(read_file(p)).config_digest);
    } else if (ext == ".ckpt") {
      d = digest_hex(diff::checkpoint_digest(read_file(p)));
    } else {
      continue;
    }
    by_digest[d].push_back(fs::relative(p, dir).string());
  }
  if (by_digest.empty()) {
    err_of(io) << "error: no artifacts under '" << dir.string() << "'\n";
    return kExitUsage;
  }
  std::size_t n = 0;
  for (const auto& [d, list] : by_digest) n += list.size();
  if (by_digest.size() == 1) {
    out_of(io) << "ok: " << n << " artifacts share config digest " << by_digest.begin()->first << "\n";
    return kExitOk;
  }
  err_of(io) << "mismatch: " << by_digest.size() << " distinct config digests\n";
  for (const auto& [d, list] : by_digest) {
    err_of(io) << "  " << d << ": " << list.size() << " files, e.g. " << list.front() << "\n";
  }
  return kExitArtifact;
}

}  // namespace netmarl
