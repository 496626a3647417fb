#include <algorithm>
#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "netmarl/error.hpp"
#include "netmarl/experiment.hpp"

namespace netmarl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": '" + v + "' is not an integer");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (!v.empty() && v[0] == '-') throw ConfigError(key + ": '" + v + "' must be non-negative");
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": '" + v + "' is not an integer");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": '" + v + "' is not a number");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

template <class T>
std::vector<T> to_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      out.push_back(to_u64(key, item));
    } else {
      out.push_back(static_cast<T>(to_int(key, item)));
    }
  }
  return out;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(v[k]);
  }
  return out;
}

const char* alignment_name(lang::Alignment a) {
  return a == lang::Alignment::LastTick ? "last-tick" : "all-5";
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define NM_INT(sec, name, member)                                                              \
  Field{sec, name, [](const ExperimentConfig& c) { return std::to_string(c.member); },          \
        [](ExperimentConfig& c, const std::string& v) {                                        \
          c.member = static_cast<decltype(c.member)>(to_int(sec "." name, v));                 \
        }}
#define NM_DBL(sec, name, member)                                                              \
  Field{sec, name, [](const ExperimentConfig& c) { return fmt_double(c.member); },             \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_double(sec "." name, v); }}
#define NM_BOOL(sec, name, member)                                                             \
  Field{sec, name, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(sec "." name, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"experiment", "network", [](const ExperimentConfig& c) { return c.network; },
            [](ExperimentConfig& c, const std::string& v) { c.network = v; }},
      Field{"experiment", "method", [](const ExperimentConfig& c) { return c.method; },
            [](ExperimentConfig& c, const std::string& v) { c.method = v; }},
      Field{"experiment", "blind", [](const ExperimentConfig& c) { return fmt_list(c.blind); },
            [](ExperimentConfig& c, const std::string& v) { c.blind = to_list<AgentId>("experiment.blind", v); }},
      Field{"experiment", "seeds", [](const ExperimentConfig& c) { return fmt_list(c.seeds); },
            [](ExperimentConfig& c, const std::string& v) { c.seeds = to_list<std::uint64_t>("experiment.seeds", v); }},
      Field{"experiment", "output", [](const ExperimentConfig& c) { return c.output; },
            [](ExperimentConfig& c, const std::string& v) { c.output = v; }},
      NM_BOOL("experiment", "record_wall", record_wall),
      NM_INT("experiment", "jobs", jobs),

      NM_INT("sim", "v_max", sim.v_max),
      NM_DBL("sim", "p_slow", sim.p_slow),
      NM_DBL("sim", "spawn_rate", sim.spawn_rate),
      NM_INT("sim", "brake_threshold", sim.brake_threshold),
      NM_DBL("sim", "p_straight", sim.p_straight),
      NM_DBL("sim", "p_left", sim.p_left),
      NM_DBL("sim", "p_right", sim.p_right),
      NM_INT("sim", "episode_len", sim.episode_len),
      NM_INT("sim", "wait_cap", sim.wait_cap),
      NM_INT("sim", "observe_cells", sim.observe_cells),

      NM_INT("train", "episodes", train.episodes),
      NM_DBL("train", "gamma", train.gamma),
      NM_DBL("train", "lr", train.lr),
      NM_INT("train", "bptt_window", train.bptt_window),
      NM_DBL("train", "clip_norm", train.clip_norm),
      NM_INT("train", "checkpoint_every", train.checkpoint_every),
      NM_BOOL("train", "robust", train.robust),
      NM_INT("train", "robust_variants", train.robust_variants),
      Field{"train", "baseline", [](const ExperimentConfig& c) { return std::string(baseline_name(c.train.baseline)); },
            [](ExperimentConfig& c, const std::string& v) { c.train.baseline = parse_baseline(v); }},
      NM_DBL("train", "baseline_decay", train.baseline_decay),
      NM_BOOL("train", "normalize_advantages", train.normalize_advantages),

      NM_DBL("gumbel", "tau", train.gumbel.tau),
      NM_BOOL("gumbel", "hard", train.gumbel.hard),
      NM_DBL("gumbel", "anneal", train.gumbel.anneal),
      NM_DBL("gumbel", "tau_min", train.gumbel.tau_min),

      NM_INT("policy", "hidden", policy.hidden),
      NM_INT("policy", "msg_bits", policy.msg_bits),
      NM_INT("policy", "msg_hidden", policy.msg_hidden),
      NM_BOOL("policy", "share_weights", policy.share_weights),

      NM_INT("dqn", "hidden", dqn.hidden),
      NM_DBL("dqn", "lr", dqn.lr),
      NM_DBL("dqn", "gamma", dqn.gamma),
      NM_INT("dqn", "replay_capacity", dqn.replay_capacity),
      NM_INT("dqn", "batch", dqn.batch),
      NM_INT("dqn", "train_every", dqn.train_every),
      NM_INT("dqn", "target_sync", dqn.target_sync),
      NM_DBL("dqn", "eps_start", dqn.eps_start),
      NM_DBL("dqn", "eps_end", dqn.eps_end),
      NM_DBL("dqn", "eps_fraction", dqn.eps_fraction),
      NM_DBL("dqn", "reward_scale", dqn.reward_scale),

      NM_INT("sotl", "threshold", sotl_threshold),

      NM_INT("eval", "episodes", eval_episodes),
      NM_BOOL("eval", "greedy", eval_greedy),

      NM_INT("analysis", "log_episodes", log_episodes),
      NM_INT("analysis", "k", analysis.k),
      NM_INT("analysis", "min_support", analysis.min_support),
      Field{"analysis", "alignment", [](const ExperimentConfig& c) { return std::string(alignment_name(c.analysis.alignment)); },
            [](ExperimentConfig& c, const std::string& v) { c.analysis.alignment = lang::parse_alignment(v); }},
      NM_INT("analysis", "restarts", analysis.restarts),
      Field{"analysis", "seed", [](const ExperimentConfig& c) { return std::to_string(c.analysis.seed); },
            [](ExperimentConfig& c, const std::string& v) { c.analysis.seed = to_u64("analysis.seed", v); }},
      NM_DBL("analysis", "smoothing", analysis.smoothing),
      NM_INT("analysis", "silhouette_trials", silhouette_trials),

      Field{"ablate", "blind_one", [](const ExperimentConfig& c) { return fmt_list(c.ablate_blind_one); },
            [](ExperimentConfig& c, const std::string& v) { c.ablate_blind_one = to_list<AgentId>("ablate.blind_one", v); }},
      Field{"ablate", "blind_two", [](const ExperimentConfig& c) { return fmt_list(c.ablate_blind_two); },
            [](ExperimentConfig& c, const std::string& v) { c.ablate_blind_two = to_list<AgentId>("ablate.blind_two", v); }},
  };
  return f;
}

#undef NM_INT
#undef NM_DBL
#undef NM_BOOL

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"emergent", "fixed_protocol", "blank", "fixed_time", "sotl", "dqn"};
  return m;
}

bool is_learned_method(const std::string& method) {
  return method == "emergent" || method == "fixed_protocol" || method == "blank";
}

void ExperimentConfig::validate() const {
  const auto& m = known_methods();
  if (std::find(m.begin(), m.end(), method) == m.end()) {
    throw ConfigError("experiment.method: unknown method '" + method + "'");
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (jobs < 1) throw ConfigError("experiment.jobs must be >= 1");
  if (!blind.empty() && !is_learned_method(method)) {
    throw ConfigError("experiment.blind applies to learned methods only");
  }
  if (sotl_threshold < 1) throw ConfigError("sotl.threshold must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (log_episodes < 0) throw ConfigError("analysis.log_episodes must be >= 0");
  if (analysis.k < 1) throw ConfigError("analysis.k must be >= 1");
  if (analysis.min_support < 1) throw ConfigError("analysis.min_support must be >= 1");
  if (analysis.restarts < 1) throw ConfigError("analysis.restarts must be >= 1");
  if (!(analysis.smoothing > 0.0)) throw ConfigError("analysis.smoothing must be positive");
  if (silhouette_trials < 0) throw ConfigError("analysis.silhouette_trials must be >= 0");
  sim.validate();
  train.validate();
  policy.validate();
  dqn.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[std::string(f.section) + "." + f.key] = &f;
  ExperimentConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second->set(cfg, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_text(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t config_digest(const ExperimentConfig& cfg) {
  // Scheduling and output location do not change results.
  ExperimentConfig c = cfg;
  c.jobs = 1;
  c.output.clear();
  return fnv1a(config_text(c));
}

std::string digest_hex(std::uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, digest);
  return buf;
}

}  // namespace netmarl
