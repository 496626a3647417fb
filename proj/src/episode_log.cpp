#include "netmarl/episode_log.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "netmarl/error.hpp"
#include "netmarl/policy.hpp"

namespace netmarl {

using nlohmann::json;

namespace {
constexpr const char* kSchema = "netmarl-episode";

std::size_t slot(const EpisodeLog& log, int tick, AgentId agent) {
  if (tick < 0 || tick >= log.total_ticks() || agent < 0 || agent >= log.agents) {
    throw IncompleteLog("no record for tick " + std::to_string(tick) + " agent " + std::to_string(agent));
  }
  const std::size_t i = static_cast<std::size_t>(tick) * static_cast<std::size_t>(log.agents) +
                        static_cast<std::size_t>(agent);
  if (i >= log.records.size()) throw IncompleteLog("log truncated at tick " + std::to_string(tick));
  return i;
}
}  // namespace

const TickRecord& EpisodeLog::at(int tick, AgentId agent) const { return records[slot(*this, tick, agent)]; }
TickRecord& EpisodeLog::at(int tick, AgentId agent) { return records[slot(*this, tick, agent)]; }

std::vector<double> EpisodeLog::window_rewards(AgentId agent) const {
  std::vector<double> out;
  for (int t = kWindow - 1; t < episode_len; t += kWindow) {
    double s = 0.0;
    for (int u = t; u < t + kWindow; ++u) s += at(u, agent).reward;
    out.push_back(s);
  }
  return out;
}

std::vector<int> EpisodeLog::actions(AgentId agent) const {
  std::vector<int> out;
  for (int t = kWindow - 1; t < episode_len; t += kWindow) out.push_back(at(t, agent).action);
  return out;
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

std::vector<double> EpisodeLog::returns(AgentId agent, double gamma) const {
  return discounted_returns(window_rewards(agent), gamma);
}

std::vector<double> EpisodeLog::agent_rewards() const {
  std::vector<double> out;
  for (AgentId a = 0; a < agents; ++a) {
    double s = 0.0;
    for (double r : window_rewards(a)) s += r;
    out.push_back(s);
  }
  return out;
}

double EpisodeLog::mean_reward() const {
  if (agents == 0) return 0.0;
  double s = 0.0;
  for (double r : agent_rewards()) s += r;
  return s / agents;
}

void EpisodeLog::audit() const {
  if (agents <= 0) throw IncompleteLog("log has no agents");
  if (episode_len % kWindow != 0) throw IncompleteLog("episode length is not a multiple of the window");
  if (tail != kWindow - 1) throw IncompleteLog("log lacks the reward tail of the last window");
  if (records.size() != static_cast<std::size_t>(total_ticks()) * static_cast<std::size_t>(agents)) {
    throw IncompleteLog("expected " + std::to_string(total_ticks() * agents) + " records, found " +
                        std::to_string(records.size()));
  }
  for (int t = 0; t < total_ticks(); ++t) {
    for (AgentId a = 0; a < agents; ++a) {
      const auto& r = at(t, a);
      if (r.tick != t || r.agent != a) throw IncompleteLog("records out of order");
      const bool window_end = t < episode_len && is_action_tick(t);
      if (window_end != (r.action >= 0)) {
        throw IncompleteLog("action presence wrong at tick " + std::to_string(t));
      }
      if (std::abs(r.reward - reward(r.components)) > 1e-9) {
        throw IncompleteLog("reward does not match its components at tick " + std::to_string(t));
      }
    }
  }
}

std::string EpisodeLog::to_jsonl() const {
  std::ostringstream os;
  json head = {{"schema", kSchema},
               {"version", kSchemaVersion},
               {"method", method},
               {"config_digest", config_digest},
               {"seed", seed},
               {"agents", agents},
               {"episode_len", episode_len},
               {"tail", tail},
               {"msg_bits", msg_bits},
               {"blocked", blocked},
               {"fixed_protocol_layout", "l4,w4,d4,e2"}};
  os << head.dump() << "\n";
  for (const auto& r : records) {
    json in = json::array();
    for (const auto& w : r.inbox) in.push_back({w.sender, w.word, w.weight});
    json j = {{"t", r.tick},
              {"a", r.agent},
              {"occ", r.occupancy},
              {"w", r.word},
              {"in", in},
              {"act", r.action},
              {"lp", r.log_prob},
              {"l", r.components.halted},
              {"wt", r.components.waiting_sum},
              {"d", r.components.lane_delays},
              {"e", r.components.emergency_brakes},
              {"r", r.reward}};
    os << j.dump() << "\n";
  }
  return os.str();
}

EpisodeLog EpisodeLog::from_jsonl(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  EpisodeLog log;
  try {
    if (!std::getline(is, line)) throw FormatError("empty episode log");
    json head = json::parse(line);
    static const char* keys[] = {"schema", "version", "method", "config_digest", "seed", "agents",
                                 "episode_len", "tail", "msg_bits", "blocked", "fixed_protocol_layout"};
    if (head.size() != std::size(keys)) throw FormatError("episode log header has unexpected fields");
    for (const char* k : keys) {
      if (!head.contains(k)) throw FormatError(std::string("episode log header lacks '") + k + "'");
    }
    if (head.at("schema") != kSchema || head.at("version") != kSchemaVersion) {
      throw FormatError("unsupported episode log schema");
    }
    log.method = head.at("method").get<std::string>();
    log.config_digest = head.at("config_digest").get<std::uint64_t>();
    log.seed = head.at("seed").get<std::uint64_t>();
    log.agents = head.at("agents").get<int>();
    log.episode_len = head.at("episode_len").get<int>();
    log.tail = head.at("tail").get<int>();
    log.msg_bits = head.at("msg_bits").get<int>();
    log.blocked = head.at("blocked").get<std::string>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.size() != 12) throw FormatError("episode record has unexpected fields");
      TickRecord r;
      r.tick = j.at("t").get<int>();
      r.agent = j.at("a").get<int>();
      r.occupancy = j.at("occ").get<std::array<int, kArms>>();
      r.word = j.at("w").get<std::int64_t>();
      for (const auto& w : j.at("in")) {
        r.inbox.push_back({w.at(0).get<int>(), w.at(1).get<std::int64_t>(), w.at(2).get<double>()});
      }
      r.action = j.at("act").get<int>();
      r.log_prob = j.at("lp").get<double>();
      r.components.halted = j.at("l").get<int>();
      r.components.waiting_sum = j.at("wt").get<double>();
      r.components.lane_delays = j.at("d").get<std::vector<double>>();
      r.components.emergency_brakes = j.at("e").get<int>();
      r.reward = j.at("r").get<double>();
      log.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("episode log: ") + e.what());
  }
  return log;
}

}  // namespace netmarl
