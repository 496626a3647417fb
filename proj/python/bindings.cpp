// Python bindings: graphs, the traffic simulator, episode logs, config and
// the language-analysis entry points.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "netmarl/error.hpp"
#include "netmarl/experiment.hpp"

namespace py = pybind11;
using namespace netmarl;

namespace {

/// Owns a state and its simulation stream so Python can step tick by tick.
class Simulator {
 public:
  Simulator(const AgentGraph& graph, const SimConfig& sim, std::uint64_t seed)
      : sim_(sim), state_(init_state(graph, sim, derive_seed(seed, "spawn"))), rng_(derive_seed(seed, "sim")) {
    sim_.validate();
  }

  /// Advances one tick; returns the per-agent rewards.
  std::vector<double> step(const std::vector<int>& actions) {
    StepResult r = netmarl::step(state_, actions, sim_, rng_);
    if (!conservation_audit(state_, r.state, r.spawned, r.exited)) throw Error("ConservationViolation", "vehicle count mismatch");
    state_ = std::move(r.state);
    last_ = std::move(r.components);
    std::vector<double> out;
    out.reserve(last_.size());
    for (const auto& c : last_) out.push_back(reward(c));
    return out;
  }

  std::int64_t tick() const { return state_.tick; }
  int vehicle_count() const { return state_.vehicle_count(); }
  bool invariants_hold() const { return state_.invariants_hold(sim_); }
  std::vector<int> phases() const { return state_.phases; }
  std::vector<int> lane_queues(AgentId a) const { return netmarl::lane_queues(state_, a); }
  std::string render() const { return netmarl::render(state_); }
  const std::vector<RewardComponents>& last_components() const { return last_; }

 private:
  SimConfig sim_;
  TrafficState state_;
  Rng rng_;
  std::vector<RewardComponents> last_;
};

std::vector<EpisodeLog> to_logs(const std::vector<std::string>& texts) {
  std::vector<EpisodeLog> logs;
  logs.reserve(texts.size());
  for (const auto& t : texts) logs.push_back(EpisodeLog::from_jsonl(t));
  return logs;
}

}  // namespace

PYBIND11_MODULE(netmarl, m) {
  m.doc() = "Networked traffic-signal agents with learned communication";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("derive_seed", [](std::uint64_t root, const std::string& name) { return derive_seed(root, name); });

  py::class_<AgentGraph>(m, "AgentGraph")
      .def_property_readonly("name", &AgentGraph::name)
      .def_property_readonly("agent_count", &AgentGraph::agent_count)
      .def("neighbors", &AgentGraph::neighbors)
      .def("are_neighbors", &AgentGraph::are_neighbors)
      .def_property_readonly("comm_edges", &AgentGraph::comm_edges)
      .def("action_count", [](const AgentGraph& g, AgentId a) { return g.junction(a).action_count(); })
      .def("is_connected", &AgentGraph::is_connected, py::arg("include_blocked") = false)
      .def("blocked_roads", &AgentGraph::blocked_roads)
      .def("serialize", &AgentGraph::serialize)
      .def_static("parse", &AgentGraph::parse)
      .def("__eq__", [](const AgentGraph& a, const AgentGraph& b) { return a == b; });

  m.def("build_network1", &build_network1);
  m.def("build_network2", &build_network2);
  m.def("network2_communities", &network2_communities);
  m.def("perturb", &perturb, py::arg("graph"), py::arg("seed"));
  m.def("blocked_label", &blocked_label);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("v_max", &SimConfig::v_max)
      .def_readwrite("p_slow", &SimConfig::p_slow)
      .def_readwrite("spawn_rate", &SimConfig::spawn_rate)
      .def_readwrite("episode_len", &SimConfig::episode_len)
      .def_readwrite("observe_cells", &SimConfig::observe_cells);

  py::class_<RewardComponents>(m, "RewardComponents")
      .def_readonly("halted", &RewardComponents::halted)
      .def_readonly("waiting_sum", &RewardComponents::waiting_sum)
      .def_readonly("lane_delays", &RewardComponents::lane_delays)
      .def_readonly("emergency_brakes", &RewardComponents::emergency_brakes);
  m.def("reward", &reward);

  py::class_<Simulator>(m, "Simulator")
      .def(py::init<const AgentGraph&, const SimConfig&, std::uint64_t>(), py::arg("graph"),
           py::arg("sim"), py::arg("seed"))
      .def("step", &Simulator::step)
      .def_property_readonly("tick", &Simulator::tick)
      .def_property_readonly("vehicle_count", &Simulator::vehicle_count)
      .def_property_readonly("phases", &Simulator::phases)
      .def_property_readonly("last_components", &Simulator::last_components)
      .def("invariants_hold", &Simulator::invariants_hold)
      .def("lane_queues", &Simulator::lane_queues)
      .def("render", &Simulator::render);

  py::class_<EpisodeLog>(m, "EpisodeLog")
      .def_static("from_jsonl", &EpisodeLog::from_jsonl)
      .def("to_jsonl", &EpisodeLog::to_jsonl)
      .def_readonly("method", &EpisodeLog::method)
      .def_readonly("seed", &EpisodeLog::seed)
      .def_readonly("agents", &EpisodeLog::agents)
      .def_readonly("episode_len", &EpisodeLog::episode_len)
      .def_readonly("msg_bits", &EpisodeLog::msg_bits)
      .def_readonly("blocked", &EpisodeLog::blocked)
      .def("window_rewards", &EpisodeLog::window_rewards)
      .def("actions", &EpisodeLog::actions)
      .def("mean_reward", &EpisodeLog::mean_reward);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readwrite("network", &ExperimentConfig::network)
      .def_readwrite("method", &ExperimentConfig::method)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("output", &ExperimentConfig::output)
      .def_readwrite("jobs", &ExperimentConfig::jobs)
      .def("text", [](const ExperimentConfig& c) { return config_text(c); })
      .def("digest", [](const ExperimentConfig& c) { return digest_hex(config_digest(c)); });
  m.def("parse_config", &parse_config);
  m.def("load_config", [](const std::string& path) { return load_config(path); });

  m.def(
      "train",
      [](const ExperimentConfig& cfg) {
        std::ostringstream out, err;
        const int code = cmd_train(cfg, {&out, &err});
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs the train command; returns (exit code, stdout, stderr).");

  m.def("word_id", [](const std::vector<double>& bits) { return lang::word_id(bits); });
  m.def("word_bits", &lang::word_bits);
  m.def(
      "grounding",
      [](const std::vector<std::string>& jsonl, const AgentGraph& g, AgentId i, AgentId j, bool shuffled,
         std::uint64_t seed) {
        auto logs = to_logs(jsonl);
        if (shuffled) logs = lang::shuffle_words(logs, seed);
        lang::GroundingOptions opt;
        opt.seed = seed;
        const auto r = lang::grounding_score(logs, g, i, j, opt);
        return py::make_tuple(r.purity, r.words.size());
      },
      "Returns (purity, number of qualifying words).",
      py::arg("logs"), py::arg("graph"), py::arg("actor"), py::arg("sender"), py::arg("shuffled") = false,
      py::arg("seed") = 0);
  m.def("silhouette", [](const std::vector<std::vector<double>>& rows, const std::vector<int>& part) {
    lang::Matrix mat(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
    for (int r = 0; r < mat.rows; ++r)
      for (int c = 0; c < mat.cols; ++c) mat(r, c) = rows[static_cast<std::size_t>(r)].at(static_cast<std::size_t>(c));
    return lang::silhouette(mat, part);
  });
}
