#include "netmarl/diff/nn.hpp"

#include <cmath>

#include "netmarl/error.hpp"

namespace netmarl::diff {

Dense make_dense(ParamStore& store, const std::string& prefix, int in, int out) {
  Dense d;
  d.w = store.add(prefix + ".w", out, in);
  d.b = store.add(prefix + ".b", out, 1);
  d.in = in;
  d.out = out;
  return d;
}

LstmParams make_lstm(ParamStore& store, const std::string& prefix, int in, int hidden) {
  LstmParams p;
  p.wx = store.add(prefix + ".wx", 4 * hidden, in);
  p.wh = store.add(prefix + ".wh", 4 * hidden, hidden);
  p.b = store.add(prefix + ".b", 4 * hidden, 1);
  p.in = in;
  p.hidden = hidden;
  return p;
}

void glorot_init(ParamStore& store, ParamId w, Rng& rng, double gain) {
  auto& p = store.at(w);
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
  for (double& x : p.value) x = (2.0 * uniform01(rng) - 1.0) * limit;
}

void init_dense(ParamStore& store, const Dense& layer, Rng& rng, double gain) {
  glorot_init(store, layer.w, rng, gain);
  auto& b = store.at(layer.b).value;
  std::fill(b.begin(), b.end(), 0.0);
}

void init_lstm(ParamStore& store, const LstmParams& cell, Rng& rng) {
  glorot_init(store, cell.wx, rng);
  glorot_init(store, cell.wh, rng);
  auto& b = store.at(cell.b).value;
  std::fill(b.begin(), b.end(), 0.0);
  for (int i = 0; i < cell.hidden; ++i) b[static_cast<std::size_t>(cell.hidden + i)] = 1.0;
}

Var dense(Tape& tape, const Dense& layer, Var x) { return tape.affine(layer.w, layer.b, x); }

LstmState lstm_step(Tape& tape, const LstmParams& cell, Var x, LstmState state) {
  if (tape.size(x) != cell.in || tape.size(state.h) != cell.hidden ||
      tape.size(state.c) != cell.hidden) {
    throw ShapeMismatch("lstm_step: input or state size does not match the cell");
  }
  Var gates = tape.affine2(cell.wx, x, cell.wh, state.h, cell.b);
  Var hc = tape.lstm_cell(gates, state.c);
  return {tape.slice(hc, 0, cell.hidden), tape.slice(hc, cell.hidden, cell.hidden)};
}

LstmState lstm_zero_state(Tape& tape, int hidden) { return {tape.zeros(hidden), tape.zeros(hidden)}; }

void GumbelConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("gumbel tau must be positive");
  if (!(tau_min > 0.0)) throw ConfigError("gumbel tau_min must be positive");
  if (!(anneal > 0.0 && anneal <= 1.0)) throw ConfigError("gumbel anneal must be in (0, 1]");
}

double GumbelConfig::tau_after(int episodes) const {
  return std::max(tau_min, tau * std::pow(anneal, static_cast<double>(episodes)));
}

Var gumbel_sample(Tape& tape, Var logits, const GumbelConfig& cfg, Rng& rng) {
  std::vector<double> noise(static_cast<std::size_t>(tape.size(logits)));
  for (double& g : noise) g = gumbel(rng);
  return tape.gumbel_binary(logits, noise, cfg.tau, cfg.hard);
}

Aggregate attention_aggregate(Tape& tape, ParamId w, Var h, std::span<const Var> messages) {
  if (messages.empty()) throw EmptyInbox("attention over an empty inbox");
  Var q = tape.matvec(w, h);
  Var out = tape.attention(q, messages);
  auto a = tape.attention_weights(out);
  return {out, std::vector<double>(a.begin(), a.end())};
}

}  // namespace netmarl::diff
