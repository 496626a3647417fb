#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "netmarl/diff/tape.hpp"
#include "netmarl/rng.hpp"

namespace netmarl::diff {

struct Dense {
  ParamId w;
  ParamId b;
  int in = 0;
  int out = 0;
};

struct LstmParams {
  ParamId wx;  // 4H x in, gate order [i, f, g, o]
  ParamId wh;  // 4H x H
  ParamId b;   // 4H
  int in = 0;
  int hidden = 0;
};

/// Registers `<prefix>.w` and `<prefix>.b` with zero values.
Dense make_dense(ParamStore& store, const std::string& prefix, int in, int out);
LstmParams make_lstm(ParamStore& store, const std::string& prefix, int in, int hidden);

/// Uniform Glorot initialisation of a weight matrix, scaled by `gain`.
void glorot_init(ParamStore& store, ParamId w, Rng& rng, double gain = 1.0);
void init_dense(ParamStore& store, const Dense& layer, Rng& rng, double gain = 1.0);
/// Glorot weights, zero biases except the forget gate, which starts at 1.
void init_lstm(ParamStore& store, const LstmParams& cell, Rng& rng);

Var dense(Tape& tape, const Dense& layer, Var x);

struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_step(Tape& tape, const LstmParams& cell, Var x, LstmState state);
LstmState lstm_zero_state(Tape& tape, int hidden);

struct GumbelConfig {
  double tau = 1.0;
  bool hard = true;
  double anneal = 0.995;  // multiplicative, per training episode
  double tau_min = 0.5;

  /// Throws ConfigError when tau is not positive.
  void validate() const;
  double tau_after(int episodes) const;
};

/// Draws 2d Gumbel variates from `rng` and samples d binary channels.
Var gumbel_sample(Tape& tape, Var logits, const GumbelConfig& cfg, Rng& rng);

struct Aggregate {
  Var q_bar;
  std::vector<double> alpha;
};

/// q = W h, alpha = softmax(q . m_j), q_bar = sum_j alpha_j m_j.
/// Throws EmptyInbox.
Aggregate attention_aggregate(Tape& tape, ParamId w, Var h, std::span<const Var> messages);

}  // namespace netmarl::diff
