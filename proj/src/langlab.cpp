#include "netmarl/langlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "netmarl/error.hpp"
#include "netmarl/policy.hpp"

namespace netmarl::lang {

std::vector<double> Matrix::row(int r) const {
  const auto off = static_cast<std::ptrdiff_t>(r) * cols;
  return {a.begin() + off, a.begin() + off + cols};
}

WordId word_id(std::span<const double> bits) {
  if (bits.size() > 63) throw ShapeMismatch("word longer than 63 bits");
  WordId w = 0;
  for (double b : bits) {
    if (b != 0.0 && b != 1.0) throw ShapeMismatch("message is not binary");
    w = (w << 1) | (b == 1.0 ? 1u : 0u);
  }
  return w;
}

std::vector<double> word_bits(WordId w, int d) {
  std::vector<double> out(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(d - 1 - k)] = ((w >> k) & 1u) ? 1.0 : 0.0;
  return out;
}

Alignment parse_alignment(const std::string& s) {
  if (s == "last-tick") return Alignment::LastTick;
  if (s == "all-5") return Alignment::AllWindow;
  throw ConfigError("unknown alignment '" + s + "'");
}

namespace {

PairCounts count_pairs(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                       AgentId j, Alignment alignment, int parity) {
  if (logs.empty()) throw EmptyLogs("no episode logs");
  graph.junction(i);
  graph.junction(j);
  if (!graph.are_neighbors(i, j)) {
    throw NotNeighbors("agents " + std::to_string(i) + " and " + std::to_string(j) + " are not neighbours");
  }
  const int bits = logs.front().msg_bits;
  if (bits <= 0 || bits > 20) throw InsufficientData("logs carry no analysable messages");
  PairCounts c;
  c.actor = i;
  c.sender = j;
  c.actions = graph.junction(i).action_count();
  c.words = 1 << bits;
  c.joint = Matrix(c.actions, c.words);
  c.action_totals.assign(static_cast<std::size_t>(c.actions), 0.0);
  c.word_totals.assign(static_cast<std::size_t>(c.words), 0.0);
  for (const auto& log : logs) {
    if (log.msg_bits != bits) throw FormatError("logs mix message widths");
    for (int w = 0; w < log.windows(); ++w) {
      if (parity >= 0 && w % 2 != parity) continue;
      const int t = w * kWindow + kWindow - 1;
      const int a = log.at(t, i).action;
      if (a < 0 || a >= c.actions) throw IncompleteLog("missing action at tick " + std::to_string(t));
      const int first = alignment == Alignment::LastTick ? t - 1 : t - kWindow + 1;
      const int last = alignment == Alignment::LastTick ? t - 1 : t;
      for (int u = std::max(0, first); u <= last; ++u) {
        const auto word = log.at(u, j).word;
        if (word < 0 || word >= c.words) continue;
        c.joint(a, static_cast<int>(word)) += 1.0;
        c.action_totals[static_cast<std::size_t>(a)] += 1.0;
        c.word_totals[static_cast<std::size_t>(word)] += 1.0;
        c.total += 1.0;
      }
    }
  }
  return c;
}

}  // namespace

PairCounts pair_counts(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                       AgentId j, Alignment alignment) {
  return count_pairs(logs, graph, i, j, alignment, -1);
}

PairCounts pair_counts_parity(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                              AgentId j, Alignment alignment, int parity) {
  return count_pairs(logs, graph, i, j, alignment, parity);
}

PmiMatrix pmi(const PairCounts& c, double e) {
  if (!(c.total > 0.0)) throw InsufficientData("no co-occurrences");
  if (!(e > 0.0)) throw ConfigError("pmi smoothing must be positive");
  PmiMatrix out;
  out.smoothing = e;
  out.p = Matrix(c.actions, c.words);
  const double na = c.actions, nw = c.words;
  const double big = c.total + e * na * nw;
  for (int a = 0; a < c.actions; ++a) {
    const double ra = c.action_totals[static_cast<std::size_t>(a)] + e * nw;
    for (int w = 0; w < c.words; ++w) {
      const double cw = c.word_totals[static_cast<std::size_t>(w)] + e * na;
      out.p(a, w) = std::log((c.joint(a, w) + e) * big / (ra * cw));
    }
  }
  return out;
}

namespace {

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
  }
  return t;
}

/// Completes zero columns of `q` (rows x r) to an orthonormal set.
void complete_basis(Matrix& q, const std::vector<bool>& valid) {
  const int n = q.rows;
  for (int c = 0; c < q.cols; ++c) {
    if (valid[static_cast<std::size_t>(c)]) continue;
    for (int e = 0; e < n; ++e) {
      std::vector<double> v(static_cast<std::size_t>(n), 0.0);
      v[static_cast<std::size_t>(e)] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (int o = 0; o < q.cols; ++o) {
          if (o == c || (!valid[static_cast<std::size_t>(o)] && o > c)) continue;
          if (!valid[static_cast<std::size_t>(o)] && o < c) {
            // completed earlier in this loop
          }
          double d = 0.0;
          for (int r = 0; r < n; ++r) d += q(r, o) * v[static_cast<std::size_t>(r)];
          for (int r = 0; r < n; ++r) v[static_cast<std::size_t>(r)] -= d * q(r, o);
        }
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (int r = 0; r < n; ++r) q(r, c) = v[static_cast<std::size_t>(r)] / norm;
        break;
      }
    }
  }
}

}  // namespace

Svd svd(const Matrix& input, int max_sweeps) {
  const bool tall = input.rows >= input.cols;
  Matrix w = tall ? input : transpose(input);  // m x n with m >= n
  const int m = w.rows, n = w.cols;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v(i, i) = 1.0;
  // Rotations stop at round-off: relative tolerance m * eps, and columns whose
  // energy is negligible against the whole matrix are left alone.
  const double tol = std::max(m, 1) * std::numeric_limits<double>::epsilon();
  double energy = 0.0;
  for (double x : w.a) energy += x * x;
  const double negligible = energy * 1e-30;
  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int r = 0; r < m; ++r) {
          alpha += w(r, p) * w(r, p);
          beta += w(r, q) * w(r, q);
          gamma += w(r, p) * w(r, q);
        }
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int r = 0; r < m; ++r) {
          const double x = w(r, p), y = w(r, q);
          w(r, p) = c * x - s * y;
          w(r, q) = s * x + c * y;
        }
        for (int r = 0; r < n; ++r) {
          const double x = v(r, p), y = v(r, q);
          v(r, p) = c * x - s * y;
          v(r, q) = s * x + c * y;
        }
      }
    }
  }
  if (!converged) throw ConvergenceFailure("jacobi svd did not converge in " + std::to_string(max_sweeps) + " sweeps");

  std::vector<double> sigma(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int r = 0; r < m; ++r) s += w(r, c) * w(r, c);
    sigma[static_cast<std::size_t>(c)] = std::sqrt(s);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
  });
  const double smax = n > 0 ? sigma[static_cast<std::size_t>(order[0])] : 0.0;
  const double cutoff = std::max(smax, 1.0) * 1e-12;

  Matrix left(m, n), right(n, n);
  std::vector<double> s(static_cast<std::size_t>(n));
  std::vector<bool> valid(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int c = order[static_cast<std::size_t>(k)];
    const double sg = sigma[static_cast<std::size_t>(c)];
    const bool ok = sg > cutoff;
    s[static_cast<std::size_t>(k)] = ok ? sg : 0.0;
    valid[static_cast<std::size_t>(k)] = ok;
    for (int r = 0; r < m; ++r) left(r, k) = ok ? w(r, c) / sg : 0.0;
    for (int r = 0; r < n; ++r) right(r, k) = v(r, c);
  }
  complete_basis(left, valid);

  Svd out;
  out.s = s;
  if (tall) {
    out.u = std::move(left);
    out.v = std::move(right);
  } else {
    out.u = std::move(right);
    out.v = std::move(left);
  }
  for (int k = 0; k < n; ++k) {
    int best = 0;
    for (int r = 1; r < out.v.rows; ++r) {
      if (std::abs(out.v(r, k)) > std::abs(out.v(best, k)) + 1e-12) best = r;
    }
    if (out.v(best, k) < 0.0) {
      for (int r = 0; r < out.v.rows; ++r) out.v(r, k) = -out.v(r, k);
      for (int r = 0; r < out.u.rows; ++r) out.u(r, k) = -out.u(r, k);
    }
  }
  return out;
}

EmbeddingSet svd_embed(const PmiMatrix& p, int k) {
  const int r = std::min(p.p.rows, p.p.cols);
  if (k < 1 || k > r) throw ShapeMismatch("svd_embed: k=" + std::to_string(k) + " exceeds " + std::to_string(r));
  Svd d = svd(p.p);
  EmbeddingSet e;
  e.k = k;
  e.u = Matrix(p.p.rows, k);
  e.v = Matrix(p.p.cols, k);
  e.s.assign(d.s.begin(), d.s.begin() + k);
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < p.p.rows; ++i) e.u(i, c) = d.u(i, c);
    for (int i = 0; i < p.p.cols; ++i) e.v(i, c) = d.v(i, c);
  }
  return e;
}

namespace {

double sqdist(const Matrix& pts, int i, const Matrix& ctr, int c) {
  double s = 0.0;
  for (int d = 0; d < pts.cols; ++d) {
    const double x = pts(i, d) - ctr(c, d);
    s += x * x;
  }
  return s;
}

KMeansResult lloyd(const Matrix& pts, int k, Rng& rng) {
  const int n = pts.rows;
  KMeansResult res;
  res.centers = Matrix(k, pts.cols);
  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  int first = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
  for (int d = 0; d < pts.cols; ++d) res.centers(0, d) = pts(first, d);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sqdist(pts, i, res.centers, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    int pick = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (int i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    }
    for (int d = 0; d < pts.cols; ++d) res.centers(c, d) = pts(pick, d);
  }
  res.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sqdist(pts, i, res.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double dd = sqdist(pts, i, res.centers, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (res.labels[static_cast<std::size_t>(i)] != best) {
        res.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Matrix sums(k, pts.cols);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.labels[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (int d = 0; d < pts.cols; ++d) sums(c, d) += pts(i, d);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // Re-seed an empty cluster at the point farthest from its centre.
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          const double dd = sqdist(pts, i, res.centers, res.labels[static_cast<std::size_t>(i)]);
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        for (int d = 0; d < pts.cols; ++d) res.centers(c, d) = pts(far, d);
        changed = true;
        continue;
      }
      for (int d = 0; d < pts.cols; ++d) res.centers(c, d) = sums(c, d) / counts[static_cast<std::size_t>(c)];
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) res.inertia += sqdist(pts, i, res.centers, res.labels[static_cast<std::size_t>(i)]);
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed) {
  if (k < 1 || k > points.rows) throw InsufficientData("k-means needs at least k points");
  Rng rng(derive_seed(seed, "kmeans"));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult cur = lloyd(points, k, rng);
    if (cur.inertia < best.inertia - 1e-12) best = std::move(cur);
  }
  return best;
}

GroundingResult grounding_score(std::span<const EpisodeLog> logs, const AgentGraph& graph,
                                AgentId i, AgentId j, const GroundingOptions& opt) {
  const PairCounts fit = pair_counts_parity(logs, graph, i, j, opt.alignment, 0);
  const PairCounts held = pair_counts_parity(logs, graph, i, j, opt.alignment, 1);
  const int na = fit.actions;
  GroundingResult res;
  for (int w = 0; w < fit.words; ++w) {
    if (fit.word_totals[static_cast<std::size_t>(w)] >= opt.min_support &&
        held.word_totals[static_cast<std::size_t>(w)] >= opt.min_support) {
      res.words.push_back(static_cast<WordId>(w));
    }
  }
  if (static_cast<int>(res.words.size()) < na) {
    throw InsufficientData("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") has " +
                           std::to_string(res.words.size()) + " qualifying words, needs " + std::to_string(na));
  }
  const EmbeddingSet emb = svd_embed(pmi(fit, opt.smoothing), std::min(opt.k, na));
  const PmiMatrix label_pmi = pmi(held, opt.smoothing);
  Matrix pts(static_cast<int>(res.words.size()), emb.k);
  for (std::size_t n = 0; n < res.words.size(); ++n) {
    const int w = static_cast<int>(res.words[n]);
    for (int d = 0; d < emb.k; ++d) pts(static_cast<int>(n), d) = emb.v(w, d);
    int best = 0;
    for (int a = 1; a < na; ++a) {
      if (label_pmi.p(a, w) > label_pmi.p(best, w)) best = a;
    }
    res.labels.push_back(best);
  }
  const KMeansResult km = kmeans(pts, na, opt.restarts, derive_seed(opt.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}));
  res.clusters = km.labels;
  Matrix table(na, na);
  for (std::size_t n = 0; n < res.words.size(); ++n) table(res.clusters[n], res.labels[n]) += 1.0;
  std::vector<int> perm(static_cast<std::size_t>(na));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double s = 0.0;
    for (int c = 0; c < na; ++c) s += table(c, perm[static_cast<std::size_t>(c)]);
    if (s > best) {
      best = s;
      res.cluster_action = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  res.purity = best / static_cast<double>(res.words.size());
  return res;
}

std::vector<EpisodeLog> shuffle_words(std::span<const EpisodeLog> logs, std::uint64_t seed) {
  std::vector<EpisodeLog> out(logs.begin(), logs.end());
  for (std::size_t l = 0; l < out.size(); ++l) {
    auto& log = out[l];
    for (AgentId a = 0; a < log.agents; ++a) {
      Rng rng(derive_seed(seed, "shuffle", {l, static_cast<std::uint64_t>(a)}));
      std::vector<std::int64_t> words;
      for (int t = 0; t < log.episode_len; ++t) words.push_back(log.at(t, a).word);
      for (std::size_t k = words.size(); k > 1; --k) std::swap(words[k - 1], words[uniform_index(rng, k)]);
      for (int t = 0; t < log.episode_len; ++t) log.at(t, a).word = words[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

double procrustes_distance(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeMismatch("procrustes shapes differ");
  Matrix m(a.cols, a.cols);
  for (int r = 0; r < a.rows; ++r) {
    for (int x = 0; x < a.cols; ++x) {
      for (int y = 0; y < a.cols; ++y) m(x, y) += a(r, x) * b(r, y);
    }
  }
  const Svd d = svd(m);
  Matrix rot(a.cols, a.cols);
  for (int x = 0; x < a.cols; ++x) {
    for (int y = 0; y < a.cols; ++y) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += d.u(x, k) * d.v(y, k);
      rot(x, y) = s;
    }
  }
  double dist = 0.0;
  for (int r = 0; r < a.rows; ++r) {
    for (int y = 0; y < a.cols; ++y) {
      double s = 0.0;
      for (int x = 0; x < a.cols; ++x) s += a(r, x) * rot(x, y);
      dist += (s - b(r, y)) * (s - b(r, y));
    }
  }
  return std::sqrt(dist);
}

namespace {

double consistency_stat(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                        const GroundingOptions& opt, int& pairs) {
  std::vector<Matrix> emb;
  const int na = graph.junction(i).action_count();
  for (AgentId j : graph.neighbors(i)) {
    const PairCounts c = pair_counts(logs, graph, i, j, opt.alignment);
    Matrix u = svd_embed(pmi(c, opt.smoothing), std::min(opt.k, na)).u;
    for (int r = 0; r < u.rows; ++r) {
      double n = 0.0;
      for (int d = 0; d < u.cols; ++d) n += u(r, d) * u(r, d);
      n = std::sqrt(n);
      if (n > 0.0) {
        for (int d = 0; d < u.cols; ++d) u(r, d) /= n;
      }
    }
    emb.push_back(std::move(u));
  }
  double s = 0.0;
  pairs = 0;
  for (std::size_t x = 0; x < emb.size(); ++x) {
    for (std::size_t y = x + 1; y < emb.size(); ++y) {
      s += procrustes_distance(emb[x], emb[y]);
      ++pairs;
    }
  }
  return pairs > 0 ? s / pairs : 0.0;
}

}  // namespace

ConsistencyResult neighbor_consistency(std::span<const EpisodeLog> logs, const AgentGraph& graph,
                                       AgentId i, const GroundingOptions& opt) {
  const auto& nb = graph.neighbors(i);
  if (nb.size() < 2) throw InsufficientData("agent " + std::to_string(i) + " has fewer than two neighbours");
  if (logs.empty()) throw EmptyLogs("no episode logs");
  ConsistencyResult res;
  res.neighbors = nb;
  res.statistic = consistency_stat(logs, graph, i, opt, res.pairs);
  const auto shuffled = shuffle_words(logs, derive_seed(opt.seed, "consistency-null", {static_cast<std::uint64_t>(i)}));
  int p = 0;
  res.null_statistic = consistency_stat(shuffled, graph, i, opt, p);
  return res;
}

Matrix tfidf_profiles(std::span<const EpisodeLog> logs) {
  if (logs.empty()) throw EmptyLogs("no episode logs");
  const int n = logs.front().agents;
  const int bits = logs.front().msg_bits;
  if (bits <= 0 || bits > 20) throw InsufficientData("logs carry no analysable messages");
  const int words = 1 << bits;
  Matrix counts(n, words);
  for (const auto& log : logs) {
    if (log.agents != n || log.msg_bits != bits) throw FormatError("logs mix networks or message widths");
    for (int t = 0; t < log.episode_len; ++t) {
      for (AgentId a = 0; a < n; ++a) {
        const auto w = log.at(t, a).word;
        if (w >= 0 && w < words) counts(a, static_cast<int>(w)) += 1.0;
      }
    }
  }
  Matrix out(n, words);
  for (int w = 0; w < words; ++w) {
    int df = 0;
    for (int a = 0; a < n; ++a) df += counts(a, w) > 0.0 ? 1 : 0;
    const double idf = std::max(0.0, std::log(static_cast<double>(n) / (1.0 + df)));
    for (int a = 0; a < n; ++a) {
      double total = 0.0;
      for (int x = 0; x < words; ++x) total += counts(a, x);
      out(a, w) = total > 0.0 ? counts(a, w) / total * idf : 0.0;
    }
  }
  return out;
}

Matrix project2d(const Matrix& m) {
  if (m.rows < 2) throw InsufficientData("projection needs at least two rows");
  Matrix c = m;
  for (int d = 0; d < m.cols; ++d) {
    double mean = 0.0;
    for (int r = 0; r < m.rows; ++r) mean += m(r, d);
    mean /= m.rows;
    for (int r = 0; r < m.rows; ++r) c(r, d) -= mean;
  }
  const Svd s = svd(c);
  const int k = std::min(2, static_cast<int>(s.s.size()));
  Matrix out(m.rows, 2);
  for (int r = 0; r < m.rows; ++r) {
    for (int x = 0; x < k; ++x) {
      double v = 0.0;
      for (int d = 0; d < m.cols; ++d) v += c(r, d) * s.v(d, x);
      out(r, x) = v;
    }
  }
  return out;
}

double silhouette(const Matrix& rows, std::span<const int> partition) {
  const int n = rows.rows;
  if (static_cast<int>(partition.size()) != n) throw DegeneratePartition("partition does not cover every row");
  std::vector<int> labels(partition.begin(), partition.end());
  std::vector<int> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() < 2) throw DegeneratePartition("partition has a single class");
  if (static_cast<int>(sorted.size()) == n) throw DegeneratePartition("partition has only singleton classes");
  Matrix dist(n, n);
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      double s = 0.0;
      for (int d = 0; d < rows.cols; ++d) s += (rows(x, d) - rows(y, d)) * (rows(x, d) - rows(y, d));
      dist(x, y) = dist(y, x) = std::sqrt(s);
    }
  }
  double total = 0.0;
  for (int x = 0; x < n; ++x) {
    double a = 0.0;
    int na = 0;
    double b = std::numeric_limits<double>::infinity();
    for (int cls : sorted) {
      double s = 0.0;
      int cnt = 0;
      for (int y = 0; y < n; ++y) {
        if (y == x || labels[static_cast<std::size_t>(y)] != cls) continue;
        s += dist(x, y);
        ++cnt;
      }
      if (cls == labels[static_cast<std::size_t>(x)]) {
        a = s;
        na = cnt;
      } else if (cnt > 0) {
        b = std::min(b, s / cnt);
      }
    }
    if (na == 0) continue;  // singleton: silhouette 0
    a /= na;
    const double den = std::max(a, b);
    total += den > 0.0 ? (b - a) / den : 0.0;
  }
  return total / n;
}

NullStats silhouette_null(const Matrix& rows, std::span<const int> partition, int trials,
                          std::uint64_t seed) {
  Rng rng(derive_seed(seed, "silhouette-null"));
  std::vector<int> perm(partition.begin(), partition.end());
  std::vector<double> vals;
  for (int t = 0; t < trials; ++t) {
    for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[uniform_index(rng, k)]);
    vals.push_back(silhouette(rows, perm));
  }
  NullStats s;
  if (vals.empty()) return s;
  for (double v : vals) s.mean += v;
  s.mean /= static_cast<double>(vals.size());
  for (double v : vals) s.sd += (v - s.mean) * (v - s.mean);
  s.sd = vals.size() > 1 ? std::sqrt(s.sd / static_cast<double>(vals.size() - 1)) : 0.0;
  return s;
}

std::string matrix_text(const Matrix& m) {
  std::ostringstream os;
  os.precision(10);
  os << m.rows << " " << m.cols << "\n";
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) os << (c ? " " : "") << m(r, c);
    os << "\n";
  }
  return os.str();
}

}  // namespace netmarl::lang
