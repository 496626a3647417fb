#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netmarl/episode_log.hpp"
#include "netmarl/graph.hpp"

namespace netmarl::lang {

/// Dense row-major matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}
  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  std::vector<double> row(int r) const;
};

using WordId = std::uint64_t;

/// Big-endian integer of a binary vector; entries must be 0 or 1.
WordId word_id(std::span<const double> bits);
std::vector<double> word_bits(WordId w, int d);

/// Which of the sender's words explain an action taken at window end T.
enum class Alignment : std::uint8_t {
  LastTick,   // the word broadcast at T - 1
  AllWindow,  // every word broadcast at T - 4 .. T
};
Alignment parse_alignment(const std::string& s);

struct PairCounts {
  AgentId actor = 0;
  AgentId sender = 0;
  int actions = 0;
  int words = 0;     // 2^d
  Matrix joint;      // actions x words
  std::vector<double> action_totals;
  std::vector<double> word_totals;
  double total = 0.0;
};

/// Throws NotNeighbors, EmptyLogs.
PairCounts pair_counts(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                       AgentId j, Alignment alignment = Alignment::LastTick);
/// Counts over the windows whose index has the given parity (0 even, 1 odd).
PairCounts pair_counts_parity(std::span<const EpisodeLog> logs, const AgentGraph& graph, AgentId i,
                              AgentId j, Alignment alignment, int parity);

struct PmiMatrix {
  Matrix p;  // actions x words
  double smoothing = 1.0;
};

/// Additively smoothed PMI:
/// log((N(a,w) + e)(N + e|A|W) / ((N(a) + eW)(N(w) + e|A|))).
PmiMatrix pmi(const PairCounts& counts, double smoothing = 1.0);

/// Thin SVD A = U diag(S) V^T by one-sided Jacobi rotations. S descending;
/// the largest-magnitude entry of each V column is positive. Columns beyond
/// the rank are completed to an orthonormal set. Throws ConvergenceFailure.
struct Svd {
  Matrix u;  // rows x r
  std::vector<double> s;
  Matrix v;  // cols x r
};
Svd svd(const Matrix& a, int max_sweeps = 10000);

struct EmbeddingSet {
  Matrix u;  // actions x k
  std::vector<double> s;
  Matrix v;  // words x k
  int k = 2;
};

/// Truncated SVD of a PMI matrix; throws ShapeMismatch when k exceeds the
/// smaller dimension, ConvergenceFailure.
EmbeddingSet svd_embed(const PmiMatrix& p, int k = 2);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double inertia = 0.0;
};
/// Lloyd iterations from k-means++ seeds; best of `restarts` runs.
KMeansResult kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed);

struct GroundingOptions {
  int k = 2;
  int min_support = 10;
  Alignment alignment = Alignment::LastTick;
  int restarts = 50;
  std::uint64_t seed = 0;
  double smoothing = 1.0;
};

struct GroundingResult {
  double purity = 0.0;
  std::vector<WordId> words;     // qualifying words
  std::vector<int> labels;       // argmax-PMI action per word (held-out windows)
  std::vector<int> clusters;     // k-means cluster per word
  std::vector<int> cluster_action;  // matched action per cluster
};

/// Word embeddings come from the even action windows and the argmax-PMI
/// action labels from the odd ones, so a word's label is never fitted on the
/// counts that placed it. Words need min_support occurrences in each half.
/// Clusters (k = |A_i|) are matched one-to-one to actions to maximise
/// agreement; purity is the matched fraction. Throws InsufficientData,
/// NotNeighbors, EmptyLogs.
GroundingResult grounding_score(std::span<const EpisodeLog> logs, const AgentGraph& graph,
                                AgentId i, AgentId j, const GroundingOptions& opt = {});

/// Copies of `logs` with every agent's outgoing words permuted across ticks
/// (independently per agent), breaking word-action association while keeping
/// each agent's vocabulary distribution.
std::vector<EpisodeLog> shuffle_words(std::span<const EpisodeLog> logs, std::uint64_t seed);

/// min over orthogonal R of ||A R - B||_F.
double procrustes_distance(const Matrix& a, const Matrix& b);

struct ConsistencyResult {
  double statistic = 0.0;       // mean Procrustes distance over neighbour pairs
  double null_statistic = 0.0;  // same on word-shuffled logs
  int pairs = 0;
  std::vector<AgentId> neighbors;
};

/// Throws InsufficientData for fewer than two neighbours.
ConsistencyResult neighbor_consistency(std::span<const EpisodeLog> logs, const AgentGraph& graph,
                                       AgentId i, const GroundingOptions& opt = {});

/// agents x 2^d tf-idf matrix over broadcast words; idf floored at 0.
Matrix tfidf_profiles(std::span<const EpisodeLog> logs);

/// Mean-centred rows projected on their top two right singular vectors.
Matrix project2d(const Matrix& m);

/// Mean silhouette (Euclidean). Throws DegeneratePartition.
double silhouette(const Matrix& rows, std::span<const int> partition);
inline double community_separation(const Matrix& profiles, std::span<const int> partition) {
  return silhouette(profiles, partition);
}

struct NullStats {
  double mean = 0.0;
  double sd = 0.0;
};
/// Silhouette under random relabelling that keeps the group sizes.
NullStats silhouette_null(const Matrix& rows, std::span<const int> partition, int trials,
                          std::uint64_t seed);

std::string matrix_text(const Matrix& m);

}  // namespace netmarl::lang
