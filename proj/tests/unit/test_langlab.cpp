#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>
#include <numeric>

#include "common/fixtures.hpp"
#include "common/synthetic_logs.hpp"
#include "netmarl/error.hpp"
#include "netmarl/langlab.hpp"

using namespace netmarl;
using namespace netmarl::lang;
using testing::planted_protocol;
using testing::synthetic_episode;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.a) x = 2.0 * uniform01(rng) - 1.0;
  return m;
}

double frob(const Matrix& a) {
  double s = 0.0;
  for (double x : a.a) s += x * x;
  return std::sqrt(s);
}

Matrix reconstruct(const Svd& d, int k) {
  Matrix out(d.u.rows, d.v.rows);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j)
      for (int c = 0; c < k; ++c) out(i, j) += d.u(i, c) * d.s[static_cast<std::size_t>(c)] * d.v(j, c);
  return out;
}

Matrix minus(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= b.a[i];
  return out;
}

void check_orthonormal(const Matrix& m) {
  for (int a = 0; a < m.cols; ++a) {
    for (int b = 0; b < m.cols; ++b) {
      double dot = 0.0;
      for (int r = 0; r < m.rows; ++r) dot += m(r, a) * m(r, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9).scale(1.0));
    }
  }
}

double dist(const Matrix& m, int a, int b) {
  double s = 0.0;
  for (int c = 0; c < m.cols; ++c) s += (m(a, c) - m(b, c)) * (m(a, c) - m(b, c));
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("langlab") {
  TEST_CASE("word ids are big-endian and bijective for d <= 10") {
    CHECK(word_id(std::vector<double>{0, 0, 0}) == 0);
    CHECK(word_id(std::vector<double>{1, 0, 1}) == 5);
    for (int d = 1; d <= 10; ++d) {
      for (WordId w = 0; w < (WordId{1} << d); ++w) {
        const auto bits = word_bits(w, d);
        REQUIRE(bits.size() == static_cast<std::size_t>(d));
        REQUIRE(word_id(bits) == w);
      }
    }
    CHECK_THROWS_AS(word_id(std::vector<double>{0.5, 1}), ShapeMismatch);
    CHECK(parse_alignment("all-5") == Alignment::AllWindow);
    CHECK(parse_alignment("last-tick") == Alignment::LastTick);
  }

  TEST_CASE("pair counts: single window, errors") {
    const AgentGraph g = testing::two_agent_graph();
    const auto log = synthetic_episode(2, 1, 3, [](int t, AgentId) { return t == 3 ? 6 : 1; },
                                       [](int, AgentId) { return 2; });
    const std::vector<EpisodeLog> logs{log};
    const PairCounts c = pair_counts(logs, g, 1, 0);
    CHECK(c.total == 1.0);
    CHECK(c.joint(2, 6) == 1.0);
    CHECK(c.actions == 3);
    CHECK(c.words == 8);
    CHECK_THROWS_AS(pair_counts(std::vector<EpisodeLog>{}, g, 1, 0), EmptyLogs);
    const AgentGraph line = testing::three_agent_line();
    const auto log3 = synthetic_episode(3, 2, 3, [](int, AgentId) { return 0; }, [](int, AgentId) { return 0; });
    CHECK_THROWS_AS(pair_counts(std::vector<EpisodeLog>{log3}, line, 0, 2), NotNeighbors);
  }

  TEST_CASE("pair counts match a recount over 100 random logs; all-5 multiplies N by 5") {
    const AgentGraph g = testing::three_agent_line();
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      const int windows = 1 + static_cast<int>(uniform_index(rng, 12));
      std::vector<std::int64_t> words(static_cast<std::size_t>(15 * windows));
      for (auto& w : words) w = static_cast<std::int64_t>(uniform_index(rng, 16));
      std::vector<int> acts(static_cast<std::size_t>(3 * windows));
      for (auto& a : acts) a = static_cast<int>(uniform_index(rng, 4));
      const auto log = synthetic_episode(
          3, windows, 4, [&](int t, AgentId a) { return words[static_cast<std::size_t>(3 * t + a)]; },
          [&](int w, AgentId a) { return acts[static_cast<std::size_t>(3 * w + a)]; });
      const std::vector<EpisodeLog> logs{log};
      const PairCounts c = pair_counts(logs, g, 1, 2);
      Matrix oracle(4, 16);
      for (int w = 0; w < windows; ++w) {
        const int t = 5 * w + 4;
        oracle(acts[static_cast<std::size_t>(3 * w + 1)], static_cast<int>(words[static_cast<std::size_t>(3 * (t - 1) + 2)])) += 1.0;
      }
      REQUIRE(c.joint.a == oracle.a);
      CHECK(c.total == windows);
      for (int a = 0; a < 4; ++a) {
        double s = 0.0;
        for (int w = 0; w < 16; ++w) s += c.joint(a, w);
        CHECK(c.action_totals[static_cast<std::size_t>(a)] == s);
      }
      for (int w = 0; w < 16; ++w) {
        double s = 0.0;
        for (int a = 0; a < 4; ++a) s += c.joint(a, w);
        CHECK(c.word_totals[static_cast<std::size_t>(w)] == s);
      }
      CHECK(pair_counts(logs, g, 1, 2, Alignment::AllWindow).total == 5.0 * c.total);
    }
  }

  TEST_CASE("pmi: independence, closed form, proportional scaling") {
    PairCounts c;
    c.actions = 3;
    c.words = 8;
    c.joint = Matrix(3, 8, 4.0);
    c.action_totals.assign(3, 32.0);
    c.word_totals.assign(8, 12.0);
    c.total = 96.0;
    for (double x : pmi(c).p.a) CHECK(x == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    // a <-> w bijection on the first three words, n each.
    const double n = 7.0;
    PairCounts d;
    d.actions = 3;
    d.words = 8;
    d.joint = Matrix(3, 8);
    for (int a = 0; a < 3; ++a) d.joint(a, a) = n;
    d.action_totals.assign(3, n);
    d.word_totals = {n, n, n, 0, 0, 0, 0, 0};
    d.total = 3 * n;
    const PmiMatrix p = pmi(d, 1.0);
    const double diag = std::log((n + 1.0) * (3 * n + 24.0) / ((n + 8.0) * (n + 3.0)));
    const double off = std::log(1.0 * (3 * n + 24.0) / ((n + 8.0) * (n + 3.0)));
    const double unused = std::log(1.0 * (3 * n + 24.0) / ((n + 8.0) * 3.0));
    CHECK(p.p(1, 1) == doctest::Approx(diag));
    CHECK(p.p(0, 2) == doctest::Approx(off));
    CHECK(p.p(2, 6) == doctest::Approx(unused));

    PairCounts twice = d;
    for (auto& x : twice.joint.a) x *= 2;
    for (auto& x : twice.action_totals) x *= 2;
    for (auto& x : twice.word_totals) x *= 2;
    twice.total *= 2;
    const PmiMatrix q = pmi(twice, 2.0);
    for (std::size_t i = 0; i < p.p.a.size(); ++i) CHECK(q.p.a[i] == doctest::Approx(p.p.a[i]).epsilon(1e-12));
  }

  TEST_CASE("svd converges on sparse rank-deficient profile matrices") {
    // Shape of a network-2 tf-idf matrix: many zero columns, duplicated rows.
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      Matrix a(28, 256);
      for (int i = 0; i < 28; ++i)
        for (int j = 0; j < 256; ++j)
          if (uniform01(rng) < 0.05) a(i, j) = uniform01(rng) * 1e-3;
      for (int j = 0; j < 256; ++j) a(27, j) = a(26, j) * (1.0 + 1e-14);
      const Svd d = svd(a);
      Eigen::MatrixXd e(28, 256);
      for (int i = 0; i < 28; ++i)
        for (int j = 0; j < 256; ++j) e(i, j) = a(i, j);
      Eigen::JacobiSVD<Eigen::MatrixXd> oracle(e);
      for (int k = 0; k < 28; ++k)
        CHECK(std::abs(d.s[static_cast<std::size_t>(k)] - oracle.singularValues()(k)) < 1e-12);
      CHECK(frob(minus(a, reconstruct(d, 28))) < 1e-12);
    }
  }

  TEST_CASE("svd agrees with an independent dense SVD on random 4x16 matrices") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix a = random_matrix(4, 16, rng);
      const Svd d = svd(a);
      Eigen::MatrixXd e(4, 16);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 16; ++j) e(i, j) = a(i, j);
      Eigen::JacobiSVD<Eigen::MatrixXd> oracle(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
      REQUIRE(d.s.size() == 4);
      for (int k = 0; k < 4; ++k) CHECK(d.s[static_cast<std::size_t>(k)] == doctest::Approx(oracle.singularValues()(k)).epsilon(1e-9));
      for (int k = 0; k + 1 < 4; ++k) CHECK(d.s[static_cast<std::size_t>(k)] >= d.s[static_cast<std::size_t>(k + 1)]);
      check_orthonormal(d.u);
      check_orthonormal(d.v);
      // Rank-2 truncation error equals the oracle's (Eckart-Young).
      Eigen::MatrixXd e2 = oracle.matrixU().leftCols(2) * oracle.singularValues().head(2).asDiagonal() *
                           oracle.matrixV().leftCols(2).transpose();
      const double ours = frob(minus(a, reconstruct(d, 2)));
      CHECK(std::abs(ours - (e - e2).norm()) < 1e-6);
      CHECK(frob(minus(a, reconstruct(d, 4))) < 1e-10);
      for (int c = 0; c < d.v.cols; ++c) {
        int arg = 0;
        for (int r = 1; r < d.v.rows; ++r)
          if (std::abs(d.v(r, c)) > std::abs(d.v(arg, c))) arg = r;
        CHECK(d.v(arg, c) > 0.0);
      }
    }
  }

  TEST_CASE("svd trivial cases: rank one and the identity") {
    Matrix r1(3, 5);
    const double u[] = {1, 2, -2};
    const double v[] = {0.5, -1, 0, 2, 1};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) r1(i, j) = 4.0 * u[i] * v[j];
    const Svd d = svd(r1);
    const double s = 4.0 * 3.0 * std::sqrt(0.25 + 1 + 4 + 1);
    CHECK(d.s[0] == doctest::Approx(s));
    CHECK(std::abs(d.s[1]) < 1e-8);
    CHECK(frob(minus(r1, reconstruct(d, 1))) < 1e-8);
    check_orthonormal(d.u);

    Matrix id(3, 3);
    for (int i = 0; i < 3; ++i) id(i, i) = 1.0;
    PmiMatrix p;
    p.p = id;
    const EmbeddingSet e = svd_embed(p, 2);
    CHECK(e.s[0] == doctest::Approx(1.0));
    CHECK(e.s[1] == doctest::Approx(1.0));
    const Svd full = svd(id);
    CHECK(frob(minus(id, reconstruct(full, 2))) == doctest::Approx(1.0));
    CHECK_THROWS_AS(svd_embed(p, 4), ShapeMismatch);
  }

  TEST_CASE("k-means separates planted blobs") {
    Rng rng(3);
    Matrix pts(60, 2);
    for (int i = 0; i < 60; ++i) {
      pts(i, 0) = 10.0 * (i % 3) + 0.1 * uniform01(rng);
      pts(i, 1) = -5.0 * (i % 3) + 0.1 * uniform01(rng);
    }
    const KMeansResult km = kmeans(pts, 3, 5, 1);
    for (int i = 3; i < 60; ++i) CHECK(km.labels[static_cast<std::size_t>(i)] == km.labels[static_cast<std::size_t>(i % 3)]);
    CHECK(km.labels[0] != km.labels[1]);
    CHECK(km.labels[1] != km.labels[2]);
    CHECK(km.labels[0] != km.labels[2]);
    CHECK(kmeans(pts, 3, 5, 1).labels == km.labels);
  }

  TEST_CASE("grounding: planted protocol is pure, shuffled words are at chance") {
    const AgentGraph g = testing::two_agent_graph();
    GroundingOptions opt;
    opt.min_support = 5;
    const auto planted = planted_protocol(2, 1, {0}, 3, 4, 3, 200, 10, 4);
    const GroundingResult r = grounding_score(planted, g, 1, 0, opt);
    CHECK(r.purity >= 0.99);
    CHECK(r.words.size() >= 9);

    // Null: 8-bit words permuted across ticks. Averaged over seeds.
    const auto wide = planted_protocol(2, 1, {0}, 3, 8, 80, 2000, 20, 5);
    double mean = 0.0;
    const int trials = 5;
    for (int k = 0; k < trials; ++k) {
      const auto shuffled = shuffle_words(wide, static_cast<std::uint64_t>(k));
      mean += grounding_score(shuffled, g, 1, 0, opt).purity / trials;
    }
    CHECK(std::abs(mean - 1.0 / 3.0) < 0.1);
    CHECK(grounding_score(wide, g, 1, 0, opt).purity >= 0.99);

    const auto sparse = synthetic_episode(2, 30, 4, [](int, AgentId) { return 1; }, [](int w, AgentId) { return w % 3; });
    CHECK_THROWS_AS(grounding_score(std::vector<EpisodeLog>{sparse}, g, 1, 0, opt), InsufficientData);
  }

  TEST_CASE("shuffle_words keeps each agent's vocabulary") {
    const auto logs = planted_protocol(2, 1, {0}, 3, 4, 2, 30, 2, 6);
    const auto sh = shuffle_words(logs, 1);
    for (std::size_t e = 0; e < logs.size(); ++e) {
      for (AgentId a = 0; a < 2; ++a) {
        std::vector<std::int64_t> x, y;
        for (int t = 0; t < logs[e].episode_len; ++t) {
          x.push_back(logs[e].at(t, a).word);
          y.push_back(sh[e].at(t, a).word);
          CHECK(sh[e].at(t, a).action == logs[e].at(t, a).action);
        }
        CHECK(x != y);
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        CHECK(x == y);
      }
    }
  }

  TEST_CASE("procrustes distance is rotation invariant") {
    Rng rng(7);
    const Matrix a = random_matrix(5, 2, rng);
    Matrix b(5, 2);
    const double th = 0.7;
    for (int i = 0; i < 5; ++i) {
      b(i, 0) = std::cos(th) * a(i, 0) - std::sin(th) * a(i, 1);
      b(i, 1) = std::sin(th) * a(i, 0) + std::cos(th) * a(i, 1);
    }
    CHECK(procrustes_distance(a, b) < 1e-9);
    CHECK(procrustes_distance(a, random_matrix(5, 2, rng)) > 0.1);
  }

  TEST_CASE("neighbour consistency: identical protocols vs independent ones") {
    const AgentGraph g = testing::three_agent_line();
    GroundingOptions opt;
    opt.k = 2;
    const auto same = planted_protocol(3, 1, {0, 2}, 4, 4, 1, 200, 5, 8);
    const ConsistencyResult s = neighbor_consistency(same, g, 1, opt);
    CHECK(s.pairs == 1);
    CHECK(s.statistic < 1e-6);
    const auto noise = planted_protocol(3, 1, {0, 2}, 4, 4, 1, 200, 5, 8, false);
    const ConsistencyResult n = neighbor_consistency(noise, g, 1, opt);
    CHECK(n.statistic >= 10.0 * std::max(s.statistic, 1e-6));
    CHECK(s.null_statistic > s.statistic);
    CHECK_THROWS_AS(neighbor_consistency(same, g, 0, opt), InsufficientData);
  }

  TEST_CASE("tf-idf: recount oracle, floor rule, order invariance") {
    Rng rng(9);
    std::vector<EpisodeLog> logs;
    for (int e = 0; e < 3; ++e) {
      std::vector<std::int64_t> w(static_cast<std::size_t>(4 * 50));
      for (std::size_t k = 0; k < w.size(); ++k) {
        const auto a = static_cast<AgentId>(k % 4);
        // agent 3 only ever says 7; agents 0-2 draw from halves of the vocabulary
        w[k] = a == 3 ? 7 : static_cast<std::int64_t>(a * 2 + uniform_index(rng, 3));
      }
      logs.push_back(synthetic_episode(4, 10, 3, [&](int t, AgentId a) { return w[static_cast<std::size_t>(4 * t + a)]; },
                                       [](int, AgentId) { return 0; }));
    }
    const Matrix m = tfidf_profiles(logs);
    Matrix counts(4, 8);
    for (const auto& log : logs)
      for (const auto& r : log.records)
        if (r.word >= 0) counts(r.agent, static_cast<int>(r.word)) += 1.0;
    for (int w = 0; w < 8; ++w) {
      int df = 0;
      for (int a = 0; a < 4; ++a) df += counts(a, w) > 0;
      const double idf = std::max(0.0, std::log(4.0 / (1.0 + df)));
      for (int a = 0; a < 4; ++a) {
        double tot = 0.0;
        for (int x = 0; x < 8; ++x) tot += counts(a, x);
        CHECK(m(a, w) == doctest::Approx(counts(a, w) / tot * idf));
      }
    }
    // agent 3's single word: tf = 1, used by one agent -> idf log 2
    CHECK(m(3, 7) == doctest::Approx(std::log(2.0)));
    std::vector<EpisodeLog> reversed(logs.rbegin(), logs.rend());
    CHECK(tfidf_profiles(reversed).a == m.a);
    // a word used by every agent has a floored idf
    const auto all = synthetic_episode(3, 4, 2, [](int, AgentId) { return 1; }, [](int, AgentId) { return 0; });
    for (double x : tfidf_profiles(std::vector<EpisodeLog>{all}).a) CHECK(x == 0.0);
    CHECK_THROWS_AS(tfidf_profiles(std::vector<EpisodeLog>{}), EmptyLogs);
  }

  TEST_CASE("project2d: rotation of centred 2-D points, blobs, duplicates") {
    Rng rng(10);
    Matrix pts = random_matrix(8, 2, rng);
    for (int c = 0; c < 2; ++c) {
      double mu = 0.0;
      for (int r = 0; r < 8; ++r) mu += pts(r, c) / 8;
      for (int r = 0; r < 8; ++r) pts(r, c) -= mu;
    }
    const Matrix p = project2d(pts);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) CHECK(std::abs(dist(p, a, b) - dist(pts, a, b)) < 1e-8);

    Matrix blobs(20, 6);
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 6; ++c) blobs(r, c) = (r < 10 ? 5.0 : -5.0) * (c % 2 ? 1 : -1) + 0.2 * uniform01(rng);
    blobs(3, 0) = blobs(4, 0);
    for (int c = 0; c < 6; ++c) blobs(5, c) = blobs(6, c);
    const Matrix q = project2d(blobs);
    double within = 0.0;
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b) within = std::max({within, dist(q, a, b), dist(q, a + 10, b + 10)});
    CHECK(dist(q, 0, 15) > 5.0 * within);
    CHECK(q(5, 0) == q(6, 0));
    CHECK(q(5, 1) == q(6, 1));
  }

  TEST_CASE("silhouette examples and the random-partition null") {
    Matrix rows(6, 2);
    for (int r = 0; r < 6; ++r) rows(r, 0) = r < 3 ? 0.0 : 4.0;
    const std::vector<int> part{0, 0, 0, 1, 1, 1};
    CHECK(silhouette(rows, part) == doctest::Approx(1.0));
    CHECK_THROWS_AS(silhouette(rows, std::vector<int>(6, 0)), DegeneratePartition);
    CHECK_THROWS_AS(silhouette(rows, std::vector<int>{0, 1, 2, 3, 4, 5}), DegeneratePartition);

    Rng rng(11);
    const Matrix noise = random_matrix(28, 16, rng);
    std::vector<int> half(28);
    for (int i = 0; i < 28; ++i) half[static_cast<std::size_t>(i)] = i < 14 ? 0 : 1;
    const NullStats ns = silhouette_null(noise, half, 300, 1);
    CHECK(std::abs(ns.mean) < 0.15);
    CHECK(ns.sd > 0.0);
    CHECK(std::abs(silhouette(noise, half)) < 0.15);
  }
}
