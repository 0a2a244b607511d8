#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"
#include "umtpara/clustering.hpp"
#include "umtpara/error.hpp"
#include "umtpara/fixtures.hpp"
#include "umtpara/rng.hpp"

using namespace umtpara;

TEST_SUITE_BEGIN("clustering");

namespace {

// Two clusters over a 2-token vocabulary {a = 0, b = 1}.
TopicModel two_topic(std::vector<double> p, std::vector<double> q) {
  TopicModel m;
  m.k = 2;
  m.vocab_size = p.size();
  m.phi = p;
  m.phi.insert(m.phi.end(), q.begin(), q.end());
  return m;
}

std::vector<SentenceRecord> planted(std::size_t per_topic, std::uint64_t seed, std::vector<std::size_t>* labels,
                                    Vocab* vocab_out) {
  fixtures::TopicCorpusSpec spec;
  spec.sentences_per_topic = per_topic;
  spec.seed = seed;
  const auto tc = fixtures::gen_topic_corpus(spec);
  std::vector<SentenceRecord> corpus;
  for (std::size_t i = 0; i < tc.sentences.size(); ++i) {
    corpus.push_back({static_cast<std::uint32_t>(i), tc.sentences[i], tokenize(tc.sentences[i], {}), {}});
  }
  const auto vocab = build_vocab(corpus, 1);
  encode_corpus(corpus, vocab);
  if (labels != nullptr) *labels = tc.labels;
  if (vocab_out != nullptr) *vocab_out = vocab;
  return corpus;
}

}  // namespace

TEST_CASE("lda_assign picks the highest log-likelihood") {
  const auto m = two_topic({0.9, 0.1}, {0.1, 0.9});
  const TokenIds s{0, 0, 1};
  CHECK(oracle::log_likelihood({0.9, 0.1}, {0, 0, 1}) == doctest::Approx(-2.513).epsilon(1e-3));
  CHECK(oracle::log_likelihood({0.1, 0.9}, {0, 0, 1}) == doctest::Approx(-4.716).epsilon(1e-3));
  CHECK(lda_assign(m, s) == 0);
}

TEST_CASE("lda_assign breaks ties toward the lowest id") {
  const auto m = two_topic({0.5, 0.5}, {0.5, 0.5});
  const TokenIds s{0};
  CHECK(lda_assign(m, s) == 0);
  const std::vector<ClusterId> only{1};
  CHECK(lda_assign(m, s, only) == 1);
}

TEST_CASE("cluster_distance on a two-topic model") {
  const auto m = two_topic({0.5, 0.5}, {0.25, 0.75});
  CHECK(cluster_distance(m, 0, 0) == 0.0);
  CHECK(cluster_distance(m, 0, 1) == doctest::Approx(0.2747).epsilon(1e-4));
  CHECK(cluster_distance(m, 0, 1) == doctest::Approx(oracle::sym_kl({0.5, 0.5}, {0.25, 0.75})).epsilon(1e-12));
  CHECK(kl_divergence(m.row(0), m.row(1)) == doctest::Approx(0.14384).epsilon(1e-4));
  CHECK(kl_divergence(m.row(1), m.row(0)) == doctest::Approx(0.13086).epsilon(1e-4));
  const auto dm = distance_matrix(m);
  CHECK(dm(0, 1) == dm(1, 0));
  CHECK(dm(0, 0) == 0.0);
  CHECK(dm(0, 1) == doctest::Approx(0.2747).epsilon(1e-4));
}

TEST_CASE("symmetric KL matches the oracle on random distributions") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> p(7), q(7);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      p[i] = rng.uniform() + 0.01;
      q[i] = rng.uniform() + 0.01;
      sp += p[i];
      sq += q[i];
    }
    for (std::size_t i = 0; i < 7; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double d = symmetric_kl(p, q);
    CHECK(d == doctest::Approx(oracle::sym_kl(p, q)).epsilon(1e-10));
    CHECK(d == symmetric_kl(q, p));
    CHECK(d > 0.0);
    CHECK(symmetric_kl(p, p) == 0.0);
  }
}

TEST_CASE("lda_fit recovers planted topics and is deterministic") {
  std::vector<std::size_t> labels;
  Vocab vocab;
  const auto corpus = planted(200, 11, &labels, &vocab);
  LdaConfig cfg;
  cfg.k = 3;
  cfg.sweeps = 5;
  cfg.seed = 3;
  const auto m = lda_fit(corpus, vocab.size(), cfg);
  CHECK(fixtures::purity(m.assignments, labels) >= 0.9);
  for (ClusterId c = 0; c < 3; ++c) {
    const auto row = m.row(c);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : row) CHECK(v > 0.0);
  }
  const auto again = lda_fit(corpus, vocab.size(), cfg);
  CHECK(again.phi == m.phi);
  CHECK(again.assignments == m.assignments);
}

TEST_CASE("lda_fit separates planted topics across seeds") {
  for (std::uint64_t corpus_seed = 30; corpus_seed < 36; ++corpus_seed) {
    std::vector<std::size_t> labels;
    Vocab vocab;
    const auto corpus = planted(200, corpus_seed, &labels, &vocab);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      LdaConfig cfg;
      cfg.k = 3;
      cfg.sweeps = 5;
      cfg.seed = seed;
      CAPTURE(corpus_seed);
      CAPTURE(seed);
      CHECK(fixtures::purity(lda_fit(corpus, vocab.size(), cfg).assignments, labels) >= 0.9);
    }
  }
}

TEST_CASE("lda defaults follow the reference setup") {
  LdaConfig cfg;
  CHECK(cfg.k == 80);
  CHECK(cfg.sweeps == 5);
}

TEST_CASE("lda_fit rejects an empty corpus") {
  std::vector<SentenceRecord> none;
  CHECK_THROWS_AS(lda_fit(none, 10, LdaConfig{}), InputError);
}

TEST_CASE("topic model save and load") {
  testing::TempDir dir;
  Vocab vocab;
  const auto corpus = planted(20, 1, nullptr, &vocab);
  LdaConfig cfg;
  cfg.k = 3;
  const auto m = lda_fit(corpus, vocab.size(), cfg);
  save_topic_model(m, dir / "t.json");
  const auto r = load_topic_model(dir / "t.json");
  CHECK(r.k == m.k);
  CHECK(r.assignments == m.assignments);
  for (std::size_t i = 0; i < m.phi.size(); ++i) CHECK(r.phi[i] == m.phi[i]);
}

TEST_CASE("kmeans_assign nearest center with lowest-id ties") {
  KMeansModel m;
  m.k = 2;
  m.dim = 2;
  m.centers = {1, 0, 5, 0};
  const std::vector<double> h0{0, 0};
  CHECK(kmeans_assign(m, h0) == 0);
  m.centers = {1, 0, 3, 0};
  const std::vector<double> h1{2, 0};
  CHECK(kmeans_assign(m, h1) == 0);
  const std::vector<double> h2{3, 0};
  CHECK(kmeans_assign(m, h2) == 1);
}

TEST_CASE("kmeans_fit recovers planted blobs with non-increasing SSE") {
  const auto blobs = fixtures::gen_blobs(3, 40, 4, 20.0, 9);
  const auto m = kmeans_fit(blobs.table, 3, 100, 2);
  CHECK(fixtures::purity(m.assignments, blobs.labels) == 1.0);
  for (std::size_t i = 1; i < m.sse_history.size(); ++i) CHECK(m.sse_history[i] <= m.sse_history[i - 1]);
  const auto again = kmeans_fit(blobs.table, 3, 100, 2);
  CHECK(again.centers == m.centers);
}

TEST_CASE("kmeans_fit on identical points") {
  EmbeddingTable t;
  t.dim = 2;
  t.values.assign(10 * 2, 1.5);
  const auto m = kmeans_fit(t, 2, 20, 0);
  for (auto a : m.assignments) CHECK(a == m.assignments[0]);
}

TEST_CASE("kmeans distance is Euclidean between centers") {
  KMeansModel m;
  m.k = 2;
  m.dim = 2;
  m.centers = {0, 0, 3, 4};
  CHECK(cluster_distance(m, 0, 1) == doctest::Approx(5.0));
  CHECK(distance_matrix(m)(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("apply_review") {
  const std::vector<ClusterId> assignments{0, 1, 2, 3, 2, 0};
  const auto set = make_cluster_set(ClusteringKind::kLda, 4, assignments);
  CHECK(set.active == std::vector<ClusterId>{0, 1, 2, 3});
  CHECK(set.members[2] == std::vector<std::uint32_t>{2, 4});

  const auto r = apply_review(set, {{2, false, "noise"}});
  CHECK(r.active == std::vector<ClusterId>{0, 1, 3});
  CHECK(r.members[0] == set.members[0]);

  CHECK(apply_review(set, {}).active == set.active);
  CHECK_THROWS_AS(apply_review(set, {{0, false, ""}, {1, false, ""}, {2, false, ""}}), InputError);
}

TEST_CASE("review decisions round trip") {
  testing::TempDir dir;
  save_review({{0, true, "fine"}, {1, false, "stop words"}}, dir / "r.tsv");
  const auto d = load_review(dir / "r.tsv");
  REQUIRE(d.size() == 2);
  CHECK_FALSE(d[1].keep);
  CHECK(d[1].note == "stop words");
}

TEST_CASE("load_embeddings") {
  testing::TempDir dir;
  std::string text = "d=4\n";
  for (int i = 0; i < 10; ++i) text += std::to_string(i) + " 1 2 3 4\n";
  testing::write_text(dir / "e.txt", text);
  const auto t = load_embeddings(dir / "e.txt");
  CHECK(t.rows() == 10);
  CHECK(t.dim == 4);

  testing::write_text(dir / "short.txt", "d=4\n0 1 2 3\n");
  CHECK_THROWS_AS(load_embeddings(dir / "short.txt"), InputError);
  testing::write_text(dir / "empty.txt", "");
  CHECK_THROWS_AS(load_embeddings(dir / "empty.txt"), InputError);
}

TEST_CASE("hashed embeddings are deterministic") {
  Vocab vocab;
  const auto corpus = planted(5, 2, nullptr, &vocab);
  const auto a = hashed_embeddings(corpus, 8);
  const auto b = hashed_embeddings(corpus, 8);
  CHECK(a.rows() == corpus.size());
  CHECK(a.values == b.values);
}

TEST_CASE("review report lists top tokens") {
  Vocab vocab;
  std::vector<std::size_t> labels;
  const auto corpus = planted(30, 4, &labels, &vocab);
  LdaConfig cfg;
  cfg.k = 3;
  const auto m = lda_fit(corpus, vocab.size(), cfg);
  const auto set = make_cluster_set(ClusteringKind::kLda, 3, m.assignments);
  const auto top = top_tokens(set, corpus, vocab, &m, 5);
  REQUIRE(top.size() == 3);
  CHECK(top[0].size() == 5);
  CHECK(top[0][0].prob >= top[0][4].prob);
  CHECK(review_report(set, corpus, vocab, &m, 5).find("cluster 0") != std::string::npos);
}

TEST_SUITE_END();
