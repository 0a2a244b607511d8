#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "umtpara/error.hpp"
#include "umtpara/fixtures.hpp"
#include "umtpara/pseudo.hpp"
#include "umtpara/rng.hpp"

using namespace umtpara;
using namespace umtpara::pseudo;

TEST_SUITE_BEGIN("pseudo");

namespace {

Tokens n_tokens(std::size_t n, const std::string& stem = "w") {
  Tokens t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(stem + std::to_string(i));
  return t;
}

ParaphrasePair pair(Tokens src, Tokens tgt) {
  ParaphrasePair p;
  p.src = std::move(src);
  p.tgt = std::move(tgt);
  return p;
}

// 3 identical, 2 over-length, 5 clean.
std::vector<ParaphrasePair> ten_pairs() {
  std::vector<ParaphrasePair> out;
  out.push_back(pair({"a", "b"}, {"a", "b"}));
  out.push_back(pair({"c"}, {"c"}));
  out.push_back(pair(n_tokens(4), n_tokens(4)));
  out.push_back(pair(n_tokens(4), n_tokens(9, "v")));
  out.push_back(pair({"x"}, {"y", "z", "q"}));
  out.push_back(pair({"a", "b"}, {"b", "a"}));
  out.push_back(pair(n_tokens(4), n_tokens(8, "v")));
  out.push_back(pair(n_tokens(4), n_tokens(2, "v")));
  out.push_back(pair({"p", "q", "r"}, {"p", "q", "s"}));
  out.push_back(pair({"m"}, {"n", "o"}));
  for (std::uint32_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

std::vector<SentenceRecord> planted_corpus(Vocab* vocab, std::size_t per_topic = 30) {
  fixtures::TopicCorpusSpec spec;
  spec.sentences_per_topic = per_topic;
  spec.seed = 3;
  const auto tc = fixtures::gen_topic_corpus(spec);
  std::vector<SentenceRecord> corpus;
  for (std::size_t i = 0; i < tc.sentences.size(); ++i) {
    corpus.push_back({static_cast<std::uint32_t>(i), tc.sentences[i], tokenize(tc.sentences[i], {}), {}});
  }
  *vocab = build_vocab(corpus, 1);
  encode_corpus(corpus, *vocab);
  return corpus;
}

}  // namespace

TEST_CASE("identity filter") {
  CHECK(filter_identity(pair({"a", "b"}, {"a", "b"})));
  CHECK_FALSE(filter_identity(pair({"a", "b"}, {"b", "a"})));
  // Comparison happens after tokenization, so case folding applies first.
  TokenizerConfig cfg;
  CHECK(filter_identity(pair(tokenize("The Cat", cfg), tokenize("the cat", cfg))));
}

TEST_CASE("length ratio filter boundary") {
  CHECK(filter_length_ratio(pair(n_tokens(4), n_tokens(9)), 2.0));
  CHECK_FALSE(filter_length_ratio(pair(n_tokens(4), n_tokens(8)), 2.0));
  CHECK_FALSE(filter_length_ratio(pair(n_tokens(4), n_tokens(2)), 2.0));
}

TEST_CASE("run_filters on the 10-pair fixture") {
  const auto pairs = ten_pairs();
  const auto spec = FilterSpec::parse("identity, length_ratio:max_ratio=2");
  const auto r = run_filters(pairs, spec);
  CHECK(r.kept.size() == 5);
  CHECK(r.report.input == 10);
  CHECK(r.report.output == 5);
  REQUIRE(r.report.drops.size() == 2);
  CHECK(r.report.drops[0] == std::pair<std::string, std::size_t>{"identity", 3});
  CHECK(r.report.drops[1] == std::pair<std::string, std::size_t>{"length_ratio", 2});
  const auto j = to_json(r.report);
  CHECK(j.at("output") == 5);
}

TEST_CASE("empty filter spec keeps everything") {
  const auto pairs = ten_pairs();
  const auto r = run_filters(pairs, FilterSpec{});
  CHECK(r.kept.size() == pairs.size());
  CHECK(r.report.drops.empty());
}

TEST_CASE("filter accounting identity on random pairs") {
  Rng rng(17);
  std::vector<ParaphrasePair> pairs;
  for (std::uint32_t i = 0; i < 1000; ++i) {
    const auto ls = 1 + rng.below(6);
    const auto lt = 1 + rng.below(14);
    auto src = n_tokens(ls, rng.below(2) ? "w" : "v");
    auto tgt = rng.below(4) == 0 ? src : n_tokens(lt, rng.below(2) ? "w" : "v");
    pairs.push_back(pair(src, tgt));
  }
  const auto spec = FilterSpec::parse("identity, length_ratio:max_ratio=1.5");
  const auto r = run_filters(pairs, spec);
  std::size_t dropped = 0;
  for (const auto& [name, n] : r.report.drops) dropped += n;
  CHECK(r.report.input == r.report.output + dropped);
  CHECK(r.report.output == r.kept.size());
}

TEST_CASE("filter spec parsing") {
  const auto s = FilterSpec::parse("identity, length_ratio:max_ratio=3");
  REQUIRE(s.steps.size() == 2);
  CHECK(s.steps[1].params.at("max_ratio") == 3.0);
  CHECK(FilterSpec::parse(s.to_string()).to_string() == s.to_string());
  try {
    (void)make_filter({"frobnicate", {}});
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("frobnicate") != std::string::npos);
  }
  CHECK_THROWS_AS(run_filters(ten_pairs(), FilterSpec::parse("identity, identity")), ConfigError);
}

TEST_CASE("routing delegates to the clustering model") {
  Vocab vocab;
  const auto corpus = planted_corpus(&vocab);
  LdaConfig cfg;
  cfg.k = 3;
  const auto model = lda_fit(corpus, vocab.size(), cfg);
  const auto all = Router::lda(model, {0, 1, 2});
  for (const auto& s : corpus) CHECK(all.route(s) == lda_assign(model, s.ids));
  const auto some = Router::lda(model, {0, 2});
  for (const auto& s : corpus) {
    CHECK(some.route(s) != 1);
    CHECK(some.route(s) == some.route(s));
  }
}

TEST_CASE("kmeans routing uses the embedding table") {
  Vocab vocab;
  const auto corpus = planted_corpus(&vocab, 10);
  const auto emb = hashed_embeddings(corpus, 8);
  const auto km = kmeans_fit(emb, 3, 50, 1);
  const auto r = Router::kmeans(km, emb, {0, 1, 2});
  for (const auto& s : corpus) CHECK(r.route(s) == kmeans_assign(km, emb.row(s.id)));
}

TEST_CASE("generate_pairs with the identity stub") {
  Vocab vocab;
  auto corpus = planted_corpus(&vocab, 10);
  corpus[4].tokens.clear();
  corpus[4].ids.clear();
  LdaConfig cfg;
  cfg.k = 3;
  const auto model = lda_fit(corpus, vocab.size(), cfg);
  const auto router = Router::lda(model, {0, 1, 2});
  std::map<ClusterId, ModelHandle> models;
  for (ClusterId c = 0; c < 3; ++c) models[c] = {"stub" + std::to_string(c), identity_translator()};
  const auto pairs = generate_pairs(corpus, router, models, 2);
  CHECK(pairs.size() == corpus.size() - 1);
  for (const auto& p : pairs) {
    CHECK(p.src == corpus[p.id].tokens);
    CHECK(p.tgt == p.src);
    CHECK(p.model == "stub" + std::to_string(p.cluster));
  }
  for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i - 1].id < pairs[i].id);
  CHECK(pairs == generate_pairs(corpus, router, models, 1));
}

TEST_CASE("pairs JSONL round trip") {
  testing::TempDir dir;
  const auto pairs = ten_pairs();
  save_pairs(pairs, dir / "p.jsonl");
  CHECK(load_pairs(dir / "p.jsonl") == pairs);
}

TEST_SUITE_END();
