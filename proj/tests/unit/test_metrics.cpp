#include <doctest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "umtpara/error.hpp"
#include "umtpara/metrics.hpp"

using namespace umtpara;
using namespace umtpara::metrics;

TEST_SUITE_BEGIN("metrics");

namespace {

Tokens t(const std::string& s) {
  Tokens out;
  std::istringstream is(s);
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

MetricConfig order2() {
  MetricConfig c;
  c.max_order = 2;
  c.smoothing = Smoothing::kNone;
  return c;
}

struct HandRow {
  EvalTriple triple;
  double bleu, ibleu, rouge1, rouge2;
};

struct HandFixture {
  std::vector<HandRow> rows;
  std::map<std::string, double> corpus;
};

HandFixture load_hand_fixture() {
  std::ifstream in(std::string(UMTPARA_FIXTURE_DIR) + "/metrics_hand.tsv");
  REQUIRE(in);
  HandFixture f;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols[0] == "@corpus") {
      for (std::size_t i = 1; i < cols.size(); ++i) {
        const auto eq = cols[i].find('=');
        f.corpus[cols[i].substr(0, eq)] = std::stod(cols[i].substr(eq + 1));
      }
      continue;
    }
    REQUIRE(cols.size() == 7);
    f.rows.push_back({{t(cols[0]), t(cols[1]), t(cols[2])},
                      std::stod(cols[3]), std::stod(cols[4]), std::stod(cols[5]), std::stod(cols[6])});
  }
  return f;
}

}  // namespace

TEST_CASE("bleu basics") {
  const auto cfg = MetricConfig{};
  CHECK(bleu(t("a b c d e"), t("a b c d e"), cfg) == doctest::Approx(100.0));
  CHECK(bleu(t("x y z"), t("a b c"), cfg) == 0.0);
}

TEST_CASE("bleu clipped counts") {
  const double b = bleu(t("the cat the cat"), t("the cat sat"), order2());
  CHECK(std::round(b * 100.0) / 100.0 == doctest::Approx(40.82));
  CHECK(b == doctest::Approx(oracle::bleu(t("the cat the cat"), t("the cat sat"), 2)).epsilon(1e-12));
}

TEST_CASE("bleu matches the oracle on assorted pairs") {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"a b c d e f", "a b c d x f"}, {"a a a a", "a a b"}, {"a b", "a b c d e f g"},
      {"x a b c y a b c", "a b c a b c"}, {"one two three four five", "one two three four five six"}};
  MetricConfig cfg;
  cfg.smoothing = Smoothing::kNone;
  for (const auto& [c, r] : cases) {
    CHECK(bleu(t(c), t(r), cfg) == doctest::Approx(oracle::bleu(t(c), t(r), 4)).epsilon(1e-10));
  }
}

TEST_CASE("smoothing only replaces zero higher orders") {
  MetricConfig cfg;
  // p1 = 2/2, p2 = 0/1 -> (0 + 1) / (1 + 1); BP = exp(1 - 3/2).
  cfg.max_order = 2;
  const double b = bleu(t("a c"), t("a b c"), cfg);
  CHECK(b == doctest::Approx(100.0 * std::exp(1.0 - 1.5) * std::sqrt(0.5)).epsilon(1e-12));
  cfg.smoothing = Smoothing::kNone;
  CHECK(bleu(t("a c"), t("a b c"), cfg) == 0.0);
}

TEST_CASE("multi-reference length picks the closest, shorter on ties") {
  const std::vector<Tokens> refs{t("a b c d"), t("a b")};
  const auto s = ngram_stats(t("a b c"), refs, 4);
  CHECK(s.reference_length == 2);
  CHECK(s.matches[0] == 3);
}

TEST_CASE("ibleu identities") {
  const auto cfg = order2();
  CHECK(ibleu(t("x y z"), t("a b c"), t("a b c"), cfg) == doctest::Approx(80.0));
  CHECK(ibleu(t("a b c"), t("a b c"), t("a b c"), cfg) == doctest::Approx(60.0));
  CHECK(0.8 * 40.82 - 0.2 * 20.0 == doctest::Approx(28.656));
}

TEST_CASE("rouge") {
  CHECK(rouge_n(t("a b c"), t("a b c"), 2, RougeMode::kRecall).value == 1.0);
  CHECK(rouge_n(t("a b c"), t("a b c"), 2, RougeMode::kF1).value == 1.0);
  CHECK(rouge_n(t("a b"), t("c d"), 1, RougeMode::kRecall).value == 0.0);
  CHECK(rouge_n(t("the cat sat down"), t("the cat sat"), 2, RougeMode::kRecall).value == doctest::Approx(1.0));
  CHECK(rouge_n(t("the cat sat down"), t("the cat sat"), 2, RougeMode::kF1).value == doctest::Approx(0.8));
  const auto w = rouge_n(t("a b"), t("a"), 2, RougeMode::kRecall);
  CHECK(w.warning);
  CHECK(w.value == 0.0);
}

TEST_CASE("evaluate on identical outputs") {
  std::vector<EvalTriple> triples{{t("x y"), t("a b c"), t("a b c")}, {t("z"), t("d e f g"), t("d e f g")}};
  const auto r = evaluate(triples, {});
  CHECK(r.ibleu == doctest::Approx(80.0));
  CHECK(r.rouge1 == doctest::Approx(1.0));
  CHECK(r.rouge2 == doctest::Approx(1.0));
}

TEST_CASE("single triple report equals its sentence scores") {
  // Every n-gram order has matches, so smoothing never applies and the
  // corpus and sentence scores coincide.
  std::vector<EvalTriple> one{{t("a b c d x"), t("a b c d e f"), t("a b c d e")}};
  const auto r = evaluate(one, {});
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.bleu == doctest::Approx(r.sentences[0].bleu).epsilon(1e-12));
  CHECK(r.ibleu == doctest::Approx(r.sentences[0].ibleu).epsilon(1e-12));
  CHECK(r.rouge1 == r.sentences[0].rouge1);
  CHECK(r.rouge2 == r.sentences[0].rouge2);
}

TEST_CASE("hand-scored fixture") {
  const auto f = load_hand_fixture();
  REQUIRE(f.rows.size() == 5);
  std::vector<EvalTriple> triples;
  for (const auto& row : f.rows) triples.push_back(row.triple);
  const auto cfg = order2();
  const auto r = evaluate(triples, cfg);
  for (std::size_t i = 0; i < f.rows.size(); ++i) {
    CAPTURE(i);
    CHECK(r.sentences[i].bleu == doctest::Approx(f.rows[i].bleu).epsilon(1e-6));
    CHECK(r.sentences[i].ibleu == doctest::Approx(f.rows[i].ibleu).epsilon(1e-6));
    CHECK(r.sentences[i].rouge1 == doctest::Approx(f.rows[i].rouge1).epsilon(1e-6));
    CHECK(r.sentences[i].rouge2 == doctest::Approx(f.rows[i].rouge2).epsilon(1e-6));
  }
  CHECK(r.bleu == doctest::Approx(f.corpus.at("bleu")).epsilon(1e-6));
  CHECK(r.ibleu == doctest::Approx(f.corpus.at("ibleu")).epsilon(1e-6));
  CHECK(r.rouge1 == doctest::Approx(f.corpus.at("rouge1")).epsilon(1e-6));
  CHECK(r.rouge2 == doctest::Approx(f.corpus.at("rouge2")).epsilon(1e-6));
  std::vector<Tokens> c, s;
  for (const auto& tr : triples) {
    c.push_back(tr.candidate);
    s.push_back(tr.source);
  }
  CHECK(corpus_bleu(c, s, 2) == doctest::Approx(f.corpus.at("source_bleu")).epsilon(1e-6));
}

TEST_CASE("report serialization") {
  std::vector<EvalTriple> triples{{t("x"), t("a b c d"), t("a b c d")}};
  const auto r = evaluate(triples, {});
  const auto j = to_json(r, {});
  CHECK(j.at("ibleu").get<double>() == doctest::Approx(80.0));
  const auto csv = per_sentence_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("metric config validation") {
  MetricConfig c;
  c.alpha = 1.5;
  CHECK_THROWS(c.validate());
  CHECK_THROWS(parse_smoothing("laplace"));
  CHECK(parse_rouge_mode("f1") == RougeMode::kF1);
}

TEST_SUITE_END();
