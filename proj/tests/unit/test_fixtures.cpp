#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "umtpara/fixtures.hpp"
#include "umtpara/io.hpp"

using namespace umtpara;
using namespace umtpara::fixtures;

TEST_SUITE_BEGIN("fixtures");

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

bool is_marker(const std::string& w) { return !w.empty() && (w[0] == 'a' || w[0] == 'b'); }

}  // namespace

TEST_CASE("topic corpus shape and disjointness") {
  TopicCorpusSpec spec;
  const auto c = gen_topic_corpus(spec);
  CHECK(c.sentences.size() == 600);
  CHECK(c.labels.size() == 600);
  std::map<std::string, std::set<std::size_t>> owner;
  for (std::size_t i = 0; i < c.sentences.size(); ++i) {
    const auto ws = words(c.sentences[i]);
    CHECK(ws.size() >= spec.min_length);
    CHECK(ws.size() <= spec.max_length);
    for (const auto& w : ws) owner[w].insert(c.labels[i]);
  }
  for (const auto& [w, topics] : owner) CHECK(topics.size() == 1);
}

TEST_CASE("topic corpus files are seed-determined") {
  testing::TempDir dir;
  TopicCorpusSpec spec;
  spec.seed = 4;
  write_topic_corpus(gen_topic_corpus(spec), dir / "a.txt", dir / "a.labels");
  write_topic_corpus(gen_topic_corpus(spec), dir / "b.txt", dir / "b.labels");
  CHECK(read_file(dir / "a.txt") == read_file(dir / "b.txt"));
  CHECK(read_file(dir / "a.labels") == read_file(dir / "b.labels"));
  spec.seed = 5;
  write_topic_corpus(gen_topic_corpus(spec), dir / "c.txt", dir / "c.labels");
  CHECK(read_file(dir / "a.txt") != read_file(dir / "c.txt"));
}

TEST_CASE("topic markers stay inside their topic") {
  TopicCorpusSpec spec;
  spec.markers_per_topic = 2;
  spec.shared_words = 5;
  spec.shared_rate = 0.2;
  const auto c = gen_topic_corpus(spec);
  for (std::size_t i = 0; i < c.sentences.size(); ++i) {
    int markers = 0;
    for (const auto& w : words(c.sentences[i])) {
      if (w[0] == 'm') {
        ++markers;
        CHECK(w.substr(0, 2 + std::to_string(c.labels[i]).size()) == "m" + std::to_string(c.labels[i]) + "x");
      }
    }
    CHECK(markers == 1);
  }
}

TEST_CASE("dialect corpus alignment") {
  DialectSpec spec;
  const auto d = gen_dialect_corpus(spec);
  CHECK(d.a.size() == spec.sentences);
  CHECK(d.b.size() == spec.sentences);
  CHECK(d.alignment.size() == spec.sentences);
  for (std::size_t i = 0; i < d.a.size(); ++i) {
    const auto a = words(d.a[i]);
    const auto b = words(d.b[d.alignment[i]]);
    REQUIRE(a.size() == b.size());
    CHECK(to_dialect_b(d, a) == b);
    bool has_marker = false;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (is_marker(a[j])) {
        has_marker = true;
        CHECK(a[j][0] == 'a');
        CHECK(b[j] == "b" + a[j].substr(1));
      } else {
        CHECK(a[j] == b[j]);
      }
    }
    CHECK(has_marker);
  }
}

TEST_CASE("dictionary substitution example") {
  DialectCorpus d;
  d.dictionary = {{"foo", "bar"}};
  CHECK(to_dialect_b(d, {"x", "foo", "y"}) == Tokens{"x", "bar", "y"});
}

TEST_CASE("dialect files") {
  testing::TempDir dir;
  DialectSpec spec;
  spec.sentences = 50;
  const auto d = gen_dialect_corpus(spec);
  write_dialect_corpus(d, dir / "a.txt", dir / "b.txt", dir / "align.tsv");
  const auto align = read_file(dir / "align.tsv");
  CHECK(std::count(align.begin(), align.end(), '\n') == 50);
  CHECK(gen_dialect_corpus(spec).b == d.b);
}

TEST_CASE("blobs and purity") {
  const auto b = gen_blobs(3, 10, 4, 10.0, 1);
  CHECK(b.table.rows() == 30);
  CHECK(b.labels.size() == 30);
  const std::vector<ClusterId> perfect{2, 2, 0, 0, 1};
  const std::vector<std::size_t> labels{0, 0, 1, 1, 2};
  CHECK(purity(perfect, labels) == 1.0);
  const std::vector<ClusterId> merged{0, 0, 0, 0, 0};
  CHECK(purity(merged, labels) == doctest::Approx(0.4));
}

TEST_CASE("token accuracy") {
  const std::vector<std::string> a{"x", "y", "z"}, b{"x", "q", "y", "z"}, none{};
  CHECK(token_accuracy(a, a) == 1.0);
  CHECK(token_accuracy(a, b) == doctest::Approx(0.75));
  CHECK(token_accuracy(none, none) == 1.0);
  CHECK(token_accuracy(a, none) == 0.0);
}

TEST_SUITE_END();
