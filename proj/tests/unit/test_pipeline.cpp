#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "umtpara/error.hpp"
#include "umtpara/fixtures.hpp"
#include "umtpara/pipeline.hpp"

using namespace umtpara;
using namespace umtpara::pipeline;

TEST_SUITE_BEGIN("pipeline");

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// A corpus and config small enough to run every training stage in seconds.
PipelineConfig tiny_config(const testing::TempDir& dir) {
  fixtures::TopicCorpusSpec spec;
  spec.topics = 4;
  spec.words_per_topic = 8;
  spec.sentences_per_topic = 20;
  spec.min_length = 3;
  spec.max_length = 5;
  spec.seed = 3;
  const auto corpus = fixtures::gen_topic_corpus(spec);
  fixtures::write_topic_corpus(corpus, dir / "corpus.txt", dir / "labels.txt");
  std::string test;
  for (std::size_t i = 0; i < 6; ++i) test += corpus.sentences[i] + "\t" + corpus.sentences[i] + "\n";
  testing::write_text(dir / "test.tsv", test);
  return parse_config(R"(
[run]
seed = 5
out = out
[corpus]
path = corpus.txt
min_count = 1
[model]
d_model = 8
d_ff = 16
heads = 2
encoder_layers = 1
decoder_layers = 1
[umt]
steps = 3
init_steps = 3
batch = 4
[surrogate]
steps = 4
batch = 4
[filter]
filters = identity
[eval]
test = test.tsv
beam_width = 2
max_length = 8
[ablate]
corpus_sizes = 60, 40
topic_counts = 2, 4
)",
                      std::nullopt, dir.path());
}

}  // namespace

TEST_CASE("profile defaults") {
  const auto paper = PipelineConfig::defaults(Profile::kPaper);
  CHECK(paper.lda.k == 80);
  CHECK(paper.lda.sweeps == 5);
  CHECK(paper.umt.optim.lr == doctest::Approx(0.00025));
  CHECK(paper.surrogate.optim.warmup == 4000);
  CHECK(paper.surrogate.batch == 256);
  CHECK(paper.metrics.alpha == doctest::Approx(0.8));

  const auto desk = PipelineConfig::defaults(Profile::kDesk);
  CHECK(desk.lda.k == 4);
  CHECK(desk.lda.sweeps == 5);
  CHECK(desk.metrics.alpha == doctest::Approx(0.8));
}

TEST_CASE("profile selection") {
  CHECK(parse_config("").profile == Profile::kDesk);
  CHECK(parse_config("[run]\nprofile = paper\n").lda.k == 80);
  CHECK(parse_config("[run]\nprofile = paper\n", Profile::kDesk).lda.k == 4);
  CHECK(parse_config("[run]\nprofile = paper\n[clustering]\nk = 12\n").lda.k == 12);
  CHECK_THROWS_AS(parse_profile("huge"), ConfigError);
}

TEST_CASE("config values are read") {
  const auto c = parse_config(R"(
[run]
seed = 42
out = results
[clustering]
kind = kmeans
k = 6
[pairing]
strategy = smallest
[umt]
steps = 17
lr = 0.003
[filter]
filters = identity
[eval]
alpha = 0.7
rouge = f1
)");
  CHECK(c.seed == 42);
  CHECK(c.out_dir == "results");
  CHECK(c.clustering == ClusteringKind::kKMeans);
  CHECK(c.lda.k == 6);
  CHECK(c.strategy == pairing::Strategy::kSmallest);
  CHECK(c.umt.steps == 17);
  CHECK(c.umt.optim.lr == doctest::Approx(0.003));
  CHECK(c.metrics.alpha == doctest::Approx(0.7));
  CHECK(c.metrics.rouge == metrics::RougeMode::kF1);
}

TEST_CASE("config errors name the field") {
  CHECK(field_of("[umt]\nstepz = 3\n") == "umt.stepz");
  CHECK(field_of("[nope]\nx = 1\n") == "nope.x");
  CHECK(field_of("[umt]\nsteps = many\n") == "umt.steps");
  CHECK(field_of("[clustering]\nkind = spectral\n") == "clustering.kind");
  CHECK(field_of("[filter]\nfilters = identity, shiny\n") == "filter.filters");
  CHECK(field_of("[filter]\nfilters = identity:max_ratio=2\n") == "filter.identity");
  CHECK(field_of("[run]\nprofile = big\n") == "profile");
  try {
    parse_config("[filter]\nfilters = identity, shiny\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("shiny") != std::string::npos);
  }
  try {
    parse_config("[umt]\nstepz = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("umt.stepz") == 0);
  }
}

TEST_CASE("validate") {
  testing::TempDir dir;
  auto c = parse_config("[corpus]\npath = corpus.txt\n", std::nullopt, dir.path());
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "corpus.path");
  }
  testing::write_text(dir / "corpus.txt", "a b\n");
  CHECK_NOTHROW(c.validate());

  c.lda.k = 1;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "clustering.k");
  }
  c.lda.k = 2;
  c.test = "missing.tsv";
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "eval.test");
  }
}

TEST_CASE("load_config resolves paths against the file") {
  testing::TempDir dir;
  testing::write_text(dir / "run.ini", "[corpus]\npath = c.txt\n");
  const auto c = load_config(dir / "run.ini");
  CHECK(c.resolve(c.corpus_path) == dir / "c.txt");
  CHECK_THROWS_AS(load_config(dir / "absent.ini"), ConfigError);
}

TEST_CASE("stage names") {
  CHECK(is_stage("cluster"));
  CHECK(is_stage("ablate"));
  CHECK_FALSE(is_stage("deploy"));
  testing::TempDir dir;
  testing::write_text(dir / "corpus.txt", "a b\n");
  auto c = parse_config("[corpus]\npath = corpus.txt\n", std::nullopt, dir.path());
  c.out_dir = dir / "out";
  CHECK_THROWS_AS(run_stage("deploy", c), ConfigError);
}

TEST_CASE("cluster on three lines") {
  testing::TempDir dir;
  testing::write_text(dir / "corpus.txt", "the cat sat\nthe dog ran\nbirds fly high\n");
  auto c = parse_config("[corpus]\npath = corpus.txt\nmin_count = 1\n[clustering]\nk = 2\n", std::nullopt,
                        dir.path());
  c.out_dir = dir / "out";
  const auto summary = run_stage("cluster", c);
  CHECK(summary.is_object());
  std::istringstream rows(slurp(c.out_dir / artifacts::kAssignments));
  std::string line;
  std::size_t n = 0;
  while (std::getline(rows, line)) n += line.empty() ? 0 : 1;
  CHECK(n == 3);

  const auto manifest = nlohmann::json::parse(slurp(c.out_dir / artifacts::kManifest));
  CHECK(manifest.contains("config"));
  CHECK(manifest.at("stages").contains("cluster"));
  CHECK(manifest.at("artifacts").contains(artifacts::kAssignments));
}

TEST_CASE("missing upstream artifact") {
  testing::TempDir dir;
  testing::write_text(dir / "corpus.txt", "a b\nc d\n");
  auto c = parse_config("[corpus]\npath = corpus.txt\nmin_count = 1\n[clustering]\nk = 2\n", std::nullopt,
                        dir.path());
  c.out_dir = dir / "out";
  try {
    run_stage("pair", c);
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(e.stage() == "cluster");
  }
  try {
    run_stage("train-surrogate", c);
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(e.stage() == "cluster");
  }
  run_stage("cluster", c);
  try {
    run_stage("train-surrogate", c);
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(e.stage() == "filter");
    CHECK(std::string(e.what()).find(artifacts::kFilteredPairs) != std::string::npos);
  }
}

TEST_CASE("rerunning a stage reproduces its outputs") {
  testing::TempDir dir;
  auto c = tiny_config(dir);
  c.out_dir = dir / "out";
  run_stage("cluster", c);
  const auto first = slurp(c.out_dir / artifacts::kAssignments);
  const auto model = slurp(c.out_dir / artifacts::kTopicModel);
  run_stage("cluster", c);
  CHECK(slurp(c.out_dir / artifacts::kAssignments) == first);
  CHECK(slurp(c.out_dir / artifacts::kTopicModel) == model);
}

TEST_CASE("ablation table shape") {
  const auto t = ablation_table("topic-count", {{"2", 1.5}, {"4", -0.25}});
  CHECK(t == "topic-count\tiBLEU\n2\t1.50\n4\t-0.25\n");
  CHECK(ablation_table("corpus-size", {}) == "corpus-size\tiBLEU\n");
}

TEST_CASE("ablate axes") {
  testing::TempDir dir;
  auto c = tiny_config(dir);
  c.out_dir = dir / "out";

  const auto topics = ablate("topic-count", c);
  REQUIRE(topics.size() == 2);
  CHECK(topics[0].value == "2");
  CHECK(topics[1].value == "4");

  const auto sizes = ablate("corpus-size", c);
  REQUIRE(sizes.size() == 2);
  CHECK(sizes[0].value == "60");
  CHECK(sizes[1].value == "40");

  CHECK_THROWS_AS(ablate("moon-phase", c), ConfigError);
  c.topic_counts.clear();
  CHECK_THROWS_AS(ablate("topic-count", c), ConfigError);
}

TEST_CASE("ablate stage writes the table") {
  testing::TempDir dir;
  auto c = tiny_config(dir);
  c.out_dir = dir / "out";
  c.ablate_axis = "pairing-strategy";
  const auto summary = run_stage("ablate", c);
  CHECK(summary.at("rows").size() == 4);
  const auto table = slurp(c.out_dir / "ablation_pairing-strategy.tsv");
  CHECK(table.rfind("pairing-strategy\tiBLEU\nrandom\t", 0) == 0);
  CHECK(table.find("\nlargest\t") != std::string::npos);
  CHECK(table.find("\nmedium\t") != std::string::npos);
  CHECK(table.find("\nsmallest\t") != std::string::npos);
}

TEST_SUITE_END();
