#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "umtpara/error.hpp"
#include "umtpara/pairing.hpp"
#include "umtpara/rng.hpp"

using namespace umtpara;
using namespace umtpara::pairing;

TEST_SUITE_BEGIN("pairing");

namespace {

// d(0,1) = 1, d(0,2) = 5, d(1,2) = 3.
DistanceMatrix three() {
  DistanceMatrix m(3);
  auto set = [&](ClusterId a, ClusterId b, double v) {
    m(a, b) = v;
    m(b, a) = v;
  };
  set(0, 1, 1.0);
  set(0, 2, 5.0);
  set(1, 2, 3.0);
  return m;
}

DistanceMatrix random_matrix(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  DistanceMatrix m(k);
  for (ClusterId a = 0; a < k; ++a) {
    for (ClusterId b = a + 1; b < k; ++b) m(a, b) = m(b, a) = 0.1 + rng.uniform();
  }
  return m;
}

const std::vector<ClusterId> kThree{0, 1, 2};

}  // namespace

TEST_CASE("distance strategies on the 3-cluster fixture") {
  const auto m = three();
  const auto largest = pair_clusters(kThree, m, Strategy::kLargest);
  const auto smallest = pair_clusters(kThree, m, Strategy::kSmallest);
  const auto medium = pair_clusters(kThree, m, Strategy::kMedium);
  CHECK(largest[0].tgt == 2);
  CHECK(smallest[0].tgt == 1);
  CHECK(medium[0].tgt == 1);
  CHECK(largest == PairingPlan{{0, 2, "largest"}, {1, 2, "largest"}, {2, 0, "largest"}});
  CHECK(smallest == PairingPlan{{0, 1, "smallest"}, {1, 0, "smallest"}, {2, 1, "smallest"}});
  CHECK(medium == PairingPlan{{0, 1, "medium"}, {1, 0, "medium"}, {2, 1, "medium"}});
}

TEST_CASE("random pairing is seeded and never self-pairs") {
  const auto m = random_matrix(6, 1);
  const std::vector<ClusterId> active{0, 1, 2, 3, 4, 5};
  const auto a = pair_clusters(active, m, Strategy::kRandom, 7);
  CHECK(a == pair_clusters(active, m, Strategy::kRandom, 7));
  for (const auto& e : a) CHECK(e.src != e.tgt);
}

TEST_CASE("pairing respects the active set") {
  const auto m = random_matrix(5, 2);
  const std::vector<ClusterId> active{0, 2, 4};
  for (auto s : {Strategy::kRandom, Strategy::kLargest, Strategy::kMedium, Strategy::kSmallest}) {
    const auto plan = pair_clusters(active, m, s, 3);
    REQUIRE(plan.size() == 3);
    for (const auto& e : plan) CHECK((e.tgt == 0 || e.tgt == 2 || e.tgt == 4));
  }
  const std::vector<ClusterId> lonely{1};
  CHECK_THROWS(pair_clusters(lonely, m, Strategy::kLargest));
}

TEST_CASE("fit_score_function recovers a planted quadratic") {
  std::vector<ScoreSample> samples;
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    const double d = 0.3 * i;
    samples.push_back({d, 1 + 2 * d + 3 * d * d});
    xs.push_back(d);
    ys.push_back(samples.back().score);
  }
  const auto f = fit_score_function(samples, 2);
  const auto o = oracle::polyfit(xs, ys, 2);
  REQUIRE(f.coefficients.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(f.coefficients[i] - (i + 1.0)) < 1e-8);
    CHECK(std::fabs(f.coefficients[i] - o[i]) < 1e-8);
  }
  CHECK(f.residual < 1e-12);
}

TEST_CASE("score function edge cases") {
  const std::vector<ScoreSample> flat{{0.1, 5}, {0.7, 5}, {2.0, 5}};
  const auto f = fit_score_function(flat, 0);
  CHECK(predict_score(f, 0.0) == doctest::Approx(5.0));
  CHECK(predict_score(f, 99.0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(fit_score_function(flat, 3), InputError);

  ScoreFunction g;
  g.coefficients = {1, 2, 3};
  CHECK(predict_score(g, 0.0) == 1.0);
  CHECK(predict_score(g, 2.0) == 17.0);
}

TEST_CASE("pair_supervised under monotone score functions") {
  const std::vector<ClusterId> active{0, 1, 2, 3, 4};
  const auto m = random_matrix(5, 4);
  ScoreFunction up, down, flat;
  up.coefficients = {0.0, 1.0};
  down.coefficients = {0.0, -2.0};
  flat.coefficients = {3.0};
  auto targets = [](const PairingPlan& p) {
    std::vector<ClusterId> t;
    for (const auto& e : p) t.push_back(e.tgt);
    return t;
  };
  CHECK(targets(pair_supervised(active, m, up)) == targets(pair_clusters(active, m, Strategy::kLargest)));
  CHECK(targets(pair_supervised(active, m, down)) == targets(pair_clusters(active, m, Strategy::kSmallest)));
  CHECK(targets(pair_supervised(active, m, flat)) == std::vector<ClusterId>{1, 0, 0, 0, 0});
}

TEST_CASE("pair_exhaustive keeps the best scored target") {
  const std::vector<ClusterId> active{0, 1, 2};
  const auto plan = pair_exhaustive(active, [](ClusterId s, ClusterId t) { return -std::fabs(double(s) - double(t) - 1.0); });
  CHECK(plan[0].tgt == 1);
  std::vector<ClusterId> many(9);
  for (ClusterId i = 0; i < 9; ++i) many[i] = i;
  CHECK_THROWS(pair_exhaustive(many, [](ClusterId, ClusterId) { return 0.0; }));
}

TEST_CASE("plan round trip") {
  testing::TempDir dir;
  const auto plan = pair_clusters(kThree, three(), Strategy::kLargest);
  save_plan(plan, dir / "plan.tsv");
  CHECK(load_plan(dir / "plan.tsv") == plan);
  CHECK(parse_strategy("medium") == Strategy::kMedium);
  CHECK_THROWS(parse_strategy("widest"));
}

TEST_SUITE_END();
