#include "umtpara/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "umtpara/error.hpp"
#include "umtpara/io.hpp"
#include "umtpara/rng.hpp"

namespace umtpara::pairing {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kLargest: return "largest";
    case Strategy::kMedium: return "medium";
    case Strategy::kSmallest: return "smallest";
    case Strategy::kSupervised: return "supervised";
    case Strategy::kExhaustive: return "exhaustive";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::kRandom, Strategy::kLargest, Strategy::kMedium, Strategy::kSmallest, Strategy::kSupervised,
                 Strategy::kExhaustive}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("pairing.strategy", "unknown strategy '" + std::string(name) + "'");
}

namespace {

void require_active(std::span<const ClusterId> active, std::size_t k) {
  if (active.size() < 2) throw InputError("pairing needs at least 2 active clusters");
  for (auto c : active) {
    if (k != 0 && c >= k) throw InputError("active cluster " + std::to_string(c) + " outside the distance matrix");
  }
}

std::vector<ClusterId> sorted_active(std::span<const ClusterId> active) {
  std::vector<ClusterId> a(active.begin(), active.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

// Best candidate under `better`; candidates are ascending so strict
// comparison keeps the lowest id on ties.
template <typename Key, typename Better>
ClusterId pick(const std::vector<ClusterId>& candidates, Key key, Better better) {
  ClusterId best = candidates.front();
  double best_key = key(best);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double v = key(candidates[i]);
    if (better(v, best_key)) {
      best = candidates[i];
      best_key = v;
    }
  }
  return best;
}

std::vector<ClusterId> others(const std::vector<ClusterId>& active, ClusterId src) {
  std::vector<ClusterId> out;
  for (auto c : active) {
    if (c != src) out.push_back(c);
  }
  return out;
}

}  // namespace

PairingPlan pair_clusters(std::span<const ClusterId> active_in, const DistanceMatrix& matrix, Strategy strategy,
                          std::uint64_t seed) {
  const auto active = sorted_active(active_in);
  require_active(active, matrix.size());
  if (strategy == Strategy::kSupervised || strategy == Strategy::kExhaustive) {
    throw InputError("strategy '" + to_string(strategy) + "' needs a score function or evaluator");
  }
  Rng rng(seed);
  PairingPlan plan;
  for (auto src : active) {
    const auto cand = others(active, src);
    const auto dist = [&](ClusterId c) { return matrix(src, c); };
    ClusterId tgt = 0;
    switch (strategy) {
      case Strategy::kRandom:
        tgt = cand[rng.below(cand.size())];
        break;
      case Strategy::kLargest:
        tgt = pick(cand, dist, std::greater<double>());
        break;
      case Strategy::kSmallest:
        tgt = pick(cand, dist, std::less<double>());
        break;
      case Strategy::kMedium: {
        auto sorted = cand;
        std::stable_sort(sorted.begin(), sorted.end(), [&](ClusterId a, ClusterId b) { return dist(a) < dist(b); });
        tgt = sorted[(sorted.size() - 1) / 2];
        break;
      }
      default:
        break;
    }
    plan.push_back({src, tgt, to_string(strategy)});
  }
  return plan;
}

ScoreFunction fit_score_function(std::span<const ScoreSample> samples, std::size_t degree) {
  const std::size_t n = samples.size();
  if (n < degree + 1) {
    throw InputError("fit_score_function: " + std::to_string(n) + " samples cannot determine a degree-" +
                     std::to_string(degree) + " polynomial");
  }
  Eigen::MatrixXd A(n, degree + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 1.0;
    for (std::size_t j = 0; j <= degree; ++j) {
      A(i, j) = p;
      p *= samples[i].distance;
    }
    y(i) = samples[i].score;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-12);
  if (qr.rank() < static_cast<Eigen::Index>(degree + 1)) {
    throw NumericError("fit_score_function: design matrix is rank deficient (distances too few or identical)");
  }
  const Eigen::VectorXd c = qr.solve(y);
  ScoreFunction f;
  f.coefficients.assign(c.data(), c.data() + c.size());
  f.residual = (A * c - y).squaredNorm();
  f.samples = n;
  return f;
}

double predict_score(const ScoreFunction& f, double distance) {
  double acc = 0.0;
  for (auto it = f.coefficients.rbegin(); it != f.coefficients.rend(); ++it) acc = acc * distance + *it;
  return acc;
}

PairingPlan pair_supervised(std::span<const ClusterId> active_in, const DistanceMatrix& matrix,
                            const ScoreFunction& f) {
  const auto active = sorted_active(active_in);
  require_active(active, matrix.size());
  PairingPlan plan;
  for (auto src : active) {
    const auto tgt = pick(
        others(active, src), [&](ClusterId c) { return predict_score(f, matrix(src, c)); }, std::greater<double>());
    plan.push_back({src, tgt, to_string(Strategy::kSupervised)});
  }
  return plan;
}

PairingPlan pair_exhaustive(std::span<const ClusterId> active_in, const PairEvaluator& evaluate) {
  const auto active = sorted_active(active_in);
  require_active(active, 0);
  if (active.size() > kMaxExhaustiveClusters) {
    throw InputError("exhaustive pairing is limited to " + std::to_string(kMaxExhaustiveClusters) + " clusters");
  }
  PairingPlan plan;
  for (auto src : active) {
    const auto tgt = pick(others(active, src), [&](ClusterId c) { return evaluate(src, c); }, std::greater<double>());
    plan.push_back({src, tgt, to_string(Strategy::kExhaustive)});
  }
  return plan;
}

void save_plan(const PairingPlan& plan, const std::filesystem::path& path) {
  std::ostringstream os;
  for (const auto& e : plan) os << e.src << '\t' << e.tgt << '\t' << e.strategy << '\n';
  write_file_atomic(path, os.str());
}

PairingPlan load_plan(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  PairingPlan plan;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    std::istringstream ls(line);
    PairEntry e;
    if (!(ls >> e.src >> e.tgt >> e.strategy)) {
      throw InputError(path.string() + ":" + std::to_string(n) + ": expected src, tgt and strategy");
    }
    if (e.src == e.tgt) throw InputError(path.string() + ":" + std::to_string(n) + ": cluster paired with itself");
    plan.push_back(e);
  }
  return plan;
}

}  // namespace umtpara::pairing
