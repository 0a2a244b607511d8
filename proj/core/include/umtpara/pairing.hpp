#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtpara/clustering.hpp"

namespace umtpara::pairing {

enum class Strategy { kRandom, kLargest, kMedium, kSmallest, kSupervised, kExhaustive };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct PairEntry {
  ClusterId src = 0;
  ClusterId tgt = 0;
  std::string strategy;

  bool operator==(const PairEntry&) const = default;
};

// One entry per active cluster, in ascending src order.
using PairingPlan = std::vector<PairEntry>;

// random: uniform over the other active clusters; largest/smallest: arg
// max/min distance; medium: element floor((n-1)/2) of the candidates sorted by
// ascending distance. Ties go to the lowest cluster id.
PairingPlan pair_clusters(std::span<const ClusterId> active, const DistanceMatrix& matrix, Strategy strategy,
                          std::uint64_t seed = 0);

// Polynomial F(d) = sum_i coefficients[i] d^i fitted by least squares.
struct ScoreFunction {
  std::vector<double> coefficients;
  double residual = 0.0;  // sum of squared residuals
  std::size_t samples = 0;

  std::size_t degree() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
};

struct ScoreSample {
  double distance = 0.0;
  double score = 0.0;
};

ScoreFunction fit_score_function(std::span<const ScoreSample> samples, std::size_t degree);
double predict_score(const ScoreFunction& f, double distance);

// Per src, the other active cluster with the highest predicted score.
PairingPlan pair_supervised(std::span<const ClusterId> active, const DistanceMatrix& matrix, const ScoreFunction& f);

// Scores every ordered pair through `evaluate` and keeps the best target per
// src. Only meant for toy cluster counts.
inline constexpr std::size_t kMaxExhaustiveClusters = 8;
using PairEvaluator = std::function<double(ClusterId src, ClusterId tgt)>;
PairingPlan pair_exhaustive(std::span<const ClusterId> active, const PairEvaluator& evaluate);

void save_plan(const PairingPlan& plan, const std::filesystem::path& path);
PairingPlan load_plan(const std::filesystem::path& path);

}  // namespace umtpara::pairing
