#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "umtpara/corpus.hpp"

namespace umtpara::metrics {

enum class Smoothing { kNone, kAddOneOnZero };
enum class RougeMode { kRecall, kF1 };

struct MetricConfig {
  std::size_t max_order = 4;
  // Sentence-level only; corpus BLEU is never smoothed.
  Smoothing smoothing = Smoothing::kAddOneOnZero;
  double alpha = 0.8;
  RougeMode rouge = RougeMode::kRecall;

  void validate() const;
};

Smoothing parse_smoothing(const std::string& s);
RougeMode parse_rouge_mode(const std::string& s);

struct EvalTriple {
  Tokens source;
  Tokens reference;
  Tokens candidate;
};

// Clipped n-gram match and candidate n-gram totals per order (index 0 = unigrams).
struct NgramStats {
  std::vector<std::size_t> matches;
  std::vector<std::size_t> totals;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

// Reference length is the one closest to the candidate (shorter wins ties).
NgramStats ngram_stats(std::span<const std::string> candidate, std::span<const Tokens> references,
                       std::size_t max_order);

// Combines stats into a BLEU score in [0, 100]. With add-one-on-zero, an order
// n >= 2 with no match uses (0 + 1) / (total + 1); a zero unigram match always
// yields 0.
double bleu_from_stats(const NgramStats& stats, Smoothing smoothing);

double bleu(std::span<const std::string> candidate, std::span<const Tokens> references, const MetricConfig& config);
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, const MetricConfig& config);

// Pools counts over all candidates before combining. Unsmoothed.
double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t max_order);

// alpha * BLEU(c, r) - (1 - alpha) * BLEU(c, s)
double ibleu(std::span<const std::string> source, std::span<const std::string> reference,
             std::span<const std::string> candidate, const MetricConfig& config);

struct RougeScore {
  double value = 0.0;
  bool warning = false;  // reference shorter than n
};

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n,
                   RougeMode mode);

struct SentenceScores {
  double bleu = 0, ibleu = 0, rouge1 = 0, rouge2 = 0;
  bool rouge_warning = false;
};

struct EvalReport {
  double bleu = 0;   // corpus BLEU against references
  double ibleu = 0;  // alpha * corpus BLEU(c, r) - (1 - alpha) * corpus BLEU(c, s)
  double rouge1 = 0; // mean of per-sentence scores
  double rouge2 = 0;
  std::vector<SentenceScores> sentences;
};

EvalReport evaluate(std::span<const EvalTriple> triples, const MetricConfig& config);

nlohmann::json to_json(const EvalReport& report, const MetricConfig& config);
std::string per_sentence_csv(const EvalReport& report);

}  // namespace umtpara::metrics
