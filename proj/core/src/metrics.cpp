#include "umtpara/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "umtpara/error.hpp"

namespace umtpara::metrics {

void MetricConfig::validate() const {
  if (max_order < 1) throw ConfigError("metrics.max_order", "must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("metrics.alpha", "must lie in [0, 1]");
}

Smoothing parse_smoothing(const std::string& s) {
  if (s == "none") return Smoothing::kNone;
  if (s == "add-one-on-zero") return Smoothing::kAddOneOnZero;
  throw ConfigError("metrics.smoothing", "unknown smoothing '" + s + "'");
}

RougeMode parse_rouge_mode(const std::string& s) {
  if (s == "recall") return RougeMode::kRecall;
  if (s == "f1") return RougeMode::kF1;
  throw ConfigError("metrics.rouge", "unknown ROUGE mode '" + s + "'");
}

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(std::span<const std::string> tokens, std::size_t n) {
  Counts c;
  if (tokens.size() < n) return c;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++c[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return c;
}

std::size_t clipped_matches(const Counts& candidate, const Counts& reference) {
  std::size_t m = 0;
  for (const auto& [g, n] : candidate) {
    auto it = reference.find(g);
    if (it != reference.end()) m += std::min(n, it->second);
  }
  return m;
}

void accumulate(NgramStats& into, const NgramStats& s) {
  for (std::size_t i = 0; i < s.matches.size(); ++i) {
    into.matches[i] += s.matches[i];
    into.totals[i] += s.totals[i];
  }
  into.candidate_length += s.candidate_length;
  into.reference_length += s.reference_length;
}

}  // namespace

NgramStats ngram_stats(std::span<const std::string> candidate, std::span<const Tokens> references,
                       std::size_t max_order) {
  if (references.empty()) throw InputError("bleu: at least one reference is required");
  NgramStats s;
  s.matches.assign(max_order, 0);
  s.totals.assign(max_order, 0);
  s.candidate_length = candidate.size();
  s.reference_length = references.front().size();
  for (const auto& r : references) {
    const auto d = [&](std::size_t len) {
      return std::abs(static_cast<long>(len) - static_cast<long>(candidate.size()));
    };
    if (d(r.size()) < d(s.reference_length) || (d(r.size()) == d(s.reference_length) && r.size() < s.reference_length)) {
      s.reference_length = r.size();
    }
  }
  for (std::size_t n = 1; n <= max_order; ++n) {
    const auto cand = ngrams(candidate, n);
    Counts max_ref;
    for (const auto& r : references) {
      for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    s.matches[n - 1] = clipped_matches(cand, max_ref);
    s.totals[n - 1] = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  }
  return s;
}

double bleu_from_stats(const NgramStats& s, Smoothing smoothing) {
  if (s.candidate_length == 0 || s.matches.empty() || s.matches[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < s.matches.size(); ++i) {
    double p;
    if (s.matches[i] > 0) {
      p = static_cast<double>(s.matches[i]) / static_cast<double>(s.totals[i]);
    } else if (smoothing == Smoothing::kAddOneOnZero) {
      p = 1.0 / static_cast<double>(s.totals[i] + 1);
    } else {
      return 0.0;
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(s.candidate_length);
  const double r = static_cast<double>(s.reference_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(s.matches.size()));
}

double bleu(std::span<const std::string> candidate, std::span<const Tokens> references, const MetricConfig& config) {
  return bleu_from_stats(ngram_stats(candidate, references, config.max_order), config.smoothing);
}

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, const MetricConfig& config) {
  const std::vector<Tokens> refs{Tokens(reference.begin(), reference.end())};
  return bleu(candidate, refs, config);
}

double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t max_order) {
  if (candidates.size() != references.size()) {
    throw InputError("corpus_bleu: candidate and reference counts differ");
  }
  NgramStats total;
  total.matches.assign(max_order, 0);
  total.totals.assign(max_order, 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    accumulate(total, ngram_stats(candidates[i], std::span<const Tokens>(&references[i], 1), max_order));
  }
  return bleu_from_stats(total, Smoothing::kNone);
}

double ibleu(std::span<const std::string> source, std::span<const std::string> reference,
             std::span<const std::string> candidate, const MetricConfig& config) {
  return config.alpha * bleu(candidate, reference, config) - (1.0 - config.alpha) * bleu(candidate, source, config);
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n,
                   RougeMode mode) {
  if (n == 0) throw InputError("rouge_n: n must be >= 1");
  if (reference.size() < n) return {0.0, true};
  const auto ref = ngrams(reference, n);
  const auto cand = ngrams(candidate, n);
  const double matched = static_cast<double>(clipped_matches(cand, ref));
  const double recall = matched / static_cast<double>(reference.size() - n + 1);
  if (mode == RougeMode::kRecall) return {recall, false};
  if (candidate.size() < n || matched == 0.0) return {0.0, false};
  const double precision = matched / static_cast<double>(candidate.size() - n + 1);
  return {2.0 * precision * recall / (precision + recall), false};
}

EvalReport evaluate(std::span<const EvalTriple> triples, const MetricConfig& config) {
  config.validate();
  if (triples.empty()) throw InputError("evaluate: no triples");
  EvalReport report;
  std::vector<Tokens> cands, refs, srcs;
  for (const auto& t : triples) {
    SentenceScores s;
    s.bleu = bleu(t.candidate, t.reference, config);
    s.ibleu = ibleu(t.source, t.reference, t.candidate, config);
    const auto r1 = rouge_n(t.candidate, t.reference, 1, config.rouge);
    const auto r2 = rouge_n(t.candidate, t.reference, 2, config.rouge);
    s.rouge1 = r1.value;
    s.rouge2 = r2.value;
    s.rouge_warning = r1.warning || r2.warning;
    report.rouge1 += s.rouge1;
    report.rouge2 += s.rouge2;
    report.sentences.push_back(s);
    cands.push_back(t.candidate);
    refs.push_back(t.reference);
    srcs.push_back(t.source);
  }
  const double n = static_cast<double>(triples.size());
  report.rouge1 /= n;
  report.rouge2 /= n;
  report.bleu = corpus_bleu(cands, refs, config.max_order);
  report.ibleu = config.alpha * report.bleu - (1.0 - config.alpha) * corpus_bleu(cands, srcs, config.max_order);
  return report;
}

nlohmann::json to_json(const EvalReport& r, const MetricConfig& config) {
  return {{"bleu", r.bleu},
          {"ibleu", r.ibleu},
          {"rouge1", r.rouge1},
          {"rouge2", r.rouge2},
          {"sentences", r.sentences.size()},
          {"alpha", config.alpha},
          {"max_order", config.max_order},
          {"rouge_mode", config.rouge == RougeMode::kRecall ? "recall" : "f1"}};
}

std::string per_sentence_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(9);
  os << "index,bleu,ibleu,rouge1,rouge2,rouge_warning\n";
  for (std::size_t i = 0; i < report.sentences.size(); ++i) {
    const auto& s = report.sentences[i];
    os << i << ',' << s.bleu << ',' << s.ibleu << ',' << s.rouge1 << ',' << s.rouge2 << ',' << (s.rouge_warning ? 1 : 0)
       << '\n';
  }
  return os.str();
}

}  // namespace umtpara::metrics
