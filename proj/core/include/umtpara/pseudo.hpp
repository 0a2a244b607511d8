#pragma once

// Routing sentences to their cluster's translation model, generating
// pseudo paraphrase pairs, and the filter pipeline applied to them.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "umtpara/clustering.hpp"
#include "umtpara/corpus.hpp"

namespace umtpara::pseudo {

// Assigns sentences to active clusters with the fitted clustering model.
class Router {
 public:
  static Router lda(const TopicModel& model, std::vector<ClusterId> active);
  // `embeddings` rows are indexed by sentence id.
  static Router kmeans(const KMeansModel& model, const EmbeddingTable& embeddings, std::vector<ClusterId> active);

  ClusterId route(const SentenceRecord& sentence) const;
  const std::vector<ClusterId>& active() const { return active_; }

 private:
  Router() = default;
  const TopicModel* topics_ = nullptr;
  const KMeansModel* kmeans_ = nullptr;
  const EmbeddingTable* embeddings_ = nullptr;
  std::vector<ClusterId> active_;
};

struct ParaphrasePair {
  std::uint32_t id = 0;  // source sentence id
  Tokens src;
  Tokens tgt;
  ClusterId cluster = 0;
  std::string model;

  bool operator==(const ParaphrasePair&) const = default;
};

// Translates a batch of sentences routed to one cluster.
using BatchTranslator = std::function<std::vector<Tokens>(std::span<const SentenceRecord* const>)>;

struct ModelHandle {
  std::string name;
  BatchTranslator translate;
};

// Output with every translation replaced by its source.
BatchTranslator identity_translator();

// One pair per sentence with at least one token, in corpus order. Clusters are
// translated on up to `threads` workers.
std::vector<ParaphrasePair> generate_pairs(std::span<const SentenceRecord> corpus, const Router& router,
                                           const std::map<ClusterId, ModelHandle>& models, std::size_t threads = 1);

// A predicate returns true to drop the pair.
using FilterPredicate = std::function<bool(const ParaphrasePair&)>;

struct FilterStep {
  std::string name;
  std::map<std::string, double> params;
};

// Ordered predicates. Text form: comma-separated steps, each `name` or
// `name:key=value[:key=value...]`, e.g. "identity, length_ratio:max_ratio=2".
struct FilterSpec {
  std::vector<FilterStep> steps;

  static FilterSpec parse(const std::string& text);
  std::string to_string() const;
};

bool filter_identity(const ParaphrasePair& pair);
// Drops when the target has more than max_ratio times the source's tokens.
bool filter_length_ratio(const ParaphrasePair& pair, double max_ratio = 2.0);

// Builds a registered predicate; throws ConfigError naming an unknown filter.
FilterPredicate make_filter(const FilterStep& step);
std::vector<std::string> registered_filters();

struct FilterReport {
  std::size_t input = 0;
  std::vector<std::pair<std::string, std::size_t>> drops;  // spec order
  std::size_t output = 0;
};

struct FilterResult {
  std::vector<ParaphrasePair> kept;
  FilterReport report;
};

// Each dropped pair is charged to the first predicate that rejects it.
FilterResult run_filters(std::span<const ParaphrasePair> pairs, const FilterSpec& spec);

nlohmann::json to_json(const FilterReport& report);

// JSONL: {"id", "src", "tgt", "cluster", "model"} with space-joined tokens.
void save_pairs(std::span<const ParaphrasePair> pairs, const std::filesystem::path& path);
std::vector<ParaphrasePair> load_pairs(const std::filesystem::path& path);

}  // namespace umtpara::pseudo
