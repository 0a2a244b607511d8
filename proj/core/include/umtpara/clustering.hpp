#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umtpara/corpus.hpp"

namespace umtpara {

using ClusterId = std::uint32_t;

// ---------------------------------------------------------------------------
// LDA over sentences, fitted by collapsed Gibbs sampling.

struct LdaConfig {
  std::size_t k = 80;
  std::size_t sweeps = 5;
  double alpha = 0.1;
  double beta = 0.01;
  std::uint64_t seed = 0;
};

struct TopicModel {
  std::size_t k = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> phi;               // k rows of vocab_size, each sums to 1
  std::vector<ClusterId> assignments;    // sentence id -> topic

  double prob(ClusterId c, TokenId w) const {
    return phi[static_cast<std::size_t>(c) * vocab_size + static_cast<std::size_t>(w)];
  }
  std::span<const double> row(ClusterId c) const {
    return std::span<const double>(phi).subspan(static_cast<std::size_t>(c) * vocab_size,
                                                vocab_size);
  }
};

TopicModel lda_fit(std::span<const SentenceRecord> corpus, std::size_t vocab_size,
                   const LdaConfig& config);

// argmax over `active` (all clusters when empty) of sum_w log p(w|c); ties go
// to the lowest cluster id.
ClusterId lda_assign(const TopicModel& model, std::span<const TokenId> sentence,
                     std::span<const ClusterId> active = {});

// ---------------------------------------------------------------------------
// Hard K-means over externally computed sentence embeddings.

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> values;  // rows() x dim

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }
};

// Reads `d=<int>` followed by `<id> <f1> ... <fd>` rows. When expected_rows is
// given, ids must cover exactly 0..expected_rows-1.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_rows = std::nullopt);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

// Fallback provider: average of per-token pseudo-random unit-variance vectors
// keyed by a hash of the token string.
EmbeddingTable hashed_embeddings(std::span<const SentenceRecord> corpus, std::size_t dim);

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centers;          // k x dim
  std::vector<ClusterId> assignments;   // row -> cluster
  std::vector<double> sse_history;      // SSE after every assignment step
  std::size_t iterations = 0;

  std::span<const double> center(ClusterId c) const {
    return std::span<const double>(centers).subspan(static_cast<std::size_t>(c) * dim, dim);
  }
};

KMeansModel kmeans_fit(const EmbeddingTable& table, std::size_t k, std::size_t max_iter,
                       std::uint64_t seed);

ClusterId kmeans_assign(const KMeansModel& model, std::span<const double> embedding,
                        std::span<const ClusterId> active = {});

// ---------------------------------------------------------------------------
// Cluster distances.

double kl_divergence(std::span<const double> p, std::span<const double> q);
// KL(p||q) + KL(q||p).
double symmetric_kl(std::span<const double> p, std::span<const double> q);

double cluster_distance(const TopicModel& model, ClusterId m, ClusterId n);
double cluster_distance(const KMeansModel& model, ClusterId m, ClusterId n);

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t k) : k_(k), values_(k * k, 0.0) {}

  std::size_t size() const { return k_; }
  double operator()(ClusterId m, ClusterId n) const { return values_[m * k_ + n]; }
  double& operator()(ClusterId m, ClusterId n) { return values_[m * k_ + n]; }

  void save(const std::filesystem::path& path) const;
  static DistanceMatrix load(const std::filesystem::path& path);

 private:
  std::size_t k_ = 0;
  std::vector<double> values_;
};

DistanceMatrix distance_matrix(const TopicModel& model);
DistanceMatrix distance_matrix(const KMeansModel& model);

// ---------------------------------------------------------------------------
// Cluster sets and human review.

enum class ClusteringKind { kLda, kKMeans };

std::string to_string(ClusteringKind kind);
ClusteringKind parse_clustering_kind(std::string_view name);

struct ClusterSet {
  ClusteringKind kind = ClusteringKind::kLda;
  std::size_t k = 0;
  std::vector<ClusterId> active;                       // ascending
  std::vector<std::vector<std::uint32_t>> members;     // per cluster, ascending sentence ids

  bool is_active(ClusterId c) const;
};

ClusterSet make_cluster_set(ClusteringKind kind, std::size_t k,
                            std::span<const ClusterId> assignments);

struct ReviewDecision {
  ClusterId cluster = 0;
  bool keep = true;
  std::string note;
};

using ReviewDecisions = std::vector<ReviewDecision>;

ReviewDecisions load_review(const std::filesystem::path& path);
void save_review(const ReviewDecisions& decisions, const std::filesystem::path& path);

// Drops discarded clusters from the active set. At least two must remain.
ClusterSet apply_review(const ClusterSet& clusters, const ReviewDecisions& decisions);

void save_assignments(std::span<const ClusterId> assignments, const std::filesystem::path& path);
std::vector<ClusterId> load_assignments(const std::filesystem::path& path);

struct TopToken {
  std::string token;
  double prob = 0.0;
};

// Top tokens per cluster. Uses phi when a topic model is given, otherwise the
// empirical token distribution of each cluster's members.
std::vector<std::vector<TopToken>> top_tokens(const ClusterSet& clusters,
                                              std::span<const SentenceRecord> corpus,
                                              const Vocab& vocab, const TopicModel* topics,
                                              std::size_t n = 20);

// Plain-text report for the review round trip.
std::string review_report(const ClusterSet& clusters, std::span<const SentenceRecord> corpus,
                          const Vocab& vocab, const TopicModel* topics, std::size_t n = 20);

}  // namespace umtpara

namespace umtpara {

void save_topic_model(const TopicModel& model, const std::filesystem::path& path);
TopicModel load_topic_model(const std::filesystem::path& path);
void save_kmeans_model(const KMeansModel& model, const std::filesystem::path& path);
KMeansModel load_kmeans_model(const std::filesystem::path& path);

}  // namespace umtpara
