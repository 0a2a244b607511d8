#pragma once

// Deterministic synthetic corpora and the oracles that score against them.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtpara/clustering.hpp"
#include "umtpara/corpus.hpp"

namespace umtpara::fixtures {

// Topic t draws its words from "t<t>w<j>", j < words_per_topic. With
// shared_words > 0, every position is replaced by a shared word "s<j>" with
// probability shared_rate; vocabularies stay disjoint otherwise.
struct TopicCorpusSpec {
  std::size_t topics = 3;
  std::size_t words_per_topic = 30;
  std::size_t sentences_per_topic = 200;
  std::size_t min_length = 6;
  std::size_t max_length = 12;
  std::size_t shared_words = 0;
  double shared_rate = 0.0;
  // Topic-specific marker tokens "m<t>x<j>"; each sentence carries one.
  std::size_t markers_per_topic = 0;
  // Sentences are interleaved across topics rather than grouped.
  bool shuffle = true;
  std::uint64_t seed = 0;
};

struct TopicCorpus {
  std::vector<std::string> sentences;
  std::vector<std::size_t> labels;
};

TopicCorpus gen_topic_corpus(const TopicCorpusSpec& spec);
void write_topic_corpus(const TopicCorpus& corpus, const std::filesystem::path& corpus_path,
                        const std::filesystem::path& labels_path);

// Two dialects of one content language. Sentences follow a slot grammar:
// content word "w<s>x<i>" belongs to slot s and words appear in ascending slot
// order, so word order is recoverable from the words alone. Marker "a<j>" sits
// at slot j * slots / markers, ahead of that slot's content word. Every
// sentence carries at least one marker; dialect B swaps "a<j>" for "b<j>".
struct DialectSpec {
  std::size_t sentences = 500;
  std::size_t slots = 10;
  std::size_t words_per_slot = 6;
  std::size_t markers = 6;
  std::size_t min_length = 4;  // content words
  std::size_t max_length = 7;
  std::size_t max_markers = 2;
  std::uint64_t seed = 0;
};

struct DialectCorpus {
  std::vector<std::string> a;
  std::vector<std::string> b;
  // b[alignment[i]] is the dialect-B form of a[i].
  std::vector<std::size_t> alignment;
  std::vector<std::pair<std::string, std::string>> dictionary;
};

DialectCorpus gen_dialect_corpus(const DialectSpec& spec);
void write_dialect_corpus(const DialectCorpus& corpus, const std::filesystem::path& a_path,
                          const std::filesystem::path& b_path, const std::filesystem::path& alignment_path);

// Maps a dialect-A token sequence through the dictionary.
Tokens to_dialect_b(const DialectCorpus& corpus, const Tokens& a);

struct Blobs {
  EmbeddingTable table;
  std::vector<std::size_t> labels;
};

// k isotropic Gaussian blobs with unit spread around centers `separation`
// apart along distinct axes (dim >= k).
Blobs gen_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation, std::uint64_t seed);

// Fraction of items whose cluster's majority label equals their own label.
double purity(std::span<const ClusterId> assignments, std::span<const std::size_t> labels);

// Aligned token accuracy: longest common subsequence over the longer length;
// 1 for two empty sequences. A single inserted or dropped word costs one
// position instead of shifting every later one.
template <typename Seq>
double token_accuracy(const Seq& hypothesis, const Seq& reference) {
  const std::size_t n = std::max(hypothesis.size(), reference.size());
  if (n == 0) return 1.0;
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (std::size_t i = 1; i <= hypothesis.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = hypothesis[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[reference.size()]) / static_cast<double>(n);
}

}  // namespace umtpara::fixtures
