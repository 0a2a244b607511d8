#include "umtpara/fixtures.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "umtpara/error.hpp"
#include "umtpara/io.hpp"
#include "umtpara/rng.hpp"

namespace umtpara::fixtures {

namespace {

std::size_t length_between(Rng& rng, std::size_t lo, std::size_t hi) {
  if (lo == 0 || hi < lo) throw InputError("fixture sentence lengths must satisfy 1 <= min <= max");
  return lo + rng.below(hi - lo + 1);
}

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string join(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ' ';
    out += w[i];
  }
  return out;
}

void write_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  write_file_atomic(path, text);
}

}  // namespace

TopicCorpus gen_topic_corpus(const TopicCorpusSpec& spec) {
  if (spec.topics == 0 || spec.words_per_topic == 0) throw InputError("topic fixture needs topics and words");
  Rng rng(spec.seed);
  std::vector<std::pair<std::size_t, std::string>> rows;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t s = 0; s < spec.sentences_per_topic; ++s) {
      const std::size_t len = length_between(rng, spec.min_length, spec.max_length);
      std::vector<std::string> words;
      for (std::size_t i = 0; i < len; ++i) {
        if (spec.shared_words > 0 && rng.uniform() < spec.shared_rate) {
          words.push_back("s" + std::to_string(rng.below(spec.shared_words)));
        } else {
          words.push_back("t" + std::to_string(t) + "w" + std::to_string(rng.below(spec.words_per_topic)));
        }
      }
      if (spec.markers_per_topic > 0) {
        const auto pos = rng.below(words.size() + 1);
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos),
                     "m" + std::to_string(t) + "x" + std::to_string(rng.below(spec.markers_per_topic)));
      }
      rows.emplace_back(t, join(words));
    }
  }
  if (spec.shuffle) shuffle(rows, rng);
  TopicCorpus out;
  for (auto& [t, s] : rows) {
    out.labels.push_back(t);
    out.sentences.push_back(std::move(s));
  }
  return out;
}

void write_topic_corpus(const TopicCorpus& corpus, const std::filesystem::path& corpus_path,
                        const std::filesystem::path& labels_path) {
  write_lines(corpus.sentences, corpus_path);
  std::vector<std::string> labels;
  for (auto l : corpus.labels) labels.push_back(std::to_string(l));
  write_lines(labels, labels_path);
}

DialectCorpus gen_dialect_corpus(const DialectSpec& spec) {
  if (spec.markers == 0 || spec.words_per_slot == 0 || spec.max_markers == 0 || spec.max_markers > spec.markers) {
    throw InputError("dialect fixture needs content words and 1 <= max_markers <= markers");
  }
  if (spec.max_length > spec.slots) throw InputError("dialect fixture: max_length exceeds the slot count");
  Rng rng(spec.seed);
  DialectCorpus out;
  for (std::size_t j = 0; j < spec.markers; ++j) {
    out.dictionary.emplace_back("a" + std::to_string(j), "b" + std::to_string(j));
  }
  // Random subset of `n` values from [0, total), ascending.
  auto subset = [&](std::size_t total, std::size_t n) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(total - i)]);
    all.resize(n);
    std::sort(all.begin(), all.end());
    return all;
  };
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    const auto content = subset(spec.slots, length_between(rng, spec.min_length, spec.max_length));
    const auto markers = subset(spec.markers, 1 + rng.below(spec.max_markers));
    // (slot, 0 = marker / 1 = content, token)
    std::vector<std::tuple<std::size_t, int, std::string>> items;
    for (auto c : content) {
      items.emplace_back(c, 1, "w" + std::to_string(c) + "x" + std::to_string(rng.below(spec.words_per_slot)));
    }
    for (auto m : markers) items.emplace_back(m * spec.slots / spec.markers, 0, "a" + std::to_string(m));
    std::sort(items.begin(), items.end());
    std::vector<std::string> words;
    for (auto& it : items) words.push_back(std::get<2>(it));
    out.a.push_back(join(words));
  }
  out.alignment.resize(spec.sentences);
  std::iota(out.alignment.begin(), out.alignment.end(), 0);
  shuffle(out.alignment, rng);
  out.b.resize(spec.sentences);
  for (std::size_t i = 0; i < spec.sentences; ++i) {
    out.b[out.alignment[i]] = join(to_dialect_b(out, tokenize(out.a[i], {})));
  }
  return out;
}

Tokens to_dialect_b(const DialectCorpus& corpus, const Tokens& a) {
  std::map<std::string, std::string> dict(corpus.dictionary.begin(), corpus.dictionary.end());
  Tokens out;
  for (const auto& w : a) {
    auto it = dict.find(w);
    out.push_back(it == dict.end() ? w : it->second);
  }
  return out;
}

void write_dialect_corpus(const DialectCorpus& corpus, const std::filesystem::path& a_path,
                          const std::filesystem::path& b_path, const std::filesystem::path& alignment_path) {
  write_lines(corpus.a, a_path);
  write_lines(corpus.b, b_path);
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < corpus.alignment.size(); ++i) {
    rows.push_back(std::to_string(i) + '\t' + std::to_string(corpus.alignment[i]));
  }
  write_lines(rows, alignment_path);
}

Blobs gen_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation, std::uint64_t seed) {
  if (dim < k) throw InputError("gen_blobs: dim must be >= k");
  Rng rng(seed);
  std::vector<std::size_t> order(k * per_cluster);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  Blobs out;
  out.table.dim = dim;
  for (auto idx : order) {
    const std::size_t c = idx / per_cluster;
    out.labels.push_back(c);
    for (std::size_t j = 0; j < dim; ++j) out.table.values.push_back(rng.normal() + (j == c ? separation : 0.0));
  }
  return out;
}

double purity(std::span<const ClusterId> assignments, std::span<const std::size_t> labels) {
  if (assignments.size() != labels.size()) throw InputError("purity: assignment and label counts differ");
  if (assignments.empty()) return 0.0;
  std::map<ClusterId, std::map<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[assignments[i]][labels[i]];
  std::size_t majority = 0;
  for (const auto& [c, by_label] : counts) {
    std::size_t best = 0;
    for (const auto& [l, n] : by_label) best = std::max(best, n);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(labels.size());
}

}  // namespace umtpara::fixtures
