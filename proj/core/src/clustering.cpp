#include "umtpara/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "umtpara/error.hpp"
#include "umtpara/rng.hpp"

namespace umtpara {

namespace {

std::vector<ClusterId> all_clusters(std::size_t k) {
  std::vector<ClusterId> ids(k);
  std::iota(ids.begin(), ids.end(), ClusterId{0});
  return ids;
}

void check_cluster(ClusterId c, std::size_t k) {
  if (c >= k) {
    throw InputError("cluster id " + std::to_string(c) + " outside [0, " + std::to_string(k) +
                     ")");
  }
}

double squared_l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// LDA

TopicModel lda_fit(std::span<const SentenceRecord> corpus, std::size_t vocab_size,
                   const LdaConfig& config) {
  constexpr std::size_t kInitRestarts = 8;
  const std::size_t k = config.k;
  if (k < 2) throw InputError("LDA needs K >= 2");
  if (config.sweeps < 1) throw InputError("LDA needs at least one sweep");
  if (vocab_size == 0) throw InputError("LDA needs a built vocabulary");
  if (corpus.size() < k) {
    throw InputError("corpus has " + std::to_string(corpus.size()) +
                     " sentences, fewer than K=" + std::to_string(k));
  }
  const std::size_t docs = corpus.size();
  const double alpha = config.alpha;
  const double beta = config.beta;
  const double vbeta = beta * static_cast<double>(vocab_size);

  std::vector<std::uint32_t> doc_topic(docs * k, 0);
  std::vector<std::uint32_t> topic_word(k * vocab_size, 0);
  std::vector<std::uint32_t> topic_total(k, 0);
  std::vector<std::vector<std::uint32_t>> z(docs);

  Rng rng(config.seed);
  std::vector<double> weights(k);
  auto sample = [&](std::size_t d, std::size_t w) {
    double total = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      total += (doc_topic[d * k + t] + alpha) * (topic_word[t * vocab_size + w] + beta) /
               (topic_total[t] + vbeta);
      weights[t] = total;
    }
    const double u = rng.uniform() * total;
    std::size_t t = 0;
    while (t + 1 < k && weights[t] <= u) ++t;
    return t;
  };
  auto add = [&](std::size_t d, std::size_t w, std::size_t t) {
    ++doc_topic[d * k + t];
    ++topic_word[t * vocab_size + w];
    ++topic_total[t];
  };

  for (std::size_t d = 0; d < docs; ++d) {
    const auto& ids = corpus[d].ids;
    if (ids.size() != corpus[d].tokens.size()) {
      throw InputError("sentence " + std::to_string(d) + " is not encoded");
    }
    for (auto id : ids) {
      if (static_cast<std::size_t>(id) >= vocab_size) throw InputError("token id outside the vocabulary");
    }
    z[d].resize(ids.size());
  }

  // Initialization treats each sentence as drawn from a single topic (a
  // mixture of unigrams) and places sentences one by one given those before
  // them. Short sentences rarely mix topics, and a uniformly random start
  // needs far more token-level sweeps to separate them. An early unlucky
  // placement can still merge two topics while splitting a third, a state the
  // sweeps do not leave, so several placements are drawn and the one with the
  // highest likelihood seeds the chain.
  std::vector<double> logp(k);
  std::vector<std::size_t> sentences_in(k);
  std::vector<std::uint32_t> topic_of(docs, 0), best_topic_of;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < kInitRestarts; ++restart) {
    std::fill(topic_word.begin(), topic_word.end(), 0);
    std::fill(topic_total.begin(), topic_total.end(), 0);
    std::fill(sentences_in.begin(), sentences_in.end(), 0);
    for (std::size_t d = 0; d < docs; ++d) {
      const auto& ids = corpus[d].ids;
      if (ids.empty()) continue;
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < k; ++t) {
        double lp = std::log(sentences_in[t] + alpha);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto w = static_cast<std::size_t>(ids[i]);
          // Earlier tokens of this sentence count as already placed in t.
          std::size_t seen = 0;
          for (std::size_t j = 0; j < i; ++j) seen += ids[j] == ids[i] ? 1 : 0;
          lp += std::log((topic_word[t * vocab_size + w] + seen + beta) / (topic_total[t] + i + vbeta));
        }
        logp[t] = lp;
        top = std::max(top, lp);
      }
      double total = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        total += std::exp(logp[t] - top);
        weights[t] = total;
      }
      const double u = rng.uniform() * total;
      std::size_t t = 0;
      while (t + 1 < k && weights[t] <= u) ++t;
      topic_of[d] = static_cast<std::uint32_t>(t);
      ++sentences_in[t];
      for (auto id : ids) {
        ++topic_word[t * vocab_size + static_cast<std::size_t>(id)];
        ++topic_total[t];
      }
    }
    double score = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t w = 0; w < vocab_size; ++w) {
        const auto n = topic_word[t * vocab_size + w];
        if (n > 0) score += n * std::log((n + beta) / (topic_total[t] + vbeta));
      }
    }
    if (score > best_score) {
      best_score = score;
      best_topic_of = topic_of;
    }
  }
  std::fill(topic_word.begin(), topic_word.end(), 0);
  std::fill(topic_total.begin(), topic_total.end(), 0);
  for (std::size_t d = 0; d < docs; ++d) {
    const auto& ids = corpus[d].ids;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      z[d][i] = best_topic_of[d];
      add(d, static_cast<std::size_t>(ids[i]), best_topic_of[d]);
    }
  }

  for (std::size_t sweep = 0; sweep < config.sweeps; ++sweep) {
    for (std::size_t d = 0; d < docs; ++d) {
      const auto& ids = corpus[d].ids;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto w = static_cast<std::size_t>(ids[i]);
        const auto old = z[d][i];
        --doc_topic[d * k + old];
        --topic_word[old * vocab_size + w];
        --topic_total[old];
        const auto t = sample(d, w);
        z[d][i] = static_cast<std::uint32_t>(t);
        add(d, w, t);
      }
    }
  }

  TopicModel model;
  model.k = k;
  model.vocab_size = vocab_size;
  model.alpha = alpha;
  model.beta = beta;
  model.sweeps = config.sweeps;
  model.phi.resize(k * vocab_size);
  for (std::size_t t = 0; t < k; ++t) {
    const double denom = topic_total[t] + vbeta;
    double sum = 0.0;
    for (std::size_t w = 0; w < vocab_size; ++w) {
      const double p = (topic_word[t * vocab_size + w] + beta) / denom;
      model.phi[t * vocab_size + w] = p;
      sum += p;
    }
    // Renormalize away accumulated rounding so rows sum to 1 to ~1 ulp.
    for (std::size_t w = 0; w < vocab_size; ++w) model.phi[t * vocab_size + w] /= sum;
  }
  model.assignments.resize(docs);
  // An empty sentence scores 0 under every topic, so the tie rule gives cluster 0.
  for (std::size_t d = 0; d < docs; ++d) {
    model.assignments[d] = corpus[d].ids.empty() ? 0 : lda_assign(model, corpus[d].ids);
  }
  return model;
}

ClusterId lda_assign(const TopicModel& model, std::span<const TokenId> sentence,
                     std::span<const ClusterId> active) {
  if (sentence.empty()) throw InputError("cannot route an empty sentence");
  if (model.k == 0) throw InputError("topic model is not fitted");
  std::vector<ClusterId> all;
  if (active.empty()) {
    all = all_clusters(model.k);
    active = all;
  }
  ClusterId best = active.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (ClusterId c : active) {
    check_cluster(c, model.k);
    double score = 0.0;
    for (TokenId w : sentence) {
      const auto idx = static_cast<std::size_t>(w) < model.vocab_size ? w : Vocab::kUnk;
      score += std::log(model.prob(c, idx));
    }
    if (score > best_score || (score == best_score && c < best)) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_rows) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embedding file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.rfind("d=", 0) != 0) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": expected header d=<int>");
    }
    try {
      dim = std::stoul(line.substr(2));
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad dimension header");
    }
    if (dim == 0) throw InputError(path.string() + ": dimension must be positive");
    break;
  }
  if (dim == 0) throw InputError(path.string() + ": empty embedding file");

  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::size_t id;
    if (!(is >> id)) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": missing sentence id");
    }
    std::vector<double> vals;
    double v;
    while (is >> v) {
      if (!std::isfinite(v)) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      }
      vals.push_back(v);
    }
    if (!is.eof()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": unparsable value");
    }
    if (vals.size() != dim) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": row for sentence " +
                       std::to_string(id) + " has " + std::to_string(vals.size()) +
                       " values, header declares d=" + std::to_string(dim));
    }
    rows.emplace_back(id, std::move(vals));
  }
  if (rows.empty()) throw InputError(path.string() + ": no embedding rows");

  const std::size_t n = expected_rows.value_or(rows.size());
  EmbeddingTable table;
  table.dim = dim;
  table.values.assign(n * dim, 0.0);
  std::vector<bool> seen(n, false);
  for (auto& [id, vals] : rows) {
    if (id >= n) {
      throw InputError(path.string() + ": sentence id " + std::to_string(id) +
                       " outside the corpus of " + std::to_string(n) + " sentences");
    }
    if (seen[id]) throw InputError(path.string() + ": duplicate row for sentence " + std::to_string(id));
    seen[id] = true;
    std::copy(vals.begin(), vals.end(), table.values.begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw InputError(path.string() + ": missing embedding for sentence " + std::to_string(i));
  }
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "d=" << table.dim << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << r;
    for (double v : table.row(r)) out << ' ' << v;
    out << '\n';
  }
}

EmbeddingTable hashed_embeddings(std::span<const SentenceRecord> corpus, std::size_t dim) {
  if (dim == 0) throw InputError("embedding dimension must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.values.assign(corpus.size() * dim, 0.0);
  std::vector<double> vec(dim);
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& toks = corpus[r].tokens;
    if (toks.empty()) continue;
    for (const auto& t : toks) {
      std::uint64_t h = 14695981039346656037ULL;
      for (unsigned char c : t) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      Rng rng(h);
      for (std::size_t j = 0; j < dim; ++j) table.values[r * dim + j] += rng.normal();
    }
    for (std::size_t j = 0; j < dim; ++j) table.values[r * dim + j] /= static_cast<double>(toks.size());
  }
  return table;
}

// ---------------------------------------------------------------------------
// K-means

KMeansModel kmeans_fit(const EmbeddingTable& table, std::size_t k, std::size_t max_iter,
                       std::uint64_t seed) {
  const std::size_t n = table.rows();
  const std::size_t dim = table.dim;
  if (k < 1) throw InputError("K-means needs K >= 1");
  if (k > n) {
    throw InputError("K=" + std::to_string(k) + " exceeds the number of points (" +
                     std::to_string(n) + ")");
  }
  KMeansModel model;
  model.k = k;
  model.dim = dim;
  model.centers.assign(k * dim, 0.0);

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.push_back(static_cast<std::size_t>(rng.below(n)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const auto last = table.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_l2(table.row(i), last));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Degenerate geometry: every point coincides with a center already.
      while (std::find(chosen.begin(), chosen.end(), pick) != chosen.end()) ++pick;
    }
    chosen.push_back(pick);
  }
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = table.row(chosen[c]);
    std::copy(src.begin(), src.end(), model.centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
  }

  model.assignments.assign(n, 0);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = table.row(i);
      ClusterId best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_l2(row, model.center(static_cast<ClusterId>(c)));
        if (d < best_d) {
          best_d = d;
          best = static_cast<ClusterId>(c);
        }
      }
      if (iter == 0 || model.assignments[i] != best) changed = true;
      model.assignments[i] = best;
      sse += best_d;
    }
    model.sse_history.push_back(sse);
    model.iterations = iter + 1;
    if (!changed || iter + 1 >= max_iter) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = model.assignments[i];
      ++counts[c];
      const auto row = table.row(i);
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // an empty cluster keeps its center
      for (std::size_t j = 0; j < dim; ++j) {
        model.centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
    }
  }
  return model;
}

ClusterId kmeans_assign(const KMeansModel& model, std::span<const double> embedding,
                        std::span<const ClusterId> active) {
  if (embedding.size() != model.dim) {
    throw ShapeError("embedding has dimension " + std::to_string(embedding.size()) +
                     ", model expects " + std::to_string(model.dim));
  }
  std::vector<ClusterId> all;
  if (active.empty()) {
    all = all_clusters(model.k);
    active = all;
  }
  ClusterId best = active.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (ClusterId c : active) {
    check_cluster(c, model.k);
    const double d = squared_l2(embedding, model.center(c));
    if (d < best_d || (d == best_d && c < best)) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Distances

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("KL between distributions of different support");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw NumericError("KL divergence with zero mass in the denominator");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  return kl_divergence(p, q) + kl_divergence(q, p);
}

double cluster_distance(const TopicModel& model, ClusterId m, ClusterId n) {
  check_cluster(m, model.k);
  check_cluster(n, model.k);
  if (m == n) return 0.0;
  return symmetric_kl(model.row(m), model.row(n));
}

double cluster_distance(const KMeansModel& model, ClusterId m, ClusterId n) {
  check_cluster(m, model.k);
  check_cluster(n, model.k);
  if (m == n) return 0.0;
  return std::sqrt(squared_l2(model.center(m), model.center(n)));
}

namespace {

template <typename Model>
DistanceMatrix tabulate(const Model& model) {
  DistanceMatrix dm(model.k);
  for (ClusterId m = 0; m < model.k; ++m) {
    for (ClusterId n = m + 1; n < model.k; ++n) {
      const double d = cluster_distance(model, m, n);
      dm(m, n) = d;
      dm(n, m) = d;
    }
  }
  return dm;
}

}  // namespace

DistanceMatrix distance_matrix(const TopicModel& model) { return tabulate(model); }
DistanceMatrix distance_matrix(const KMeansModel& model) { return tabulate(model); }

void DistanceMatrix::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t m = 0; m < k_; ++m) {
    for (std::size_t n = 0; n < k_; ++n) {
      if (n > 0) out << '\t';
      out << values_[m * k_ + n];
    }
    out << '\n';
  }
}

DistanceMatrix DistanceMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::vector<double> row;
    double v;
    while (is >> v) row.push_back(v);
    rows.push_back(std::move(row));
  }
  DistanceMatrix dm(rows.size());
  for (std::size_t m = 0; m < rows.size(); ++m) {
    if (rows[m].size() != rows.size()) throw InputError(path.string() + ": matrix is not square");
    for (std::size_t n = 0; n < rows.size(); ++n) dm.values_[m * dm.k_ + n] = rows[m][n];
  }
  return dm;
}

// ---------------------------------------------------------------------------
// Cluster sets and review

std::string to_string(ClusteringKind kind) {
  return kind == ClusteringKind::kLda ? "lda" : "kmeans";
}

ClusteringKind parse_clustering_kind(std::string_view name) {
  if (name == "lda") return ClusteringKind::kLda;
  if (name == "kmeans") return ClusteringKind::kKMeans;
  throw InputError("unknown clustering kind '" + std::string(name) + "' (expected lda|kmeans)");
}

bool ClusterSet::is_active(ClusterId c) const {
  return std::binary_search(active.begin(), active.end(), c);
}

ClusterSet make_cluster_set(ClusteringKind kind, std::size_t k,
                            std::span<const ClusterId> assignments) {
  ClusterSet set;
  set.kind = kind;
  set.k = k;
  set.active = all_clusters(k);
  set.members.resize(k);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    check_cluster(assignments[i], k);
    set.members[assignments[i]].push_back(static_cast<std::uint32_t>(i));
  }
  return set;
}

ReviewDecisions load_review(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read review decisions " + path.string());
  ReviewDecisions out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string id, verdict, note;
    std::getline(is, id, '\t');
    std::getline(is, verdict, '\t');
    std::getline(is, note);
    ReviewDecision d;
    try {
      d.cluster = static_cast<ClusterId>(std::stoul(id));
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad cluster id");
    }
    if (verdict == "keep") {
      d.keep = true;
    } else if (verdict == "discard") {
      d.keep = false;
    } else {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": verdict must be keep|discard, got '" + verdict + "'");
    }
    d.note = note;
    out.push_back(std::move(d));
  }
  return out;
}

void save_review(const ReviewDecisions& decisions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : decisions) {
    out << d.cluster << '\t' << (d.keep ? "keep" : "discard") << '\t' << d.note << '\n';
  }
}

ClusterSet apply_review(const ClusterSet& clusters, const ReviewDecisions& decisions) {
  std::vector<bool> discard(clusters.k, false);
  for (const auto& d : decisions) {
    check_cluster(d.cluster, clusters.k);
    discard[d.cluster] = !d.keep;
  }
  ClusterSet out = clusters;
  out.active.clear();
  for (ClusterId c : clusters.active) {
    if (!discard[c]) out.active.push_back(c);
  }
  if (out.active.size() < 2) {
    throw InputError("review keeps " + std::to_string(out.active.size()) +
                     " cluster(s); at least 2 must remain");
  }
  return out;
}

void save_assignments(std::span<const ClusterId> assignments, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < assignments.size(); ++i) out << i << '\t' << assignments[i] << '\n';
}

std::vector<ClusterId> load_assignments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ClusterId> out;
  std::size_t id;
  ClusterId c;
  while (in >> id >> c) {
    if (id != out.size()) throw InputError(path.string() + ": sentence ids must be dense and ordered");
    out.push_back(c);
  }
  return out;
}

std::vector<std::vector<TopToken>> top_tokens(const ClusterSet& clusters,
                                              std::span<const SentenceRecord> corpus,
                                              const Vocab& vocab, const TopicModel* topics,
                                              std::size_t n) {
  std::vector<std::vector<TopToken>> out(clusters.k);
  std::vector<double> dist(vocab.size());
  for (ClusterId c = 0; c < clusters.k; ++c) {
    if (topics != nullptr) {
      const auto row = topics->row(c);
      std::copy(row.begin(), row.end(), dist.begin());
    } else {
      std::fill(dist.begin(), dist.end(), 0.0);
      double total = 0.0;
      for (auto s : clusters.members[c]) {
        for (TokenId w : corpus[s].ids) {
          dist[static_cast<std::size_t>(w)] += 1.0;
          total += 1.0;
        }
      }
      if (total > 0.0) {
        for (auto& v : dist) v /= total;
      }
    }
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return dist[a] > dist[b] || (dist[a] == dist[b] && a < b);
                      });
    for (std::size_t i = 0; i < take; ++i) {
      out[c].push_back({vocab.token(static_cast<TokenId>(order[i])), dist[order[i]]});
    }
  }
  return out;
}

std::string review_report(const ClusterSet& clusters, std::span<const SentenceRecord> corpus,
                          const Vocab& vocab, const TopicModel* topics, std::size_t n) {
  const auto tops = top_tokens(clusters, corpus, vocab, topics, n);
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  for (ClusterId c = 0; c < clusters.k; ++c) {
    os << "cluster " << c << "\tmembers=" << clusters.members[c].size()
       << "\tactive=" << (clusters.is_active(c) ? "yes" : "no") << '\n';
    for (const auto& t : tops[c]) os << "  " << t.token << '\t' << t.prob << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Model files

void save_topic_model(const TopicModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["kind"] = "lda";
  j["k"] = model.k;
  j["vocab_size"] = model.vocab_size;
  j["alpha"] = model.alpha;
  j["beta"] = model.beta;
  j["sweeps"] = model.sweeps;
  j["phi"] = model.phi;
  j["assignments"] = model.assignments;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

TopicModel load_topic_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind") != "lda") throw InputError(path.string() + ": not an LDA model");
    TopicModel m;
    m.k = j.at("k");
    m.vocab_size = j.at("vocab_size");
    m.alpha = j.at("alpha");
    m.beta = j.at("beta");
    m.sweeps = j.at("sweeps");
    m.phi = j.at("phi").get<std::vector<double>>();
    m.assignments = j.at("assignments").get<std::vector<ClusterId>>();
    if (m.phi.size() != m.k * m.vocab_size) throw InputError(path.string() + ": phi has wrong size");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void save_kmeans_model(const KMeansModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["kind"] = "kmeans";
  j["k"] = model.k;
  j["dim"] = model.dim;
  j["centers"] = model.centers;
  j["assignments"] = model.assignments;
  j["sse_history"] = model.sse_history;
  j["iterations"] = model.iterations;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

KMeansModel load_kmeans_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind") != "kmeans") throw InputError(path.string() + ": not a K-means model");
    KMeansModel m;
    m.k = j.at("k");
    m.dim = j.at("dim");
    m.centers = j.at("centers").get<std::vector<double>>();
    m.assignments = j.at("assignments").get<std::vector<ClusterId>>();
    m.sse_history = j.at("sse_history").get<std::vector<double>>();
    m.iterations = j.at("iterations");
    if (m.centers.size() != m.k * m.dim) throw InputError(path.string() + ": centers have wrong size");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace umtpara
