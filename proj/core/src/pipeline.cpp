#include "umtpara/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "umtpara/error.hpp"
#include "umtpara/io.hpp"
#include "umtpara/rng.hpp"

namespace umtpara::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Seed salts so that every stage draws from its own stream.
enum Salt : std::uint64_t {
  kSaltLda = 100,
  kSaltKMeans = 101,
  kSaltPairing = 200,
  kSaltScorePairs = 201,
  kSaltUmt = 300,
  kSaltDistill = 400,
  kSaltSurrogate = 500,
  kSaltFinetune = 600,
};

class Workspace {
 public:
  explicit Workspace(const PipelineConfig& config) : config_(config), dir_(config.out_dir) {
    fs::create_directories(dir_);
  }

  const PipelineConfig& config() const { return config_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  // Registers an upstream artifact; throws when it has not been produced.
  fs::path input(const std::string& name, const std::string& producer) {
    const auto p = path(name);
    if (!fs::exists(p)) throw MissingArtifactError(producer, p.string());
    inputs_.push_back(name);
    return p;
  }

  void external(const fs::path& p) { external_.push_back(p); }

  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    const auto p = path(name);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }

  void record(const std::string& stage, double seconds, const json& summary) const {
    json manifest = json::object();
    const auto mp = path(artifacts::kManifest);
    if (fs::exists(mp)) {
      try {
        manifest = json::parse(read_file(mp));
      } catch (const json::exception&) {
        manifest = json::object();
      }
    }
    auto digests = [&](const std::vector<std::string>& names) {
      json out = json::object();
      for (const auto& n : names) out[n] = sha256_file(path(n));
      return out;
    };
    json ext = json::object();
    for (const auto& p : external_) ext[p.string()] = sha256_file(p);
    manifest["version"] = kVersion;
    manifest["config"] = config_.snapshot();
    manifest["stages"][stage] = {{"inputs", digests(inputs_)},
                                 {"external_inputs", ext},
                                 {"outputs", digests(outputs_)},
                                 {"seconds", seconds},
                                 {"summary", summary}};
    json all = json::object();
    for (const auto& [name, s] : manifest["stages"].items()) {
      for (const auto& [file, digest] : s["outputs"].items()) all[file] = digest;
    }
    manifest["artifacts"] = all;
    write_file_atomic(mp, manifest.dump(2) + "\n");
  }

 private:
  const PipelineConfig& config_;
  fs::path dir_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::vector<fs::path> external_;
};

std::vector<SentenceRecord> load_records(Workspace& ws) {
  const auto& c = ws.config();
  const auto path = c.resolve(c.corpus_path);
  ws.external(path);
  auto records = load_corpus(path, c.corpus_format, c.tokenizer);
  if (c.corpus_limit > 0 && records.size() > c.corpus_limit) records.resize(c.corpus_limit);
  return records;
}

Vocab load_vocab(Workspace& ws) { return Vocab::load(ws.input(artifacts::kVocab, "cluster")); }

std::vector<SentenceRecord> load_encoded(Workspace& ws, const Vocab& vocab) {
  auto records = load_records(ws);
  encode_corpus(records, vocab);
  return records;
}

nn::TransformerConfig model_config(const PipelineConfig& c, const Vocab& vocab) {
  auto m = c.model;
  m.vocab_size = vocab.size();
  return m;
}

// Cluster set with review decisions applied and empty clusters dropped.
struct Clusters {
  ClusterSet set;
  std::vector<ClusterId> assignments;
};

Clusters load_clusters(Workspace& ws) {
  const auto& c = ws.config();
  const auto meta = json::parse(read_file(ws.input(artifacts::kClusters, "cluster")));
  Clusters out;
  out.assignments = load_assignments(ws.input(artifacts::kAssignments, "cluster"));
  out.set = make_cluster_set(parse_clustering_kind(meta.at("kind").get<std::string>()), meta.at("k").get<std::size_t>(),
                             out.assignments);
  if (!c.review.empty()) {
    ws.external(c.resolve(c.review));
    out.set = apply_review(out.set, load_review(c.resolve(c.review)));
  }
  std::vector<ClusterId> active;
  for (auto id : out.set.active) {
    if (!out.set.members[id].empty()) active.push_back(id);
  }
  if (active.size() < 2) throw Error("fewer than 2 non-empty active clusters remain");
  out.set.active = active;
  return out;
}

std::vector<TokenIds> member_ids(const ClusterSet& set, ClusterId c, const std::vector<SentenceRecord>& records) {
  std::vector<TokenIds> out;
  for (auto i : set.members.at(c)) {
    if (!records.at(i).ids.empty()) out.push_back(records[i].ids);
  }
  return out;
}

template <typename Job>
void run_pool(std::size_t jobs, std::size_t workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        job(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, jobs));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::pair<Tokens, Tokens>> load_labeled(const PipelineConfig& c, const fs::path& p,
                                                    const std::string& field) {
  if (p.empty()) throw ConfigError(field, "required by this stage");
  return surrogate::load_labeled_pairs(c.resolve(p), c.tokenizer);
}

// Corpus-level iBLEU of a UMT model translating the dev sources src -> tgt.
double dev_ibleu(const umt::UmtModel<float>& model, const Vocab& vocab,
                 const std::vector<std::pair<Tokens, Tokens>>& dev, const metrics::MetricConfig& mc) {
  std::vector<metrics::EvalTriple> triples;
  std::vector<TokenIds> sources;
  for (const auto& [s, r] : dev) {
    if (!s.empty() && !r.empty()) sources.push_back(encode(s, vocab));
  }
  const auto outs = umt::translate_batch(model, sources, umt::Lang::kSrc, umt::Lang::kTgt);
  std::size_t i = 0;
  for (const auto& [s, r] : dev) {
    if (s.empty() || r.empty()) continue;
    triples.push_back({s, r, decode(outs[i++], vocab)});
  }
  if (triples.empty()) throw InputError("dev set has no usable pairs");
  return metrics::evaluate(triples, mc).ibleu;
}

umt::UmtTrainResult<float> train_pair(const PipelineConfig& c, const Vocab& vocab, const Clusters& cl,
                                      const std::vector<SentenceRecord>& records, ClusterId src, ClusterId tgt,
                                      std::uint64_t salt) {
  auto cfg = c.umt;
  cfg.seed = Rng::derive(c.seed, salt);
  const auto a = member_ids(cl.set, src, records);
  const auto b = member_ids(cl.set, tgt, records);
  auto result = umt::train_umt<float>(a, b, model_config(c, vocab), cfg);
  result.model.vocab_fingerprint = vocab.fingerprint();
  return result;
}

DistanceMatrix load_distances(Workspace& ws) { return DistanceMatrix::load(ws.input(artifacts::kDistances, "cluster")); }

// ---------------------------------------------------------------------------

json stage_cluster(Workspace& ws) {
  const auto& c = ws.config();
  auto records = load_records(ws);
  if (records.empty()) throw InputError("corpus is empty");
  const Vocab vocab = build_vocab(records, c.min_count, c.max_vocab);
  vocab.save(ws.output(artifacts::kVocab));
  encode_corpus(records, vocab);

  std::vector<ClusterId> assignments;
  DistanceMatrix dist;
  if (c.clustering == ClusteringKind::kLda) {
    auto cfg = c.lda;
    cfg.seed = Rng::derive(c.seed, kSaltLda);
    const auto model = lda_fit(records, vocab.size(), cfg);
    save_topic_model(model, ws.output(artifacts::kTopicModel));
    assignments = model.assignments;
    dist = distance_matrix(model);
  } else {
    EmbeddingTable table;
    if (!c.embeddings.empty()) {
      ws.external(c.resolve(c.embeddings));
      table = load_embeddings(c.resolve(c.embeddings), records.size());
    } else {
      table = hashed_embeddings(records, c.embedding_dim);
    }
    save_embeddings(table, ws.output(artifacts::kEmbeddings));
    const auto model = kmeans_fit(table, c.lda.k, c.kmeans_max_iter, Rng::derive(c.seed, kSaltKMeans));
    save_kmeans_model(model, ws.output(artifacts::kKMeansModel));
    assignments = model.assignments;
    dist = distance_matrix(model);
  }
  save_assignments(assignments, ws.output(artifacts::kAssignments));
  dist.save(ws.output(artifacts::kDistances));
  const auto set = make_cluster_set(c.clustering, c.lda.k, assignments);
  std::vector<std::size_t> sizes;
  for (const auto& m : set.members) sizes.push_back(m.size());
  const json meta = {{"kind", to_string(c.clustering)}, {"k", c.lda.k}, {"sizes", sizes}};
  write_file_atomic(ws.output(artifacts::kClusters), meta.dump(2) + "\n");
  return {{"sentences", records.size()}, {"vocab", vocab.size()}, {"cluster_sizes", sizes}};
}

json stage_review_report(Workspace& ws) {
  const auto vocab = load_vocab(ws);
  const auto records = load_encoded(ws, vocab);
  auto cl = load_clusters(ws);
  std::optional<TopicModel> topics;
  if (cl.set.kind == ClusteringKind::kLda) topics = load_topic_model(ws.input(artifacts::kTopicModel, "cluster"));
  write_file_atomic(ws.output(artifacts::kReviewReport),
                    review_report(cl.set, records, vocab, topics ? &*topics : nullptr, 20));
  ReviewDecisions decisions;
  for (std::size_t k = 0; k < cl.set.k; ++k) decisions.push_back({static_cast<ClusterId>(k), true, ""});
  save_review(decisions, ws.output(artifacts::kReviewTemplate));
  return {{"clusters", cl.set.k}};
}

pairing::ScoreFunction fit_from_dev(Workspace& ws, const Vocab& vocab, const Clusters& cl,
                                    const std::vector<SentenceRecord>& records, const DistanceMatrix& dist,
                                    json& summary) {
  const auto& c = ws.config();
  std::vector<pairing::ScoreSample> samples;
  if (!c.score_samples.empty()) {
    ws.external(c.resolve(c.score_samples));
    std::istringstream is(read_file(c.resolve(c.score_samples)));
    double d, s;
    while (is >> d >> s) samples.push_back({d, s});
  } else {
    ws.external(c.resolve(c.dev));
    const auto dev = load_labeled(c, c.dev, "pairing.dev");
    std::vector<std::pair<ClusterId, ClusterId>> all;
    for (auto a : cl.set.active) {
      for (auto b : cl.set.active) {
        if (a != b) all.emplace_back(a, b);
      }
    }
    Rng rng(Rng::derive(c.seed, kSaltScorePairs));
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
    all.resize(std::min(all.size(), c.score_pairs));
    samples.resize(all.size());
    run_pool(all.size(), c.workers, [&](std::size_t j) {
      const auto [a, b] = all[j];
      const auto r = train_pair(c, vocab, cl, records, a, b, kSaltUmt + 1000 + j);
      samples[j] = {dist(a, b), dev_ibleu(r.model, vocab, dev, c.metrics)};
    });
  }
  const auto f = pairing::fit_score_function(samples, c.score_degree);
  summary["score_samples"] = samples.size();
  json j = {{"coefficients", f.coefficients}, {"residual", f.residual}, {"samples", f.samples}};
  write_file_atomic(ws.output(artifacts::kScoreFunction), j.dump(2) + "\n");
  return f;
}

json stage_pair(Workspace& ws) {
  const auto& c = ws.config();
  const auto cl = load_clusters(ws);
  const auto dist = load_distances(ws);
  json summary = {{"strategy", pairing::to_string(c.strategy)}};
  pairing::PairingPlan plan;
  if (c.strategy == pairing::Strategy::kSupervised) {
    const auto vocab = load_vocab(ws);
    const auto records = load_encoded(ws, vocab);
    const auto f = fit_from_dev(ws, vocab, cl, records, dist, summary);
    plan = pairing::pair_supervised(cl.set.active, dist, f);
  } else if (c.strategy == pairing::Strategy::kExhaustive) {
    const auto vocab = load_vocab(ws);
    const auto records = load_encoded(ws, vocab);
    ws.external(c.resolve(c.dev));
    const auto dev = load_labeled(c, c.dev, "pairing.dev");
    std::map<std::pair<ClusterId, ClusterId>, double> scores;
    std::vector<std::pair<ClusterId, ClusterId>> all;
    for (auto a : cl.set.active) {
      for (auto b : cl.set.active) {
        if (a != b) all.emplace_back(a, b);
      }
    }
    if (cl.set.active.size() > pairing::kMaxExhaustiveClusters) {
      throw ConfigError("pairing.strategy", "exhaustive search supports at most 8 active clusters");
    }
    std::vector<double> values(all.size());
    run_pool(all.size(), c.workers, [&](std::size_t j) {
      const auto r = train_pair(c, vocab, cl, records, all[j].first, all[j].second, kSaltUmt + 2000 + j);
      values[j] = dev_ibleu(r.model, vocab, dev, c.metrics);
    });
    for (std::size_t j = 0; j < all.size(); ++j) scores[all[j]] = values[j];
    plan = pairing::pair_exhaustive(cl.set.active, [&](ClusterId a, ClusterId b) { return scores.at({a, b}); });
  } else {
    plan = pairing::pair_clusters(cl.set.active, dist, c.strategy, Rng::derive(c.seed, kSaltPairing));
  }
  pairing::save_plan(plan, ws.output(artifacts::kPlan));
  summary["pairs"] = plan.size();
  return summary;
}

pairing::PairingPlan load_plan(Workspace& ws) { return pairing::load_plan(ws.input(artifacts::kPlan, "pair")); }

json stage_train_umt(Workspace& ws) {
  const auto& c = ws.config();
  const auto vocab = load_vocab(ws);
  const auto records = load_encoded(ws, vocab);
  const auto cl = load_clusters(ws);
  const auto plan = load_plan(ws);
  std::vector<fs::path> ckpts, logs;
  for (const auto& e : plan) {
    if (!cl.set.is_active(e.src) || !cl.set.is_active(e.tgt)) {
      throw InputError("plan pairs inactive cluster " + std::to_string(e.src) + " -> " + std::to_string(e.tgt));
    }
    const auto name = umt_checkpoint_name(e.src, e.tgt);
    ckpts.push_back(ws.output(std::string(artifacts::kUmtDir) + "/" + name + ".ckpt"));
    logs.push_back(ws.output(std::string(artifacts::kUmtDir) + "/" + name + ".csv"));
  }
  std::vector<json> finals(plan.size());
  run_pool(plan.size(), c.workers, [&](std::size_t j) {
    const auto& e = plan[j];
    const auto r = train_pair(c, vocab, cl, records, e.src, e.tgt, kSaltUmt + e.src);
    umt::save_umt(r.model, ckpts[j]);
    write_file_atomic(logs[j], umt::loss_history_csv(r.history));
    if (!r.history.empty()) {
      finals[j] = {{"src", e.src}, {"tgt", e.tgt}, {"first_total", r.history.front().total},
                   {"last_total", r.history.back().total}};
    }
  });
  return {{"models", plan.size()}, {"runs", finals}};
}

json stage_distill(Workspace& ws) {
  const auto& c = ws.config();
  const auto vocab = load_vocab(ws);
  auto records = load_encoded(ws, vocab);
  const auto cl = load_clusters(ws);
  const auto plan = load_plan(ws);

  std::optional<TopicModel> topics;
  std::optional<KMeansModel> km;
  std::optional<EmbeddingTable> table;
  std::optional<pseudo::Router> router;
  if (cl.set.kind == ClusteringKind::kLda) {
    topics = load_topic_model(ws.input(artifacts::kTopicModel, "cluster"));
    router = pseudo::Router::lda(*topics, cl.set.active);
  } else {
    km = load_kmeans_model(ws.input(artifacts::kKMeansModel, "cluster"));
    table = load_embeddings(ws.input(artifacts::kEmbeddings, "cluster"));
    router = pseudo::Router::kmeans(*km, *table, cl.set.active);
  }

  std::map<ClusterId, std::shared_ptr<umt::UmtModel<float>>> models;
  std::map<ClusterId, pseudo::ModelHandle> handles;
  for (const auto& e : plan) {
    const auto name = umt_checkpoint_name(e.src, e.tgt);
    auto model = std::make_shared<umt::UmtModel<float>>(
        umt::load_umt<float>(ws.input(std::string(artifacts::kUmtDir) + "/" + name + ".ckpt", "train-umt")));
    if (model->vocab_fingerprint != vocab.fingerprint()) {
      throw InputError("UMT model " + name + " was trained with a different vocabulary");
    }
    models[e.src] = model;
    const std::size_t chunk = c.decode_batch;
    handles[e.src] = {name, [model, &vocab, chunk](std::span<const SentenceRecord* const> batch) {
                        std::vector<Tokens> out;
                        for (std::size_t b = 0; b < batch.size(); b += chunk) {
                          std::vector<TokenIds> ids;
                          for (std::size_t i = b; i < std::min(batch.size(), b + chunk); ++i) ids.push_back(batch[i]->ids);
                          for (const auto& y : umt::translate_batch(*model, ids, umt::Lang::kSrc, umt::Lang::kTgt)) {
                            out.push_back(decode(y, vocab));
                          }
                        }
                        return out;
                      }};
  }

  // Seeded selection of the sentences to translate, kept in corpus order.
  std::vector<SentenceRecord> selected;
  if (c.sample_fraction < 1.0) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(Rng::derive(c.seed, kSaltDistill));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(static_cast<std::size_t>(c.sample_fraction * static_cast<double>(records.size())));
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) selected.push_back(records[i]);
  } else {
    selected = std::move(records);
  }
  const auto pairs = pseudo::generate_pairs(selected, *router, handles, c.workers);
  pseudo::save_pairs(pairs, ws.output(artifacts::kPairs));
  return {{"pairs", pairs.size()}};
}

json stage_filter(Workspace& ws) {
  const auto& c = ws.config();
  const auto pairs = pseudo::load_pairs(ws.input(artifacts::kPairs, "distill"));
  const auto result = pseudo::run_filters(pairs, c.filters);
  pseudo::save_pairs(result.kept, ws.output(artifacts::kFilteredPairs));
  const auto report = pseudo::to_json(result.report);
  write_file_atomic(ws.output(artifacts::kFilterReport), report.dump(2) + "\n");
  return report;
}

surrogate::PairSet filtered_pair_set(Workspace& ws, const Vocab& vocab) {
  const auto pairs = pseudo::load_pairs(ws.input(artifacts::kFilteredPairs, "filter"));
  std::vector<std::pair<Tokens, Tokens>> raw;
  for (const auto& p : pairs) raw.emplace_back(p.src, p.tgt);
  return surrogate::encode_pairs(raw, vocab);
}

json stage_train_surrogate(Workspace& ws) {
  const auto& c = ws.config();
  const auto vocab = load_vocab(ws);
  const auto set = filtered_pair_set(ws, vocab);
  if (set.examples.empty()) throw Error("no pseudo pairs survived filtering; nothing to train on");
  auto cfg = c.surrogate;
  cfg.seed = Rng::derive(c.seed, kSaltSurrogate);
  const auto r = surrogate::train_surrogate<float>(set, model_config(c, vocab), cfg);
  surrogate::save_surrogate(r.model, ws.output(artifacts::kSurrogate));
  write_file_atomic(ws.output(artifacts::kSurrogateLog), surrogate::epoch_history_csv(r.history.epochs));
  return {{"pairs", set.examples.size()},
          {"epochs", r.history.epochs.size()},
          {"first_epoch_loss", r.history.epochs.empty() ? 0.0 : r.history.epochs.front().mean_loss},
          {"last_epoch_loss", r.history.epochs.empty() ? 0.0 : r.history.epochs.back().mean_loss}};
}

json stage_finetune(Workspace& ws) {
  const auto& c = ws.config();
  const auto vocab = load_vocab(ws);
  auto model = surrogate::load_surrogate<float>(ws.input(artifacts::kSurrogate, "train-surrogate"));
  ws.external(c.resolve(c.labeled));
  const auto labeled = load_labeled(c, c.labeled, "finetune.labeled");
  const auto set = surrogate::encode_pairs(labeled, vocab);
  auto cfg = c.finetune;
  cfg.seed = Rng::derive(c.seed, kSaltFinetune);
  const double before = surrogate::evaluate_loss(model, set);
  const auto h = surrogate::finetune(model, set, cfg);
  const double after = surrogate::evaluate_loss(model, set);
  surrogate::save_surrogate(model, ws.output(artifacts::kFinetuned));
  write_file_atomic(ws.output(artifacts::kFinetuneLog), surrogate::epoch_history_csv(h.epochs));
  return {{"pairs", set.examples.size()}, {"loss_before", before}, {"loss_after", after}};
}

surrogate::SurrogateModel<float> load_eval_model(Workspace& ws) {
  if (ws.config().eval_finetuned) {
    return surrogate::load_surrogate<float>(ws.input(artifacts::kFinetuned, "finetune"));
  }
  return surrogate::load_surrogate<float>(ws.input(artifacts::kSurrogate, "train-surrogate"));
}

json stage_paraphrase(Workspace& ws) {
  const auto& c = ws.config();
  if (c.paraphrase_input.empty()) throw ConfigError("paraphrase.input", "required by this stage");
  const auto vocab = load_vocab(ws);
  const auto model = load_eval_model(ws);
  ws.external(c.resolve(c.paraphrase_input));
  std::istringstream is(read_file(c.resolve(c.paraphrase_input)));
  std::string line, out;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (tokenize(line, c.tokenizer).empty()) continue;
    out += surrogate::paraphrase(model, vocab, line, c.tokenizer, c.beam) + "\n";
    ++n;
  }
  write_file_atomic(ws.output(artifacts::kParaphrases), out);
  return {{"sentences", n}};
}

json stage_eval(Workspace& ws) {
  const auto& c = ws.config();
  const auto vocab = load_vocab(ws);
  const auto model = load_eval_model(ws);
  ws.external(c.resolve(c.test));
  auto test = load_labeled(c, c.test, "eval.test");
  std::erase_if(test, [](const auto& p) { return p.first.empty() || p.second.empty(); });
  if (c.test_limit > 0 && test.size() > c.test_limit) test.resize(c.test_limit);
  if (test.empty()) throw InputError("test set has no usable pairs");
  std::vector<metrics::EvalTriple> triples;
  std::string outputs = "source\tcandidate\n";
  std::size_t changed = 0;
  for (const auto& [s, r] : test) {
    const auto best = surrogate::beam_decode(model, encode(s, vocab), c.beam).best.tokens;
    auto cand = decode(best, vocab);
    changed += cand != s;
    outputs += detokenize(s) + "\t" + detokenize(cand) + "\n";
    triples.push_back({s, r, std::move(cand)});
  }
  const auto report = metrics::evaluate(triples, c.metrics);
  auto j = metrics::to_json(report, c.metrics);
  j["non_identical_fraction"] = static_cast<double>(changed) / static_cast<double>(test.size());
  write_file_atomic(ws.output(artifacts::kEvalReport), j.dump(2) + "\n");
  write_file_atomic(ws.output(artifacts::kEvalSentences), metrics::per_sentence_csv(report));
  write_file_atomic(ws.output(artifacts::kEvalOutputs), outputs);
  return j;
}

}  // namespace

std::string umt_checkpoint_name(ClusterId src, ClusterId tgt) {
  return "umt_" + std::to_string(src) + "_" + std::to_string(tgt);
}

std::string ablation_table(const std::string& axis, const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << axis << "\tiBLEU\n";
  for (const auto& r : rows) os << r.value << '\t' << r.ibleu << '\n';
  return os.str();
}

std::vector<AblationRow> ablate(const std::string& axis, const PipelineConfig& config) {
  std::vector<std::pair<std::string, PipelineConfig>> runs;
  auto variant = [&](const std::string& value) {
    PipelineConfig v = config;
    v.out_dir = config.out_dir / "ablate" / axis / value;
    return v;
  };
  if (axis == "corpus-size") {
    if (config.corpus_sizes.empty()) throw ConfigError("ablate.corpus_sizes", "no values listed");
    for (auto n : config.corpus_sizes) {
      auto v = variant(std::to_string(n));
      v.corpus_limit = n;
      runs.emplace_back(std::to_string(n), v);
    }
  } else if (axis == "topic-count") {
    if (config.topic_counts.empty()) throw ConfigError("ablate.topic_counts", "no values listed");
    for (auto k : config.topic_counts) {
      auto v = variant(std::to_string(k));
      v.lda.k = k;
      runs.emplace_back(std::to_string(k), v);
    }
  } else if (axis == "pairing-strategy") {
    if (config.strategies.empty()) throw ConfigError("ablate.strategies", "no values listed");
    for (auto s : config.strategies) {
      auto v = variant(pairing::to_string(s));
      v.strategy = s;
      runs.emplace_back(pairing::to_string(s), v);
    }
  } else if (axis == "clustering-method") {
    if (config.clustering_methods.empty()) throw ConfigError("ablate.clustering_methods", "no values listed");
    for (auto m : config.clustering_methods) {
      auto v = variant(to_string(m));
      v.clustering = m;
      runs.emplace_back(to_string(m), v);
    }
  } else {
    throw ConfigError("ablate.axis",
                      "unknown axis '" + axis + "' (corpus-size, topic-count, pairing-strategy, clustering-method)");
  }
  std::vector<AblationRow> rows;
  for (const auto& [value, cfg] : runs) {
    for (const char* stage : kDefaultSequence) run_stage(stage, cfg);
    const auto report = json::parse(read_file(cfg.out_dir / artifacts::kEvalReport));
    rows.push_back({value, report.at("ibleu").get<double>()});
  }
  return rows;
}

json run_stage(const std::string& stage, const PipelineConfig& config) {
  if (!is_stage(stage)) throw ConfigError("stage", "unknown stage '" + stage + "'");
  config.validate();
  Workspace ws(config);
  const auto start = std::chrono::steady_clock::now();
  json summary;
  if (stage == "cluster") {
    summary = stage_cluster(ws);
  } else if (stage == "review-report") {
    summary = stage_review_report(ws);
  } else if (stage == "pair") {
    summary = stage_pair(ws);
  } else if (stage == "train-umt") {
    summary = stage_train_umt(ws);
  } else if (stage == "distill") {
    summary = stage_distill(ws);
  } else if (stage == "filter") {
    summary = stage_filter(ws);
  } else if (stage == "train-surrogate") {
    summary = stage_train_surrogate(ws);
  } else if (stage == "finetune") {
    summary = stage_finetune(ws);
  } else if (stage == "paraphrase") {
    summary = stage_paraphrase(ws);
  } else if (stage == "eval") {
    summary = stage_eval(ws);
  } else {
    if (config.ablate_axis.empty()) throw ConfigError("ablate.axis", "required by this stage");
    const auto rows = ablate(config.ablate_axis, config);
    const auto name = "ablation_" + config.ablate_axis + ".tsv";
    write_file_atomic(ws.output(name), ablation_table(config.ablate_axis, rows));
    json r = json::array();
    for (const auto& row : rows) r.push_back({{"value", row.value}, {"ibleu", row.ibleu}});
    summary = {{"axis", config.ablate_axis}, {"rows", r}};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ws.record(stage, seconds, summary);
  return summary;
}

}  // namespace umtpara::pipeline
