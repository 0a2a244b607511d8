#include "umtpara/pseudo.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <thread>

#include "umtpara/error.hpp"
#include "umtpara/io.hpp"

namespace umtpara::pseudo {

namespace {

std::vector<ClusterId> normalize_active(std::vector<ClusterId> active, std::size_t k) {
  if (active.empty()) {
    active.resize(k);
    for (std::size_t i = 0; i < k; ++i) active[i] = static_cast<ClusterId>(i);
  }
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  for (auto c : active) {
    if (c >= k) throw InputError("active cluster " + std::to_string(c) + " is outside the model");
  }
  return active;
}

}  // namespace

Router Router::lda(const TopicModel& model, std::vector<ClusterId> active) {
  Router r;
  r.topics_ = &model;
  r.active_ = normalize_active(std::move(active), model.k);
  return r;
}

Router Router::kmeans(const KMeansModel& model, const EmbeddingTable& embeddings, std::vector<ClusterId> active) {
  if (embeddings.dim != model.dim) {
    throw ShapeError("router: embeddings have dimension " + std::to_string(embeddings.dim) + ", model expects " +
                     std::to_string(model.dim));
  }
  Router r;
  r.kmeans_ = &model;
  r.embeddings_ = &embeddings;
  r.active_ = normalize_active(std::move(active), model.k);
  return r;
}

ClusterId Router::route(const SentenceRecord& sentence) const {
  if (topics_ != nullptr) return lda_assign(*topics_, sentence.ids, active_);
  if (sentence.id >= embeddings_->rows()) {
    throw InputError("no embedding for sentence " + std::to_string(sentence.id));
  }
  return kmeans_assign(*kmeans_, embeddings_->row(sentence.id), active_);
}

BatchTranslator identity_translator() {
  return [](std::span<const SentenceRecord* const> batch) {
    std::vector<Tokens> out;
    out.reserve(batch.size());
    for (const auto* s : batch) out.push_back(s->tokens);
    return out;
  };
}

std::vector<ParaphrasePair> generate_pairs(std::span<const SentenceRecord> corpus, const Router& router,
                                           const std::map<ClusterId, ModelHandle>& models, std::size_t threads) {
  std::vector<ParaphrasePair> pairs;
  std::map<ClusterId, std::vector<std::size_t>> groups;  // cluster -> indices into pairs
  std::vector<const SentenceRecord*> sources;
  for (const auto& s : corpus) {
    if (s.tokens.empty()) continue;
    const ClusterId c = router.route(s);
    auto it = models.find(c);
    if (it == models.end()) throw InputError("no translation model for cluster " + std::to_string(c));
    groups[c].push_back(pairs.size());
    ParaphrasePair p;
    p.id = s.id;
    p.src = s.tokens;
    p.cluster = c;
    p.model = it->second.name;
    pairs.push_back(std::move(p));
    sources.push_back(&s);
  }

  std::vector<std::pair<ClusterId, const std::vector<std::size_t>*>> jobs;
  for (const auto& [c, idx] : groups) jobs.emplace_back(c, &idx);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const auto& idx = *jobs[j].second;
        std::vector<const SentenceRecord*> batch;
        for (auto i : idx) batch.push_back(sources[i]);
        auto out = models.at(jobs[j].first).translate(batch);
        if (out.size() != idx.size()) throw Error("translator returned the wrong number of outputs");
        for (std::size_t k = 0; k < idx.size(); ++k) pairs[idx[k]].tgt = std::move(out[k]);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, jobs.size()));
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
  return pairs;
}

// ---------------------------------------------------------------------------

bool filter_identity(const ParaphrasePair& pair) { return pair.src == pair.tgt; }

bool filter_length_ratio(const ParaphrasePair& pair, double max_ratio) {
  return static_cast<double>(pair.tgt.size()) > max_ratio * static_cast<double>(pair.src.size());
}

std::vector<std::string> registered_filters() { return {"identity", "length_ratio"}; }

FilterPredicate make_filter(const FilterStep& step) {
  auto reject_params = [&](std::set<std::string> allowed) {
    for (const auto& [k, v] : step.params) {
      if (!allowed.count(k)) throw ConfigError("filter." + step.name, "unknown parameter '" + k + "'");
    }
  };
  if (step.name == "identity") {
    reject_params({});
    return filter_identity;
  }
  if (step.name == "length_ratio") {
    reject_params({"max_ratio"});
    auto it = step.params.find("max_ratio");
    const double r = it == step.params.end() ? 2.0 : it->second;
    if (!(r > 0.0)) throw ConfigError("filter.length_ratio.max_ratio", "must be positive");
    return [r](const ParaphrasePair& p) { return filter_length_ratio(p, r); };
  }
  throw ConfigError("filter.filters", "unknown filter predicate '" + step.name + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

FilterSpec FilterSpec::parse(const std::string& text) {
  FilterSpec spec;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream parts(item);
    std::string part;
    std::getline(parts, part, ':');
    FilterStep step{trim(part), {}};
    while (std::getline(parts, part, ':')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw ConfigError("filter.filters", "expected key=value in '" + item + "'");
      const std::string key = trim(part.substr(0, eq));
      try {
        step.params[key] = std::stod(part.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("filter.filters", "non-numeric value for '" + key + "' in '" + item + "'");
      }
    }
    spec.steps.push_back(std::move(step));
  }
  return spec;
}

std::string FilterSpec::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) os << ", ";
    os << steps[i].name;
    for (const auto& [k, v] : steps[i].params) os << ':' << k << '=' << v;
  }
  return os.str();
}

FilterResult run_filters(std::span<const ParaphrasePair> pairs, const FilterSpec& spec) {
  std::vector<FilterPredicate> preds;
  std::set<std::string> seen;
  FilterResult result;
  for (const auto& step : spec.steps) {
    if (!seen.insert(step.name).second) throw ConfigError("filter.filters", "filter '" + step.name + "' listed twice");
    preds.push_back(make_filter(step));
    result.report.drops.emplace_back(step.name, 0);
  }
  result.report.input = pairs.size();
  for (const auto& p : pairs) {
    bool dropped = false;
    for (std::size_t i = 0; i < preds.size() && !dropped; ++i) {
      if (preds[i](p)) {
        ++result.report.drops[i].second;
        dropped = true;
      }
    }
    if (!dropped) result.kept.push_back(p);
  }
  result.report.output = result.kept.size();
  return result;
}

nlohmann::json to_json(const FilterReport& report) {
  nlohmann::json drops = nlohmann::json::object();
  for (const auto& [name, n] : report.drops) drops[name] = n;
  return {{"input", report.input}, {"drops", drops}, {"output", report.output}};
}

void save_pairs(std::span<const ParaphrasePair> pairs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : pairs) {
    const nlohmann::json j = {
        {"id", p.id}, {"src", detokenize(p.src)}, {"tgt", detokenize(p.tgt)}, {"cluster", p.cluster}, {"model", p.model}};
    out += j.dump() + '\n';
  }
  write_file_atomic(path, out);
}

std::vector<ParaphrasePair> load_pairs(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::vector<ParaphrasePair> pairs;
  std::string line;
  std::size_t n = 0;
  const TokenizerConfig raw{false, false};
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ParaphrasePair p;
      p.id = j.at("id");
      p.src = tokenize(j.at("src").get<std::string>(), raw);
      p.tgt = tokenize(j.at("tgt").get<std::string>(), raw);
      p.cluster = j.at("cluster");
      p.model = j.at("model");
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace umtpara::pseudo
