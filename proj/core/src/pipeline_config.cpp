#include <algorithm>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "umtpara/checkpoint.hpp"
#include "umtpara/error.hpp"
#include "umtpara/io.hpp"
#include "umtpara/pipeline.hpp"

namespace umtpara::pipeline {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::kDesk;
  if (name == "paper") return Profile::kPaper;
  throw ConfigError("profile", "unknown profile '" + name + "' (expected paper or desk)");
}

std::string to_string(Profile p) { return p == Profile::kDesk ? "desk" : "paper"; }

PipelineConfig PipelineConfig::defaults(Profile profile) {
  PipelineConfig c;
  c.profile = profile;
  c.filters = pseudo::FilterSpec::parse("identity, length_ratio:max_ratio=2");
  c.strategies = {pairing::Strategy::kRandom, pairing::Strategy::kLargest, pairing::Strategy::kMedium,
                  pairing::Strategy::kSmallest};
  c.clustering_methods = {ClusteringKind::kLda, ClusteringKind::kKMeans};
  c.finetune = surrogate::SurrogateTrainConfig::finetune_defaults();
  if (profile == Profile::kPaper) {
    c.lda.k = 80;
    c.lda.sweeps = 5;
    c.model = nn::TransformerConfig::paper(0, 0);
    c.umt.optim = {0.00025, 0.5, 0.999, 1e-8, 0, 0.0};
    c.umt.steps = 100000;
    c.umt.batch = 32;
    c.surrogate.optim = {1e-4, 0.9, 0.999, 1e-8, 4000, 0.0};
    c.surrogate.batch = 256;
    c.surrogate.steps = 100000;
    c.finetune.steps = 10000;
    c.finetune.batch = 256;
    c.finetune.optim.lr = 1e-4;
    c.corpus_sizes = {};
    c.topic_counts = {20, 40, 60, 80, 100};
  } else {
    c.lda.k = 4;
    c.lda.sweeps = 5;
    c.model = nn::TransformerConfig::desk(0, 0);
    c.umt.optim = {0.001, 0.9, 0.98, 1e-8, 0, 0.0};
    c.umt.steps = 1000;
    c.umt.batch = 16;
    c.umt.init_steps = 1000;
    c.surrogate.optim = {0.001, 0.9, 0.98, 1e-8, 200, 0.0};
    c.surrogate.batch = 32;
    c.surrogate.steps = 2000;
    c.finetune.steps = 200;
    c.finetune.batch = 32;
    c.finetune.optim.lr = 0.0005;
    c.finetune.optim.warmup = 0;
    c.topic_counts = {2, 4};
  }
  return c;
}

fs::path PipelineConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

namespace {

void require_file(const PipelineConfig& c, const fs::path& p, const std::string& field) {
  if (!p.empty() && !fs::exists(c.resolve(p))) {
    throw ConfigError(field, "file not found: " + c.resolve(p).string());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus.path", "required");
  require_file(*this, corpus_path, "corpus.path");
  require_file(*this, embeddings, "clustering.embeddings");
  require_file(*this, review, "clustering.review");
  require_file(*this, dev, "pairing.dev");
  require_file(*this, score_samples, "pairing.score_samples");
  require_file(*this, labeled, "finetune.labeled");
  require_file(*this, test, "eval.test");
  require_file(*this, paraphrase_input, "paraphrase.input");
  if (lda.k < 2) throw ConfigError("clustering.k", "must be >= 2");
  if (lda.sweeps < 1) throw ConfigError("clustering.sweeps", "must be >= 1");
  if (!(lda.alpha > 0) || !(lda.beta > 0)) throw ConfigError("clustering.alpha", "alpha and beta must be positive");
  if (min_count < 1) throw ConfigError("corpus.min_count", "must be >= 1");
  if (max_vocab < 4) throw ConfigError("corpus.max_vocab", "must be >= 4");
  if (embedding_dim == 0) throw ConfigError("clustering.embedding_dim", "must be positive");
  if (model.d_model == 0 || model.heads == 0 || model.d_model % model.heads != 0) {
    throw ConfigError("model.d_model", "must be a positive multiple of model.heads");
  }
  if (umt.batch == 0) throw ConfigError("umt.batch", "must be >= 1");
  if (!(umt.noise.drop_prob >= 0 && umt.noise.drop_prob < 1)) throw ConfigError("umt.drop_prob", "must lie in [0, 1)");
  if (umt.weights.dae < 0 || umt.weights.bt < 0 || umt.weights.adv < 0) {
    throw ConfigError("umt.lambda_dae", "loss weights must be non-negative");
  }
  if (workers == 0) throw ConfigError("umt.workers", "must be >= 1");
  if (!(sample_fraction > 0 && sample_fraction <= 1)) throw ConfigError("distill.sample_fraction", "must lie in (0, 1]");
  if (surrogate.batch == 0) throw ConfigError("surrogate.batch", "must be >= 1");
  if (finetune.batch == 0) throw ConfigError("finetune.batch", "must be >= 1");
  if (beam.width == 0) throw ConfigError("eval.beam_width", "must be >= 1");
  if (score_pairs < score_degree + 1) throw ConfigError("pairing.score_pairs", "must exceed pairing.degree");
  for (const auto& step : filters.steps) (void)pseudo::make_filter(step);
  metrics.validate();
}

nlohmann::json PipelineConfig::snapshot() const {
  auto optim = [](const nn::AdamConfig& o) {
    return nlohmann::json{{"lr", o.lr},           {"beta1", o.beta1},   {"beta2", o.beta2},
                          {"eps", o.eps},         {"warmup", o.warmup}, {"clip_norm", o.clip_norm}};
  };
  std::vector<std::string> strategy_names, method_names;
  for (auto s : strategies) strategy_names.push_back(pairing::to_string(s));
  for (auto m : clustering_methods) method_names.push_back(umtpara::to_string(m));
  return {
      {"profile", to_string(profile)},
      {"corpus",
       {{"path", corpus_path.string()},
        {"format", corpus_format == CorpusFormat::kLines ? "lines" : "jsonl"},
        {"lowercase", tokenizer.lowercase},
        {"split_punctuation", tokenizer.split_punctuation},
        {"min_count", min_count},
        {"max_vocab", max_vocab},
        {"limit", corpus_limit}}},
      {"clustering",
       {{"kind", umtpara::to_string(clustering)},
        {"k", lda.k},
        {"sweeps", lda.sweeps},
        {"alpha", lda.alpha},
        {"beta", lda.beta},
        {"embeddings", embeddings.string()},
        {"embedding_dim", embedding_dim},
        {"max_iter", kmeans_max_iter},
        {"review", review.string()}}},
      {"pairing",
       {{"strategy", pairing::to_string(strategy)},
        {"degree", score_degree},
        {"score_pairs", score_pairs},
        {"dev", dev.string()},
        {"score_samples", score_samples.string()}}},
      {"model", nn::to_json(model)},
      {"umt",
       {{"steps", umt.steps},
        {"batch", umt.batch},
        {"optim", optim(umt.optim)},
        {"drop_prob", umt.noise.drop_prob},
        {"swap_window", umt.noise.swap_window},
        {"lambda_dae", umt.weights.dae},
        {"lambda_bt", umt.weights.bt},
        {"lambda_adv", umt.weights.adv},
        {"init", umt.init == umt::InitMode::kWordByWord ? "word-by-word" : "none"},
        {"init_steps", umt.init_steps},
        {"disc_hidden", umt.disc_hidden},
        {"log_every", umt.log_every},
        {"workers", workers}}},
      {"distill", {{"sample_fraction", sample_fraction}, {"decode_batch", decode_batch}}},
      {"filter", {{"filters", filters.to_string()}}},
      {"surrogate", {{"steps", surrogate.steps}, {"batch", surrogate.batch}, {"optim", optim(surrogate.optim)}}},
      {"finetune",
       {{"labeled", labeled.string()},
        {"steps", finetune.steps},
        {"batch", finetune.batch},
        {"optim", optim(finetune.optim)}}},
      {"eval",
       {{"test", test.string()},
        {"limit", test_limit},
        {"finetuned", eval_finetuned},
        {"beam_width", beam.width},
        {"max_length", beam.max_length},
        {"length_penalty", beam.length_penalty},
        {"max_order", metrics.max_order},
        {"smoothing", metrics.smoothing == metrics::Smoothing::kNone ? "none" : "add-one-on-zero"},
        {"alpha", metrics.alpha},
        {"rouge", metrics.rouge == metrics::RougeMode::kRecall ? "recall" : "f1"}}},
      {"paraphrase", {{"input", paraphrase_input.string()}}},
      {"ablate",
       {{"axis", ablate_axis},
        {"corpus_sizes", corpus_sizes},
        {"topic_counts", topic_counts},
        {"strategies", strategy_names},
        {"clustering_methods", method_names}}},
      {"run", {{"seed", seed}, {"out", out_dir.string()}}},
  };
}

// ---------------------------------------------------------------------------

namespace {

std::string strip(std::string s) {
  for (const char* marker : {" ;", "\t;", " #", "\t#"}) {
    const auto pos = s.find(marker);
    if (pos != std::string::npos) s.erase(pos);
  }
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = strip(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename Fn>
  void on(const std::string& section, const std::string& key, Fn&& apply) {
    known_.push_back(section + "." + key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return;
    const std::string field = section + "." + key;
    const std::string value = strip(*v);
    try {
      apply(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(field, "invalid value '" + value + "'");
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw ConfigError(section, "key outside of any section");
      for (const auto& [key, v] : body) {
        const std::string field = section + "." + key;
        if (std::find(known_.begin(), known_.end(), field) == known_.end()) {
          throw ConfigError(field, "unknown configuration key");
        }
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string> known_;
};

std::size_t to_size(const std::string& v) {
  std::size_t pos = 0;
  if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
  const auto x = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("bool");
}

void read_optim(Reader& r, const std::string& section, nn::AdamConfig& o) {
  r.on(section, "lr", [&](auto& v) { o.lr = to_double(v); });
  r.on(section, "beta1", [&](auto& v) { o.beta1 = to_double(v); });
  r.on(section, "beta2", [&](auto& v) { o.beta2 = to_double(v); });
  r.on(section, "eps", [&](auto& v) { o.eps = to_double(v); });
  r.on(section, "warmup", [&](auto& v) { o.warmup = to_size(v); });
  r.on(section, "clip_norm", [&](auto& v) { o.clip_norm = to_double(v); });
}

}  // namespace

PipelineConfig parse_config(const std::string& text, std::optional<Profile> forced, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", std::string("line ") + std::to_string(e.line()) + ": " + e.message());
  }
  Profile profile = Profile::kDesk;
  if (forced) {
    profile = *forced;
  } else if (auto p = tree.get_optional<std::string>("run.profile")) {
    profile = parse_profile(strip(*p));
  }

  PipelineConfig c = PipelineConfig::defaults(profile);
  c.base_dir = base_dir;
  Reader r(tree);
  r.on("run", "profile", [](auto&) {});
  r.on("run", "seed", [&](auto& v) { c.seed = std::stoull(v); });
  r.on("run", "out", [&](auto& v) { c.out_dir = c.resolve(v); });

  r.on("corpus", "path", [&](auto& v) { c.corpus_path = v; });
  r.on("corpus", "format", [&](auto& v) {
    try {
      c.corpus_format = parse_corpus_format(v);
    } catch (const std::exception&) {
      throw ConfigError("corpus.format", "expected lines or jsonl, got '" + v + "'");
    }
  });
  r.on("corpus", "lowercase", [&](auto& v) { c.tokenizer.lowercase = to_bool(v); });
  r.on("corpus", "split_punctuation", [&](auto& v) { c.tokenizer.split_punctuation = to_bool(v); });
  r.on("corpus", "min_count", [&](auto& v) { c.min_count = to_size(v); });
  r.on("corpus", "max_vocab", [&](auto& v) { c.max_vocab = to_size(v); });
  r.on("corpus", "limit", [&](auto& v) { c.corpus_limit = to_size(v); });

  r.on("clustering", "kind", [&](auto& v) {
    try {
      c.clustering = parse_clustering_kind(v);
    } catch (const std::exception&) {
      throw ConfigError("clustering.kind", "expected lda or kmeans, got '" + v + "'");
    }
  });
  r.on("clustering", "k", [&](auto& v) { c.lda.k = to_size(v); });
  r.on("clustering", "sweeps", [&](auto& v) { c.lda.sweeps = to_size(v); });
  r.on("clustering", "alpha", [&](auto& v) { c.lda.alpha = to_double(v); });
  r.on("clustering", "beta", [&](auto& v) { c.lda.beta = to_double(v); });
  r.on("clustering", "embeddings", [&](auto& v) { c.embeddings = v; });
  r.on("clustering", "embedding_dim", [&](auto& v) { c.embedding_dim = to_size(v); });
  r.on("clustering", "max_iter", [&](auto& v) { c.kmeans_max_iter = to_size(v); });
  r.on("clustering", "review", [&](auto& v) { c.review = v; });

  r.on("pairing", "strategy", [&](auto& v) { c.strategy = pairing::parse_strategy(v); });
  r.on("pairing", "degree", [&](auto& v) { c.score_degree = to_size(v); });
  r.on("pairing", "score_pairs", [&](auto& v) { c.score_pairs = to_size(v); });
  r.on("pairing", "dev", [&](auto& v) { c.dev = v; });
  r.on("pairing", "score_samples", [&](auto& v) { c.score_samples = v; });

  r.on("model", "preset", [&](auto& v) {
    if (v == "paper") {
      c.model = nn::TransformerConfig::paper(0, 0);
    } else if (v == "desk") {
      c.model = nn::TransformerConfig::desk(0, 0);
    } else {
      throw ConfigError("model.preset", "expected paper or desk, got '" + v + "'");
    }
  });
  r.on("model", "d_model", [&](auto& v) { c.model.d_model = to_size(v); });
  r.on("model", "d_ff", [&](auto& v) { c.model.d_ff = to_size(v); });
  r.on("model", "heads", [&](auto& v) { c.model.heads = to_size(v); });
  r.on("model", "encoder_layers", [&](auto& v) { c.model.encoder_layers = to_size(v); });
  r.on("model", "decoder_layers", [&](auto& v) { c.model.decoder_layers = to_size(v); });
  r.on("model", "max_positions", [&](auto& v) { c.model.max_positions = to_size(v); });

  r.on("umt", "steps", [&](auto& v) { c.umt.steps = to_size(v); });
  r.on("umt", "batch", [&](auto& v) { c.umt.batch = to_size(v); });
  read_optim(r, "umt", c.umt.optim);
  r.on("umt", "drop_prob", [&](auto& v) { c.umt.noise.drop_prob = to_double(v); });
  r.on("umt", "swap_window", [&](auto& v) { c.umt.noise.swap_window = to_size(v); });
  r.on("umt", "lambda_dae", [&](auto& v) { c.umt.weights.dae = to_double(v); });
  r.on("umt", "lambda_bt", [&](auto& v) { c.umt.weights.bt = to_double(v); });
  r.on("umt", "lambda_adv", [&](auto& v) { c.umt.weights.adv = to_double(v); });
  r.on("umt", "init", [&](auto& v) {
    if (v == "word-by-word") {
      c.umt.init = umt::InitMode::kWordByWord;
    } else if (v == "none") {
      c.umt.init = umt::InitMode::kNone;
    } else {
      throw ConfigError("umt.init", "expected word-by-word or none, got '" + v + "'");
    }
  });
  r.on("umt", "init_steps", [&](auto& v) { c.umt.init_steps = to_size(v); });
  r.on("umt", "disc_hidden", [&](auto& v) { c.umt.disc_hidden = to_size(v); });
  r.on("umt", "log_every", [&](auto& v) { c.umt.log_every = to_size(v); });
  r.on("umt", "workers", [&](auto& v) { c.workers = to_size(v); });

  r.on("distill", "sample_fraction", [&](auto& v) { c.sample_fraction = to_double(v); });
  r.on("distill", "decode_batch", [&](auto& v) { c.decode_batch = std::max<std::size_t>(1, to_size(v)); });

  r.on("filter", "filters", [&](auto& v) {
    c.filters = pseudo::FilterSpec::parse(v);
    for (const auto& step : c.filters.steps) pseudo::make_filter(step);
  });

  r.on("surrogate", "steps", [&](auto& v) { c.surrogate.steps = to_size(v); });
  r.on("surrogate", "batch", [&](auto& v) { c.surrogate.batch = to_size(v); });
  read_optim(r, "surrogate", c.surrogate.optim);

  r.on("finetune", "labeled", [&](auto& v) { c.labeled = v; });
  r.on("finetune", "steps", [&](auto& v) { c.finetune.steps = to_size(v); });
  r.on("finetune", "batch", [&](auto& v) { c.finetune.batch = to_size(v); });
  read_optim(r, "finetune", c.finetune.optim);

  r.on("eval", "test", [&](auto& v) { c.test = v; });
  r.on("eval", "limit", [&](auto& v) { c.test_limit = to_size(v); });
  r.on("eval", "finetuned", [&](auto& v) { c.eval_finetuned = to_bool(v); });
  r.on("eval", "beam_width", [&](auto& v) { c.beam.width = to_size(v); });
  r.on("eval", "max_length", [&](auto& v) { c.beam.max_length = to_size(v); });
  r.on("eval", "length_penalty", [&](auto& v) { c.beam.length_penalty = to_double(v); });
  r.on("eval", "max_order", [&](auto& v) { c.metrics.max_order = to_size(v); });
  r.on("eval", "smoothing", [&](auto& v) { c.metrics.smoothing = metrics::parse_smoothing(v); });
  r.on("eval", "alpha", [&](auto& v) { c.metrics.alpha = to_double(v); });
  r.on("eval", "rouge", [&](auto& v) { c.metrics.rouge = metrics::parse_rouge_mode(v); });

  r.on("paraphrase", "input", [&](auto& v) { c.paraphrase_input = v; });

  r.on("ablate", "axis", [&](auto& v) { c.ablate_axis = v; });
  r.on("ablate", "corpus_sizes", [&](auto& v) {
    c.corpus_sizes.clear();
    for (const auto& x : split_list(v)) c.corpus_sizes.push_back(to_size(x));
  });
  r.on("ablate", "topic_counts", [&](auto& v) {
    c.topic_counts.clear();
    for (const auto& x : split_list(v)) c.topic_counts.push_back(to_size(x));
  });
  r.on("ablate", "strategies", [&](auto& v) {
    c.strategies.clear();
    for (const auto& x : split_list(v)) c.strategies.push_back(pairing::parse_strategy(x));
  });
  r.on("ablate", "clustering_methods", [&](auto& v) {
    c.clustering_methods.clear();
    for (const auto& x : split_list(v)) {
      try {
        c.clustering_methods.push_back(parse_clustering_kind(x));
      } catch (const std::exception&) {
        throw ConfigError("ablate.clustering_methods", "unknown clustering '" + x + "'");
      }
    }
  });
  r.reject_unknown();
  return c;
}

PipelineConfig load_config(const fs::path& path, std::optional<Profile> forced) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ConfigError("config", "cannot read " + path.string());
  }
  return parse_config(text, forced, path.parent_path());
}

bool is_stage(const std::string& name) {
  return std::find(std::begin(kStages), std::end(kStages), name) != std::end(kStages);
}

}  // namespace umtpara::pipeline
