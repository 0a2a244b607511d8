#include "umtpara/surrogate.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "umtpara/checkpoint.hpp"
#include "umtpara/error.hpp"
#include "umtpara/io.hpp"
#include "umtpara/rng.hpp"

namespace umtpara::surrogate {

PairSet encode_pairs(std::span<const std::pair<Tokens, Tokens>> pairs, const Vocab& vocab) {
  PairSet set;
  set.vocab_fingerprint = vocab.fingerprint();
  for (const auto& [s, t] : pairs) {
    if (s.empty() || t.empty()) continue;
    set.examples.push_back({encode(s, vocab), encode(t, vocab)});
  }
  return set;
}

std::vector<std::pair<Tokens, Tokens>> load_labeled_pairs(const std::filesystem::path& path,
                                                         const TokenizerConfig& tokenizer) {
  std::istringstream is(read_file(path));
  std::vector<std::pair<Tokens, Tokens>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(n);
    if (line.front() == '{') {
      try {
        const auto j = nlohmann::json::parse(line);
        const auto& s = j.contains("source") ? j.at("source") : j.at("src");
        const auto& r = j.contains("reference") ? j.at("reference") : j.at("tgt");
        out.emplace_back(tokenize(s.get<std::string>(), tokenizer), tokenize(r.get<std::string>(), tokenizer));
      } catch (const nlohmann::json::exception& e) {
        throw InputError(where + ": " + e.what());
      }
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw InputError(where + ": expected `source<TAB>reference`");
      out.emplace_back(tokenize(std::string_view(line).substr(0, tab), tokenizer),
                       tokenize(std::string_view(line).substr(tab + 1), tokenizer));
    }
  }
  return out;
}

template <typename T>
SurrogateModel<T>::SurrogateModel(const nn::TransformerConfig& config, std::uint64_t seed)
    : net([&] {
        auto c = config;
        c.languages = 0;
        return nn::Seq2Seq<T>(c, seed);
      }()) {}

SurrogateTrainConfig SurrogateTrainConfig::finetune_defaults() {
  SurrogateTrainConfig c;
  c.optim.beta1 = 0.9;
  c.optim.beta2 = 0.98;
  return c;
}

namespace {

template <typename T>
void check_pairs(const SurrogateModel<T>& model, const PairSet& pairs) {
  if (pairs.examples.empty()) throw InputError("no training pairs");
  if (model.vocab_fingerprint != 0 && pairs.vocab_fingerprint != model.vocab_fingerprint) {
    throw InputError("pairs were encoded with a different vocabulary than the model");
  }
  const auto v = static_cast<TokenId>(model.net.config().vocab_size);
  for (const auto& e : pairs.examples) {
    for (auto w : e.src) {
      if (w < 0 || w >= v) throw InputError("token id " + std::to_string(w) + " outside the model vocabulary");
    }
    for (auto w : e.tgt) {
      if (w < 0 || w >= v) throw InputError("token id " + std::to_string(w) + " outside the model vocabulary");
    }
  }
}

template <typename T>
TrainHistory run_training(SurrogateModel<T>& model, const PairSet& pairs, const SurrogateTrainConfig& config) {
  TrainHistory history;
  if (config.steps == 0) return history;
  if (config.batch == 0) throw InputError("batch must be >= 1");
  check_pairs(model, pairs);
  nn::Adam<T> opt(config.optim, model.net.params().all());
  Rng rng(Rng::derive(config.seed, 7));
  const std::size_t n = pairs.examples.size();
  const std::size_t batch = std::min(config.batch, n);
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;  // forces a shuffle on the first step
  EpochRecord epoch{0, 0, 0.0};
  for (std::size_t step = 1; step <= config.steps; ++step) {
    if (cursor + batch > n) {
      if (epoch.steps > 0) {
        epoch.mean_loss /= static_cast<double>(epoch.steps);
        history.epochs.push_back(epoch);
      }
      epoch = {epoch.epoch + 1, 0, 0.0};
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    std::vector<TokenIds> src, tgt;
    for (std::size_t i = 0; i < batch; ++i) {
      src.push_back(pairs.examples[order[cursor + i]].src);
      tgt.push_back(pairs.examples[order[cursor + i]].tgt);
    }
    cursor += batch;
    nn::Tape<T> tape;
    const auto loss = model.net.loss(tape, src, tgt, std::nullopt, std::nullopt);
    const double value = tape.value(loss).scalar();
    if (!std::isfinite(value)) throw NumericError("surrogate loss is not finite at step " + std::to_string(step));
    model.net.params().zero_grad();
    tape.backward(loss);
    opt.step();
    history.step_losses.push_back(value);
    epoch.mean_loss += value;
    ++epoch.steps;
  }
  epoch.mean_loss /= static_cast<double>(epoch.steps);
  history.epochs.push_back(epoch);
  return history;
}

}  // namespace

template <typename T>
TrainResult<T> train_surrogate(const PairSet& pairs, const nn::TransformerConfig& model_config,
                               const SurrogateTrainConfig& config) {
  if (pairs.examples.empty()) throw InputError("train_surrogate: no training pairs");
  TrainResult<T> result{SurrogateModel<T>(model_config, Rng::derive(config.seed, 0)), {}};
  result.model.vocab_fingerprint = pairs.vocab_fingerprint;
  result.history = run_training(result.model, pairs, config);
  return result;
}

template <typename T>
TrainHistory finetune(SurrogateModel<T>& model, const PairSet& pairs, const SurrogateTrainConfig& config) {
  if (pairs.vocab_fingerprint != model.vocab_fingerprint) {
    throw InputError("finetune: labeled pairs use a different vocabulary than the model");
  }
  if (pairs.examples.empty()) throw InputError("finetune: no labeled pairs");
  return run_training(model, pairs, config);
}

template <typename T>
double evaluate_loss(const SurrogateModel<T>& model, const PairSet& pairs, std::size_t batch) {
  check_pairs(model, pairs);
  double total = 0.0;
  const std::size_t n = pairs.examples.size();
  for (std::size_t b = 0; b < n; b += batch) {
    std::vector<TokenIds> src, tgt;
    for (std::size_t i = b; i < std::min(n, b + batch); ++i) {
      src.push_back(pairs.examples[i].src);
      tgt.push_back(pairs.examples[i].tgt);
    }
    nn::Tape<T> tape(false);
    total += tape.value(model.net.loss(tape, src, tgt, std::nullopt, std::nullopt)).scalar() *
             static_cast<double>(src.size());
  }
  return total / static_cast<double>(n);
}

template <typename T>
nn::BeamResult beam_decode(const SurrogateModel<T>& model, const TokenIds& tokens, const nn::BeamConfig& beam) {
  return model.net.beam_search(tokens, beam, std::nullopt, std::nullopt);
}

template <typename T>
std::string paraphrase(const SurrogateModel<T>& model, const Vocab& vocab, const std::string& text,
                       const TokenizerConfig& tokenizer, const nn::BeamConfig& beam) {
  const auto tokens = tokenize(text, tokenizer);
  if (tokens.empty()) throw InputError("paraphrase: empty input");
  if (vocab.fingerprint() != model.vocab_fingerprint) {
    throw InputError("paraphrase: vocabulary does not match the model");
  }
  return detokenize(decode(beam_decode(model, encode(tokens, vocab), beam).best.tokens, vocab));
}

template <typename T>
void save_surrogate(const SurrogateModel<T>& model, const std::filesystem::path& path, const std::string& rng_state) {
  const nlohmann::json meta = {
      {"kind", "surrogate"}, {"model", nn::to_json(model.net.config())}, {"vocab_fingerprint", model.vocab_fingerprint}};
  const auto params = model.net.params().all();
  nn::save_checkpoint<T>(path, meta, rng_state, params);
}

template <typename T>
SurrogateModel<T> load_surrogate(const std::filesystem::path& path) {
  const auto header = nn::read_checkpoint_header(path);
  const auto& meta = header.at("meta");
  if (meta.value("kind", "") != "surrogate") throw InputError(path.string() + ": not a surrogate checkpoint");
  SurrogateModel<T> model(nn::transformer_config_from_json(meta.at("model")));
  model.vocab_fingerprint = meta.at("vocab_fingerprint").get<std::uint64_t>();
  const auto params = model.net.params().all();
  nn::load_checkpoint_params<T>(path, params);
  return model;
}

std::string epoch_history_csv(std::span<const EpochRecord> epochs) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,steps,mean_loss\n";
  for (const auto& e : epochs) os << e.epoch << ',' << e.steps << ',' << e.mean_loss << '\n';
  return os.str();
}

#define UMTPARA_INSTANTIATE(T)                                                                                 \
  template struct SurrogateModel<T>;                                                                           \
  template TrainResult<T> train_surrogate<T>(const PairSet&, const nn::TransformerConfig&,                     \
                                             const SurrogateTrainConfig&);                                     \
  template TrainHistory finetune<T>(SurrogateModel<T>&, const PairSet&, const SurrogateTrainConfig&);          \
  template double evaluate_loss<T>(const SurrogateModel<T>&, const PairSet&, std::size_t);                     \
  template nn::BeamResult beam_decode<T>(const SurrogateModel<T>&, const TokenIds&, const nn::BeamConfig&);    \
  template std::string paraphrase<T>(const SurrogateModel<T>&, const Vocab&, const std::string&,               \
                                     const TokenizerConfig&, const nn::BeamConfig&);                           \
  template void save_surrogate<T>(const SurrogateModel<T>&, const std::filesystem::path&, const std::string&); \
  template SurrogateModel<T> load_surrogate<T>(const std::filesystem::path&);

UMTPARA_INSTANTIATE(float)
UMTPARA_INSTANTIATE(double)

}  // namespace umtpara::surrogate
