#include "umtpara/umt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "umtpara/checkpoint.hpp"
#include "umtpara/error.hpp"

namespace umtpara::umt {

TokenIds noise_apply(std::span<const TokenId> tokens, const NoiseConfig& config, Rng& rng) {
  if (tokens.empty()) throw InputError("noise_apply: empty sentence");
  if (!(config.drop_prob >= 0.0 && config.drop_prob <= 1.0)) {
    throw InputError("noise_apply: drop probability must lie in [0, 1]");
  }
  std::vector<std::size_t> kept;
  kept.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (config.drop_prob == 0.0 || rng.uniform() >= config.drop_prob) kept.push_back(i);
  }
  if (kept.empty()) kept.push_back(static_cast<std::size_t>(rng.below(tokens.size())));

  // Sorting by i + U[0, k+1) never moves an element more than k places.
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.swap_window > 0 && kept.size() > 1) {
    std::vector<double> key(kept.size());
    for (std::size_t i = 0; i < key.size(); ++i) {
      key[i] = static_cast<double>(i) + rng.uniform() * static_cast<double>(config.swap_window + 1);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  }
  TokenIds out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(tokens[kept[i]]);
  return out;
}

double weighted_total(const LossComponents& c, const LossWeights& w) {
  return w.dae * (c.dae_src + c.dae_tgt) + w.bt * (c.bt_src_tgt + c.bt_tgt_src) +
         w.adv * (c.adv_src_tgt + c.adv_tgt_src);
}

// ---------------------------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(std::size_t d_model, std::size_t hidden, std::uint64_t seed) : hidden_(hidden) {
  if (hidden == 0) throw InputError("discriminator hidden width must be positive");
  params_.add("disc.w1", d_model, hidden);
  params_.add("disc.b1", 1, hidden);
  params_.add("disc.w2", hidden, 2);
  params_.add("disc.b2", 1, 2);
  nn::initialize_parameters(params_, seed);
}

template <typename T>
Var Discriminator<T>::logits(Tape<T>& tape, Var pooled, bool frozen) const {
  auto leaf = [&](const char* name) {
    auto* p = params_.find(name);
    return frozen ? tape.frozen(*p) : tape.parameter(*p);
  };
  Var h = nn::relu(tape, nn::affine(tape, pooled, leaf("disc.w1"), leaf("disc.b1")));
  return nn::affine(tape, h, leaf("disc.w2"), leaf("disc.b2"));
}

template <typename T>
UmtModel<T>::UmtModel(const nn::TransformerConfig& config, std::size_t disc_hidden, std::uint64_t seed)
    : net([&] {
        auto c = config;
        c.languages = 2;
        return nn::Seq2Seq<T>(c, Rng::derive(seed, 0));
      }()),
      disc(config.d_model, disc_hidden, Rng::derive(seed, 1)) {}

template <typename T>
std::vector<nn::Parameter<T>*> UmtModel<T>::all_params() const {
  auto all = net.params().all();
  for (auto* p : disc.params().all()) all.push_back(p);
  return all;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<TokenIds> corrupt(std::span<const TokenIds> batch, const NoiseConfig& noise, Rng& rng) {
  std::vector<TokenIds> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(noise_apply(s, noise, rng));
  return out;
}

template <typename T>
Var mean_cross_entropy(Tape<T>& tape, Var logits, std::span<const TokenId> labels) {
  const std::vector<T> w(labels.size(), T(1) / static_cast<T>(labels.size()));
  return nn::cross_entropy(tape, logits, labels, std::span<const T>(w));
}

void require_batch(std::span<const TokenIds> batch, const char* op) {
  if (batch.empty()) throw InputError(std::string(op) + ": empty batch");
}

}  // namespace

template <typename T>
Var dae_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang lang,
             const NoiseConfig& noise, Rng& rng) {
  require_batch(batch, "dae_loss");
  const auto noisy = corrupt(batch, noise, rng);
  const auto memory = model.net.encode(tape, noisy, tag(lang));
  return model.net.reconstruction_loss(tape, memory, batch, tag(lang));
}

template <typename T>
Var bt_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang from, Lang to,
            const NoiseConfig& noise, Rng& rng) {
  require_batch(batch, "bt_loss");
  auto y = model.net.greedy(batch, tag(from), tag(to));
  for (auto& s : y) {
    if (s.empty()) s.push_back(Vocab::kUnk);
  }
  const auto noisy = corrupt(y, noise, rng);
  const auto memory = model.net.encode(tape, noisy, tag(to));
  return model.net.reconstruction_loss(tape, memory, batch, tag(from));
}

template <typename T>
Var disc_loss(const Discriminator<T>& disc, Tape<T>& tape, Var pooled, std::span<const std::size_t> labels) {
  const auto& v = tape.value(pooled);
  if (labels.size() != v.rows) {
    throw ShapeError("disc_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(v.rows) +
                     " latents");
  }
  if (labels.empty()) throw InputError("disc_loss: empty batch");
  std::vector<TokenId> ids;
  for (auto l : labels) {
    if (l > 1) throw InputError("disc_loss: language label " + std::to_string(l) + " is not src (0) or tgt (1)");
    ids.push_back(static_cast<TokenId>(l));
  }
  return mean_cross_entropy(tape, disc.logits(tape, pooled, false), ids);
}

template <typename T>
Var pooled_latents(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang lang) {
  const auto enc = model.net.encode(tape, batch, tag(lang));
  return nn::segment_mean(tape, enc.states, enc.segments);
}

template <typename T>
Var adv_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang from, Lang to) {
  require_batch(batch, "adv_loss");
  const Var pooled = pooled_latents(model, tape, batch, from);
  const std::vector<TokenId> ids(batch.size(), static_cast<TokenId>(to));
  return mean_cross_entropy(tape, model.disc.logits(tape, pooled, true), ids);
}

template <typename T>
TotalLoss<T> total_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> src_batch,
                        std::span<const TokenIds> tgt_batch, const LossWeights& weights, const NoiseConfig& noise,
                        Rng& rng) {
  TotalLoss<T> out;
  const Var dae_s = dae_loss(model, tape, src_batch, Lang::kSrc, noise, rng);
  const Var dae_t = dae_loss(model, tape, tgt_batch, Lang::kTgt, noise, rng);
  const Var bt_st = bt_loss(model, tape, src_batch, Lang::kSrc, Lang::kTgt, noise, rng);
  const Var bt_ts = bt_loss(model, tape, tgt_batch, Lang::kTgt, Lang::kSrc, noise, rng);
  const Var adv_st = adv_loss(model, tape, src_batch, Lang::kSrc, Lang::kTgt);
  const Var adv_ts = adv_loss(model, tape, tgt_batch, Lang::kTgt, Lang::kSrc);

  auto& c = out.components;
  c.dae_src = tape.value(dae_s).scalar();
  c.dae_tgt = tape.value(dae_t).scalar();
  c.bt_src_tgt = tape.value(bt_st).scalar();
  c.bt_tgt_src = tape.value(bt_ts).scalar();
  c.adv_src_tgt = tape.value(adv_st).scalar();
  c.adv_tgt_src = tape.value(adv_ts).scalar();

  const Var dae = nn::scale(tape, nn::add(tape, dae_s, dae_t), static_cast<T>(weights.dae));
  const Var bt = nn::scale(tape, nn::add(tape, bt_st, bt_ts), static_cast<T>(weights.bt));
  const Var adv = nn::scale(tape, nn::add(tape, adv_st, adv_ts), static_cast<T>(weights.adv));
  out.total = nn::add(tape, nn::add(tape, dae, bt), adv);
  return out;
}

template <typename T>
TokenIds translate(const UmtModel<T>& model, const TokenIds& tokens, Lang from, Lang to) {
  if (tokens.empty()) throw InputError("translate: empty sentence");
  return model.net.greedy(std::span<const TokenIds>(&tokens, 1), tag(from), tag(to)).front();
}

template <typename T>
std::vector<TokenIds> translate_batch(const UmtModel<T>& model, std::span<const TokenIds> batch, Lang from, Lang to) {
  return model.net.greedy(batch, tag(from), tag(to));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<TokenIds> sample_batch(std::span<const TokenIds> pool, std::size_t size, Rng& rng) {
  std::vector<TokenIds> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

template <typename T>
Tensor<T> pooled_values(const UmtModel<T>& model, std::span<const TokenIds> src, std::span<const TokenIds> tgt) {
  Tape<T> tape(false);
  const Var a = pooled_latents(model, tape, src, Lang::kSrc);
  const Var b = pooled_latents(model, tape, tgt, Lang::kTgt);
  return tape.value(nn::concat_rows(tape, a, b));
}

template <typename T>
double discriminator_step(UmtModel<T>& model, nn::Adam<T>* optimizer, std::span<const TokenIds> src,
                          std::span<const TokenIds> tgt) {
  Tape<T> tape;
  const Var pooled = tape.constant(pooled_values(model, src, tgt));
  std::vector<std::size_t> labels(src.size(), 0);
  labels.insert(labels.end(), tgt.size(), 1);
  const Var loss = disc_loss(model.disc, tape, pooled, labels);
  const double value = tape.value(loss).scalar();
  if (optimizer != nullptr) {
    model.disc.params().zero_grad();
    tape.backward(loss);
    optimizer->step();
  }
  return value;
}

void check_finite(double value, std::size_t step, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(what) + " loss is not finite at step " + std::to_string(step));
  }
}

}  // namespace

template <typename T>
void init_word_by_word(UmtModel<T>& model, nn::Adam<T>& optimizer, std::span<const TokenIds> src,
                       std::span<const TokenIds> tgt, std::size_t steps, std::size_t batch, Rng& rng) {
  if (steps == 0) return;
  if (src.empty() || tgt.empty()) throw InputError("init_word_by_word: both clusters must be non-empty");
  for (std::size_t step = 1; step <= steps; ++step) {
    const auto xs = sample_batch(src, batch, rng);
    const auto xt = sample_batch(tgt, batch, rng);
    Tape<T> tape;
    const Var a = model.net.loss(tape, xs, xs, tag(Lang::kSrc), tag(Lang::kTgt));
    const Var b = model.net.loss(tape, xt, xt, tag(Lang::kTgt), tag(Lang::kSrc));
    const Var loss = nn::add(tape, a, b);
    check_finite(tape.value(loss).scalar(), step, "word-by-word init");
    model.net.params().zero_grad();
    tape.backward(loss);
    optimizer.step();
  }
}

template <typename T>
UmtTrainResult<T> train_umt(std::span<const TokenIds> src, std::span<const TokenIds> tgt,
                            const nn::TransformerConfig& model_config, const UmtTrainConfig& config) {
  if (src.empty() || tgt.empty()) throw InputError("train_umt: both clusters must be non-empty");
  if (config.batch == 0) throw InputError("train_umt: batch must be >= 1");
  UmtTrainResult<T> result{UmtModel<T>(model_config, config.disc_hidden, config.seed), {}};
  auto& model = result.model;
  nn::Adam<T> ed_opt(config.optim, model.net.params().all());
  nn::Adam<T> disc_opt(config.optim, model.disc.params().all());
  Rng rng(Rng::derive(config.seed, 2));

  auto record = [&](std::size_t step, const LossComponents& c, double total, double disc) {
    LossRecord r;
    r.step = step;
    r.dae = c.dae_src + c.dae_tgt;
    r.bt = c.bt_src_tgt + c.bt_tgt_src;
    r.adv = c.adv_src_tgt + c.adv_tgt_src;
    r.disc = disc;
    r.total = total;
    return r;
  };

  // Row 0 evaluates the untrained model on a separate stream so that logging
  // does not perturb training.
  if (config.steps > 0) {
    Rng probe(Rng::derive(config.seed, 3));
    const auto xs = sample_batch(src, config.batch, probe);
    const auto xt = sample_batch(tgt, config.batch, probe);
    Tape<T> tape(false);
    const auto tl = total_loss(model, tape, xs, xt, config.weights, config.noise, probe);
    const double total = tape.value(tl.total).scalar();
    result.history.push_back(record(0, tl.components, total, discriminator_step<T>(model, nullptr, xs, xt)));
  }

  if (config.init == InitMode::kWordByWord) {
    init_word_by_word(model, ed_opt, src, tgt, config.init_steps, config.batch, rng);
  }

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto xs = sample_batch(src, config.batch, rng);
    const auto xt = sample_batch(tgt, config.batch, rng);

    Tape<T> tape;
    const auto tl = total_loss(model, tape, xs, xt, config.weights, config.noise, rng);
    const double total = tape.value(tl.total).scalar();
    check_finite(total, step, "encoder-decoder");
    model.net.params().zero_grad();
    tape.backward(tl.total);
    ed_opt.step();

    const double disc = discriminator_step(model, &disc_opt, xs, xt);
    check_finite(disc, step, "discriminator");

    if (config.log_every > 0 && (step % config.log_every == 0 || step == config.steps)) {
      result.history.push_back(record(step, tl.components, total, disc));
    }
  }
  return result;
}

std::string loss_history_csv(std::span<const LossRecord> history) {
  std::ostringstream os;
  os.precision(9);
  os << "step,dae,bt,adv,disc,total\n";
  for (const auto& r : history) {
    os << r.step << ',' << r.dae << ',' << r.bt << ',' << r.adv << ',' << r.disc << ',' << r.total << '\n';
  }
  return os.str();
}

template <typename T>
void save_umt(const UmtModel<T>& model, const std::filesystem::path& path, const std::string& rng_state) {
  const nlohmann::json meta = {{"kind", "umt"},
                               {"model", nn::to_json(model.net.config())},
                               {"disc_hidden", model.disc.hidden()},
                               {"vocab_fingerprint", model.vocab_fingerprint}};
  const auto params = model.all_params();
  nn::save_checkpoint<T>(path, meta, rng_state, params);
}

template <typename T>
UmtModel<T> load_umt(const std::filesystem::path& path) {
  const auto header = nn::read_checkpoint_header(path);
  const auto& meta = header.at("meta");
  if (meta.value("kind", "") != "umt") throw InputError(path.string() + ": not a UMT checkpoint");
  UmtModel<T> model(nn::transformer_config_from_json(meta.at("model")), meta.at("disc_hidden").get<std::size_t>(), 0);
  model.vocab_fingerprint = meta.at("vocab_fingerprint").get<std::uint64_t>();
  const auto params = model.all_params();
  nn::load_checkpoint_params<T>(path, params);
  return model;
}

#define UMTPARA_INSTANTIATE(T)                                                                                 \
  template class Discriminator<T>;                                                                             \
  template struct UmtModel<T>;                                                                                 \
  template Var dae_loss<T>(const UmtModel<T>&, Tape<T>&, std::span<const TokenIds>, Lang, const NoiseConfig&,   \
                           Rng&);                                                                              \
  template Var bt_loss<T>(const UmtModel<T>&, Tape<T>&, std::span<const TokenIds>, Lang, Lang,                   \
                          const NoiseConfig&, Rng&);                                                           \
  template Var disc_loss<T>(const Discriminator<T>&, Tape<T>&, Var, std::span<const std::size_t>);              \
  template Var adv_loss<T>(const UmtModel<T>&, Tape<T>&, std::span<const TokenIds>, Lang, Lang);               \
  template Var pooled_latents<T>(const UmtModel<T>&, Tape<T>&, std::span<const TokenIds>, Lang);               \
  template TotalLoss<T> total_loss<T>(const UmtModel<T>&, Tape<T>&, std::span<const TokenIds>,                  \
                                      std::span<const TokenIds>, const LossWeights&, const NoiseConfig&, Rng&); \
  template TokenIds translate<T>(const UmtModel<T>&, const TokenIds&, Lang, Lang);                             \
  template std::vector<TokenIds> translate_batch<T>(const UmtModel<T>&, std::span<const TokenIds>, Lang, Lang); \
  template void init_word_by_word<T>(UmtModel<T>&, nn::Adam<T>&, std::span<const TokenIds>,                    \
                                     std::span<const TokenIds>, std::size_t, std::size_t, Rng&);               \
  template UmtTrainResult<T> train_umt<T>(std::span<const TokenIds>, std::span<const TokenIds>,                \
                                          const nn::TransformerConfig&, const UmtTrainConfig&);                \
  template void save_umt<T>(const UmtModel<T>&, const std::filesystem::path&, const std::string&);             \
  template UmtModel<T> load_umt<T>(const std::filesystem::path&);

UMTPARA_INSTANTIATE(float)
UMTPARA_INSTANTIATE(double)

}  // namespace umtpara::umt
