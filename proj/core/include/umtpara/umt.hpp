#pragma once

// Unsupervised translation between two clusters C_src and C_tgt: a shared
// tagged encoder-decoder trained with denoising auto-encoding, back-translation
// and an adversarial latent discriminator, alternating with discriminator steps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "umtpara/autodiff.hpp"
#include "umtpara/corpus.hpp"
#include "umtpara/optim.hpp"
#include "umtpara/rng.hpp"
#include "umtpara/seq2seq.hpp"

namespace umtpara::umt {

using nn::Tape;
using nn::Var;
using nn::Tensor;

enum class Lang : std::size_t { kSrc = 0, kTgt = 1 };

inline Lang other(Lang l) { return l == Lang::kSrc ? Lang::kTgt : Lang::kSrc; }
inline nn::Language tag(Lang l) { return static_cast<std::size_t>(l); }

// N(x): word dropout followed by a local shuffle.
struct NoiseConfig {
  double drop_prob = 0.1;
  std::size_t swap_window = 3;
};

// Each token is dropped with probability drop_prob (one uniformly chosen token
// survives when all would drop); survivors are then permuted so that none
// moves more than swap_window positions.
TokenIds noise_apply(std::span<const TokenId> tokens, const NoiseConfig& config, Rng& rng);

struct LossWeights {
  double dae = 1.0;
  double bt = 1.0;
  double adv = 1.0;
};

// Per-term values of the encoder-decoder objective.
struct LossComponents {
  double dae_src = 0, dae_tgt = 0;
  double bt_src_tgt = 0, bt_tgt_src = 0;
  double adv_src_tgt = 0, adv_tgt_src = 0;
};

// lambda_dae (DAE_src + DAE_tgt) + lambda_bt (BT_st + BT_ts) + lambda_adv (Adv_st + Adv_ts)
double weighted_total(const LossComponents& c, const LossWeights& w);

// Mean-pooled encoder latents -> affine -> relu -> affine -> 2-way logits.
template <typename T>
class Discriminator {
 public:
  Discriminator(std::size_t d_model, std::size_t hidden, std::uint64_t seed);

  nn::ParameterStore<T>& params() { return params_; }
  const nn::ParameterStore<T>& params() const { return params_; }
  std::size_t hidden() const { return hidden_; }

  // With `frozen`, the discriminator's own parameters receive no gradient.
  Var logits(Tape<T>& tape, Var pooled, bool frozen) const;

 private:
  std::size_t hidden_;
  nn::ParameterStore<T> params_;
};

template <typename T>
struct UmtModel {
  UmtModel(const nn::TransformerConfig& config, std::size_t disc_hidden, std::uint64_t seed);

  nn::Seq2Seq<T> net;
  Discriminator<T> disc;
  std::uint64_t vocab_fingerprint = 0;

  std::vector<nn::Parameter<T>*> all_params() const;
};

// Loss terms. Each adds its graph to `tape` and returns a 1x1 node.

template <typename T>
Var dae_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang lang,
             const NoiseConfig& noise, Rng& rng);

// y = M(x) is decoded greedily outside the graph, corrupted, encoded under
// `to` and decoded back toward `from`. An empty translation is replaced by a
// single UNK so the encoder always has input.
template <typename T>
Var bt_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang from,
            Lang to, const NoiseConfig& noise, Rng& rng);

// Mean of -log p(label | latent). `pooled` is one row per sentence; labels are
// 0 (src) or 1 (tgt).
template <typename T>
Var disc_loss(const Discriminator<T>& disc, Tape<T>& tape, Var pooled,
              std::span<const std::size_t> labels);

// Mean of -log p(to | e(x, from)) with the discriminator frozen.
template <typename T>
Var adv_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang from,
             Lang to);

// Mean-pooled encoder output for a batch, one row per sentence.
template <typename T>
Var pooled_latents(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> batch, Lang lang);

template <typename T>
struct TotalLoss {
  Var total;
  LossComponents components;
};

template <typename T>
TotalLoss<T> total_loss(const UmtModel<T>& model, Tape<T>& tape, std::span<const TokenIds> src_batch,
                        std::span<const TokenIds> tgt_batch, const LossWeights& weights,
                        const NoiseConfig& noise, Rng& rng);

// Greedy translation with the target language tag.
template <typename T>
TokenIds translate(const UmtModel<T>& model, const TokenIds& tokens, Lang from, Lang to);
template <typename T>
std::vector<TokenIds> translate_batch(const UmtModel<T>& model, std::span<const TokenIds> batch,
                                      Lang from, Lang to);

enum class InitMode { kWordByWord, kNone };

struct UmtTrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 16;
  nn::AdamConfig optim{0.00025, 0.5, 0.999, 1e-8, 0, 0.0};
  NoiseConfig noise;
  LossWeights weights;
  InitMode init = InitMode::kWordByWord;
  std::size_t init_steps = 1000;
  std::size_t disc_hidden = 64;
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
};

struct LossRecord {
  std::size_t step = 0;
  double dae = 0, bt = 0, adv = 0, disc = 0, total = 0;
};

template <typename T>
struct UmtTrainResult {
  UmtModel<T> model;
  std::vector<LossRecord> history;
};

// Identity-copy pretraining: each sentence is decoded unchanged under the
// opposite language tag, i.e. a word-by-word translation whose dictionary maps
// every word to itself.
template <typename T>
void init_word_by_word(UmtModel<T>& model, nn::Adam<T>& optimizer, std::span<const TokenIds> src,
                       std::span<const TokenIds> tgt, std::size_t steps, std::size_t batch, Rng& rng);

template <typename T>
UmtTrainResult<T> train_umt(std::span<const TokenIds> src, std::span<const TokenIds> tgt,
                            const nn::TransformerConfig& model_config, const UmtTrainConfig& config);

std::string loss_history_csv(std::span<const LossRecord> history);

template <typename T>
void save_umt(const UmtModel<T>& model, const std::filesystem::path& path, const std::string& rng_state = {});
template <typename T>
UmtModel<T> load_umt(const std::filesystem::path& path);

}  // namespace umtpara::umt
