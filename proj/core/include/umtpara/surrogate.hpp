#pragma once

// The single paraphraser distilled from the filtered pseudo pairs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtpara/corpus.hpp"
#include "umtpara/optim.hpp"
#include "umtpara/seq2seq.hpp"

namespace umtpara::surrogate {

struct Example {
  TokenIds src;
  TokenIds tgt;
};

// Encoded pairs tied to the vocabulary that produced the ids.
struct PairSet {
  std::vector<Example> examples;
  std::uint64_t vocab_fingerprint = 0;
};

PairSet encode_pairs(std::span<const std::pair<Tokens, Tokens>> pairs, const Vocab& vocab);

// Labeled pairs: TSV `source \t reference`, or JSONL with "source"/"reference"
// (or "src"/"tgt") fields. Tokenized with `tokenizer`.
std::vector<std::pair<Tokens, Tokens>> load_labeled_pairs(const std::filesystem::path& path,
                                                         const TokenizerConfig& tokenizer);

template <typename T>
struct SurrogateModel {
  explicit SurrogateModel(const nn::TransformerConfig& config, std::uint64_t seed = 0);

  nn::Seq2Seq<T> net;  // untagged
  std::uint64_t vocab_fingerprint = 0;
};

struct SurrogateTrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 256;
  nn::AdamConfig optim{1e-4, 0.9, 0.999, 1e-8, 4000, 0.0};
  std::uint64_t seed = 0;

  // Optimizer used by finetune unless overridden.
  static SurrogateTrainConfig finetune_defaults();
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based; the last one may be partial
  std::size_t steps = 0;  // optimizer steps in this epoch
  double mean_loss = 0.0;
};

struct TrainHistory {
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
};

template <typename T>
struct TrainResult {
  SurrogateModel<T> model;
  TrainHistory history;
};

// Teacher-forced training. Each epoch visits the pairs in a fresh seeded
// permutation, `batch` at a time.
template <typename T>
TrainResult<T> train_surrogate(const PairSet& pairs, const nn::TransformerConfig& model_config,
                               const SurrogateTrainConfig& config);

// Continues training `model`; the pairs must come from the same vocabulary.
template <typename T>
TrainHistory finetune(SurrogateModel<T>& model, const PairSet& pairs, const SurrogateTrainConfig& config);

// Mean teacher-forced loss over all pairs, no update.
template <typename T>
double evaluate_loss(const SurrogateModel<T>& model, const PairSet& pairs, std::size_t batch = 64);

template <typename T>
nn::BeamResult beam_decode(const SurrogateModel<T>& model, const TokenIds& tokens, const nn::BeamConfig& beam);

template <typename T>
std::string paraphrase(const SurrogateModel<T>& model, const Vocab& vocab, const std::string& text,
                       const TokenizerConfig& tokenizer, const nn::BeamConfig& beam);

template <typename T>
void save_surrogate(const SurrogateModel<T>& model, const std::filesystem::path& path,
                    const std::string& rng_state = {});
template <typename T>
SurrogateModel<T> load_surrogate(const std::filesystem::path& path);

std::string epoch_history_csv(std::span<const EpochRecord> epochs);

}  // namespace umtpara::surrogate
