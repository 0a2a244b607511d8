#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "umtpara/autodiff.hpp"
#include "umtpara/corpus.hpp"

namespace umtpara::nn {

struct TransformerConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t heads = 2;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  // Number of language tags; 0 builds an untagged model.
  std::size_t languages = 0;
  std::size_t max_positions = 512;

  static TransformerConfig desk(std::size_t vocab_size, std::size_t languages);
  // 6 encoder blocks, 6 decoder blocks, 8 heads, width 512, feed-forward 2048.
  static TransformerConfig paper(std::size_t vocab_size, std::size_t languages);

  void validate() const;
  bool operator==(const TransformerConfig&) const = default;
};

using Language = std::optional<std::size_t>;

struct BeamConfig {
  std::size_t width = 4;
  // Absolute output cap; 0 means 2 * input length + 5.
  std::size_t max_length = 0;
  double length_penalty = 0.6;
};

struct Hypothesis {
  TokenIds tokens;       // without BOS/EOS
  double log_prob = 0.0;
  double score = 0.0;    // log_prob / length^length_penalty
  bool finished = false; // ended with EOS rather than the cap
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> completed;
};

// Cap used by greedy translation and by beams without an explicit cap.
inline std::size_t default_output_cap(std::size_t input_length) { return 2 * input_length + 5; }

// Pre-LN transformer encoder-decoder over a shared token embedding. With
// language tags, e(x, l) adds tag l to every encoder input row and decoding
// toward l adds tag l to every decoder input row.
template <typename T>
class Seq2Seq {
 public:
  Seq2Seq(const TransformerConfig& config, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  // Token/tag embeddings and encoder blocks: everything e(x, l) depends on.
  std::vector<Parameter<T>*> encoder_params() const;

  struct Encoded {
    Var states;                     // packed rows, one per input token
    std::vector<Segment> segments;  // one per sentence
  };

  Encoded encode(Tape<T>& tape, std::span<const TokenIds> batch, Language lang) const;

  // Teacher-forced cross-entropy of producing `targets` (each followed by EOS)
  // from the encoded batch: per-sentence token mean, averaged over sentences.
  Var reconstruction_loss(Tape<T>& tape, const Encoded& memory, std::span<const TokenIds> targets,
                          Language lang) const;

  Var loss(Tape<T>& tape, std::span<const TokenIds> sources, std::span<const TokenIds> targets,
           Language source_lang, Language target_lang) const;

  // Greedy decoding, EOS-terminated, capped at default_output_cap(len).
  std::vector<TokenIds> greedy(std::span<const TokenIds> sources, Language source_lang,
                               Language target_lang) const;

  BeamResult beam_search(const TokenIds& source, const BeamConfig& beam, Language source_lang,
                         Language target_lang) const;

 private:
  struct AttentionBlock {
    Parameter<T>* wq; Parameter<T>* bq;
    Parameter<T>* wk; Parameter<T>* bk;
    Parameter<T>* wv; Parameter<T>* bv;
    Parameter<T>* wo; Parameter<T>* bo;
  };
  struct Norm {
    Parameter<T>* gain;
    Parameter<T>* bias;
  };
  struct FeedForward {
    Parameter<T>* w1; Parameter<T>* b1;
    Parameter<T>* w2; Parameter<T>* b2;
  };
  struct EncoderLayer {
    Norm ln1; AttentionBlock self; Norm ln2; FeedForward ff;
  };
  struct DecoderLayer {
    Norm ln1; AttentionBlock self; Norm ln2; AttentionBlock cross; Norm ln3; FeedForward ff;
  };

  struct DecodeState;

  AttentionBlock make_attention(const std::string& prefix);
  Norm make_norm(const std::string& prefix);
  FeedForward make_ff(const std::string& prefix);

  Var embed(Tape<T>& tape, std::span<const TokenId> ids, std::span<const std::uint32_t> positions,
            Language lang) const;
  Var project(Tape<T>& tape, Var x, Parameter<T>* w, Parameter<T>* b) const;
  Var norm(Tape<T>& tape, Var x, const Norm& n) const;
  Var feed_forward(Tape<T>& tape, Var x, const FeedForward& f) const;
  Var decoder_logits(Tape<T>& tape, const Encoded& memory, std::span<const TokenIds> inputs,
                     Language lang) const;

  DecodeState start_decoding(Tape<T>& tape, const Encoded& memory,
                             std::vector<std::uint32_t> memory_index) const;
  Var decode_step(Tape<T>& tape, DecodeState& state, std::span<const TokenId> last,
                  std::size_t position, Language lang) const;
  void reorder(Tape<T>& tape, DecodeState& state, std::span<const std::uint32_t> keep) const;

  TransformerConfig config_;
  ParameterStore<T> params_;
  Parameter<T>* token_embedding_ = nullptr;
  Parameter<T>* language_embedding_ = nullptr;
  std::vector<EncoderLayer> encoder_;
  Norm encoder_norm_{};
  std::vector<DecoderLayer> decoder_;
  Norm decoder_norm_{};
  Parameter<T>* out_w_ = nullptr;
  Parameter<T>* out_b_ = nullptr;
  Tensor<T> positions_;  // sinusoidal table, max_positions x d_model
};

// Xavier-uniform weights, zero biases, unit LayerNorm gains, N(0, 1/d)
// embeddings, N(0, 1) language tags.
template <typename T>
void initialize_parameters(ParameterStore<T>& params, std::uint64_t seed);

}  // namespace umtpara::nn
