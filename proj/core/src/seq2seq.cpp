#include "umtpara/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "umtpara/error.hpp"
#include "umtpara/rng.hpp"

namespace umtpara::nn {

TransformerConfig TransformerConfig::desk(std::size_t vocab_size, std::size_t languages) {
  TransformerConfig c;
  c.vocab_size = vocab_size;
  c.languages = languages;
  return c;
}

TransformerConfig TransformerConfig::paper(std::size_t vocab_size, std::size_t languages) {
  TransformerConfig c;
  c.vocab_size = vocab_size;
  c.languages = languages;
  c.d_model = 512;
  c.d_ff = 2048;
  c.heads = 8;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  return c;
}

void TransformerConfig::validate() const {
  if (vocab_size < 4) throw InputError("model vocabulary must include the 4 specials");
  if (d_model == 0 || d_ff == 0 || heads == 0) throw InputError("model widths must be positive");
  if (d_model % heads != 0) throw InputError("d_model must be divisible by heads");
  if (max_positions == 0) throw InputError("max_positions must be positive");
}

template <typename T>
void initialize_parameters(ParameterStore<T>& params, std::uint64_t seed) {
  Rng rng(seed);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto* p : params.all()) {
    auto& v = p->value;
    const std::string last = p->name.substr(p->name.rfind('.') + 1);
    if (ends_with(p->name, ".gain")) {
      std::fill(v.data.begin(), v.data.end(), T(1));
    } else if (ends_with(p->name, ".bias") || (!last.empty() && last[0] == 'b')) {
      std::fill(v.data.begin(), v.data.end(), T(0));
    } else if (p->name == "tok_emb") {
      const double sd = 1.0 / std::sqrt(static_cast<double>(v.cols));
      for (auto& x : v.data) x = static_cast<T>(rng.normal() * sd);
    } else if (p->name == "lang_emb") {
      for (auto& x : v.data) x = static_cast<T>(rng.normal());
    } else {
      const double a = std::sqrt(6.0 / static_cast<double>(v.rows + v.cols));
      for (auto& x : v.data) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * a);
    }
  }
}

template <typename T>
struct Seq2Seq<T>::DecodeState {
  std::vector<Var> self_k, self_v;  // per layer; hypothesis-major, `length` rows each
  std::vector<Var> mem_k, mem_v;    // per layer; packed source rows
  std::vector<Segment> source_segments;
  std::vector<std::uint32_t> memory_index;  // hypothesis -> source
  std::size_t length = 0;
};

template <typename T>
Seq2Seq<T>::Seq2Seq(const TransformerConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  token_embedding_ = &params_.add("tok_emb", config_.vocab_size, d);
  if (config_.languages > 0) language_embedding_ = &params_.add("lang_emb", config_.languages, d);
  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    const std::string p = "enc." + std::to_string(i) + ".";
    EncoderLayer layer;
    layer.ln1 = make_norm(p + "ln1");
    layer.self = make_attention(p + "self");
    layer.ln2 = make_norm(p + "ln2");
    layer.ff = make_ff(p + "ff");
    encoder_.push_back(layer);
  }
  encoder_norm_ = make_norm("enc.ln");
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    const std::string p = "dec." + std::to_string(i) + ".";
    DecoderLayer layer;
    layer.ln1 = make_norm(p + "ln1");
    layer.self = make_attention(p + "self");
    layer.ln2 = make_norm(p + "ln2");
    layer.cross = make_attention(p + "cross");
    layer.ln3 = make_norm(p + "ln3");
    layer.ff = make_ff(p + "ff");
    decoder_.push_back(layer);
  }
  decoder_norm_ = make_norm("dec.ln");
  out_w_ = &params_.add("out.w", d, config_.vocab_size);
  out_b_ = &params_.add("out.b", 1, config_.vocab_size);
  initialize_parameters(params_, seed);

  positions_ = Tensor<T>(config_.max_positions, d);
  for (std::size_t pos = 0; pos < config_.max_positions; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      positions_(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) positions_(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
}

template <typename T>
typename Seq2Seq<T>::AttentionBlock Seq2Seq<T>::make_attention(const std::string& prefix) {
  const std::size_t d = config_.d_model;
  AttentionBlock a;
  a.wq = &params_.add(prefix + ".wq", d, d);
  a.bq = &params_.add(prefix + ".bq", 1, d);
  a.wk = &params_.add(prefix + ".wk", d, d);
  // No key bias: it shifts every logit of a query equally and softmax ignores it.
  a.bk = nullptr;
  a.wv = &params_.add(prefix + ".wv", d, d);
  a.bv = &params_.add(prefix + ".bv", 1, d);
  a.wo = &params_.add(prefix + ".wo", d, d);
  a.bo = &params_.add(prefix + ".bo", 1, d);
  return a;
}

template <typename T>
typename Seq2Seq<T>::Norm Seq2Seq<T>::make_norm(const std::string& prefix) {
  Norm n;
  n.gain = &params_.add(prefix + ".gain", 1, config_.d_model);
  n.bias = &params_.add(prefix + ".bias", 1, config_.d_model);
  return n;
}

template <typename T>
typename Seq2Seq<T>::FeedForward Seq2Seq<T>::make_ff(const std::string& prefix) {
  FeedForward f;
  f.w1 = &params_.add(prefix + ".w1", config_.d_model, config_.d_ff);
  f.b1 = &params_.add(prefix + ".b1", 1, config_.d_ff);
  f.w2 = &params_.add(prefix + ".w2", config_.d_ff, config_.d_model);
  f.b2 = &params_.add(prefix + ".b2", 1, config_.d_model);
  return f;
}

template <typename T>
std::vector<Parameter<T>*> Seq2Seq<T>::encoder_params() const {
  std::vector<Parameter<T>*> out;
  for (auto* p : params_.all()) {
    if (p->name == "tok_emb" || p->name == "lang_emb" || p->name.rfind("enc.", 0) == 0) {
      out.push_back(p);
    }
  }
  return out;
}

template <typename T>
Var Seq2Seq<T>::embed(Tape<T>& tape, std::span<const TokenId> ids,
                      std::span<const std::uint32_t> positions, Language lang) const {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside the model vocabulary");
    }
  }
  Tensor<T> pos(ids.size(), config_.d_model);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= config_.max_positions) {
      throw InputError("sequence longer than max_positions=" + std::to_string(config_.max_positions));
    }
    const auto src = positions_.row(positions[i]);
    std::copy(src.begin(), src.end(), pos.row(i).begin());
  }
  Var x = embedding(tape, tape.parameter(*token_embedding_), ids);
  x = scale(tape, x, static_cast<T>(std::sqrt(static_cast<double>(config_.d_model))));
  x = add(tape, x, tape.constant(std::move(pos)));
  if (config_.languages > 0) {
    if (!lang || *lang >= config_.languages) throw InputError("model needs a valid language tag");
    const std::uint32_t row = static_cast<std::uint32_t>(*lang);
    x = add_row(tape, x, gather_rows(tape, tape.parameter(*language_embedding_), std::span(&row, 1)));
  } else if (lang) {
    throw InputError("untagged model given a language tag");
  }
  return x;
}

template <typename T>
Var Seq2Seq<T>::project(Tape<T>& tape, Var x, Parameter<T>* w, Parameter<T>* b) const {
  if (b == nullptr) return matmul(tape, x, tape.parameter(*w));
  return affine(tape, x, tape.parameter(*w), tape.parameter(*b));
}

template <typename T>
Var Seq2Seq<T>::norm(Tape<T>& tape, Var x, const Norm& n) const {
  return layer_norm(tape, x, tape.parameter(*n.gain), tape.parameter(*n.bias));
}

template <typename T>
Var Seq2Seq<T>::feed_forward(Tape<T>& tape, Var x, const FeedForward& f) const {
  return project(tape, relu(tape, project(tape, x, f.w1, f.b1)), f.w2, f.b2);
}

template <typename T>
typename Seq2Seq<T>::Encoded Seq2Seq<T>::encode(Tape<T>& tape, std::span<const TokenIds> batch,
                                                Language lang) const {
  Encoded enc;
  std::vector<TokenId> ids;
  std::vector<std::uint32_t> positions;
  for (const auto& s : batch) {
    if (s.empty()) throw InputError("cannot encode an empty sentence");
    enc.segments.push_back({static_cast<std::uint32_t>(ids.size()), static_cast<std::uint32_t>(s.size())});
    for (std::size_t i = 0; i < s.size(); ++i) {
      ids.push_back(s[i]);
      positions.push_back(static_cast<std::uint32_t>(i));
    }
  }
  Var x = embed(tape, ids, positions, lang);
  for (const auto& layer : encoder_) {
    Var a = norm(tape, x, layer.ln1);
    Var q = project(tape, a, layer.self.wq, layer.self.bq);
    Var k = project(tape, a, layer.self.wk, layer.self.bk);
    Var v = project(tape, a, layer.self.wv, layer.self.bv);
    Var att = attention(tape, q, k, v, config_.heads, enc.segments, enc.segments, false);
    x = add(tape, x, project(tape, att, layer.self.wo, layer.self.bo));
    x = add(tape, x, feed_forward(tape, norm(tape, x, layer.ln2), layer.ff));
  }
  enc.states = norm(tape, x, encoder_norm_);
  return enc;
}

template <typename T>
Var Seq2Seq<T>::decoder_logits(Tape<T>& tape, const Encoded& memory,
                               std::span<const TokenIds> inputs, Language lang) const {
  std::vector<TokenId> ids;
  std::vector<std::uint32_t> positions;
  std::vector<Segment> segs;
  for (const auto& s : inputs) {
    segs.push_back({static_cast<std::uint32_t>(ids.size()), static_cast<std::uint32_t>(s.size())});
    for (std::size_t i = 0; i < s.size(); ++i) {
      ids.push_back(s[i]);
      positions.push_back(static_cast<std::uint32_t>(i));
    }
  }
  Var x = embed(tape, ids, positions, lang);
  for (const auto& layer : decoder_) {
    Var a = norm(tape, x, layer.ln1);
    Var q = project(tape, a, layer.self.wq, layer.self.bq);
    Var k = project(tape, a, layer.self.wk, layer.self.bk);
    Var v = project(tape, a, layer.self.wv, layer.self.bv);
    Var att = attention(tape, q, k, v, config_.heads, segs, segs, true);
    x = add(tape, x, project(tape, att, layer.self.wo, layer.self.bo));

    a = norm(tape, x, layer.ln2);
    q = project(tape, a, layer.cross.wq, layer.cross.bq);
    k = project(tape, memory.states, layer.cross.wk, layer.cross.bk);
    v = project(tape, memory.states, layer.cross.wv, layer.cross.bv);
    att = attention(tape, q, k, v, config_.heads, segs, memory.segments, false);
    x = add(tape, x, project(tape, att, layer.cross.wo, layer.cross.bo));

    x = add(tape, x, feed_forward(tape, norm(tape, x, layer.ln3), layer.ff));
  }
  x = norm(tape, x, decoder_norm_);
  return project(tape, x, out_w_, out_b_);
}

template <typename T>
Var Seq2Seq<T>::reconstruction_loss(Tape<T>& tape, const Encoded& memory,
                                    std::span<const TokenIds> targets, Language lang) const {
  if (targets.empty()) throw InputError("empty batch");
  if (targets.size() != memory.segments.size()) {
    throw ShapeError("reconstruction_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(memory.segments.size()) + " encoded sentences");
  }
  std::vector<TokenIds> inputs;
  std::vector<TokenId> gold;
  std::vector<T> weights;
  const T per_sentence = T(1) / static_cast<T>(targets.size());
  for (const auto& y : targets) {
    TokenIds in;
    in.reserve(y.size() + 1);
    in.push_back(Vocab::kBos);
    in.insert(in.end(), y.begin(), y.end());
    inputs.push_back(std::move(in));
    for (TokenId w : y) gold.push_back(w);
    gold.push_back(Vocab::kEos);
    const T w = per_sentence / static_cast<T>(y.size() + 1);
    weights.insert(weights.end(), y.size() + 1, w);
  }
  Var logits = decoder_logits(tape, memory, inputs, lang);
  return cross_entropy(tape, logits, gold, std::span<const T>(weights));
}

template <typename T>
Var Seq2Seq<T>::loss(Tape<T>& tape, std::span<const TokenIds> sources,
                     std::span<const TokenIds> targets, Language source_lang,
                     Language target_lang) const {
  if (sources.empty()) throw InputError("empty batch");
  const auto memory = encode(tape, sources, source_lang);
  return reconstruction_loss(tape, memory, targets, target_lang);
}

template <typename T>
typename Seq2Seq<T>::DecodeState Seq2Seq<T>::start_decoding(
    Tape<T>& tape, const Encoded& memory, std::vector<std::uint32_t> memory_index) const {
  DecodeState st;
  st.source_segments = memory.segments;
  st.memory_index = std::move(memory_index);
  for (const auto& layer : decoder_) {
    st.mem_k.push_back(project(tape, memory.states, layer.cross.wk, layer.cross.bk));
    st.mem_v.push_back(project(tape, memory.states, layer.cross.wv, layer.cross.bv));
    st.self_k.push_back(tape.constant(Tensor<T>(0, config_.d_model)));
    st.self_v.push_back(tape.constant(Tensor<T>(0, config_.d_model)));
  }
  return st;
}

template <typename T>
Var Seq2Seq<T>::decode_step(Tape<T>& tape, DecodeState& st, std::span<const TokenId> last,
                            std::size_t position, Language lang) const {
  const std::size_t hyps = st.memory_index.size();
  if (last.size() != hyps) throw ShapeError("decode_step: token count differs from hypothesis count");
  const std::size_t len = st.length;
  std::vector<std::uint32_t> pos(hyps, static_cast<std::uint32_t>(position));
  Var x = embed(tape, last, pos, lang);

  // Appending one row per hypothesis keeps each hypothesis' cache contiguous.
  std::vector<std::uint32_t> order;
  order.reserve(hyps * (len + 1));
  for (std::size_t h = 0; h < hyps; ++h) {
    for (std::size_t i = 0; i < len; ++i) order.push_back(static_cast<std::uint32_t>(h * len + i));
    order.push_back(static_cast<std::uint32_t>(hyps * len + h));
  }
  std::vector<Segment> q_segs(hyps), k_segs(hyps), m_segs(hyps);
  for (std::size_t h = 0; h < hyps; ++h) {
    q_segs[h] = {static_cast<std::uint32_t>(h), 1};
    k_segs[h] = {static_cast<std::uint32_t>(h * (len + 1)), static_cast<std::uint32_t>(len + 1)};
    m_segs[h] = st.source_segments[st.memory_index[h]];
  }

  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    Var a = norm(tape, x, layer.ln1);
    Var q = project(tape, a, layer.self.wq, layer.self.bq);
    Var k = project(tape, a, layer.self.wk, layer.self.bk);
    Var v = project(tape, a, layer.self.wv, layer.self.bv);
    st.self_k[l] = gather_rows(tape, concat_rows(tape, st.self_k[l], k), order);
    st.self_v[l] = gather_rows(tape, concat_rows(tape, st.self_v[l], v), order);
    Var att = attention(tape, q, st.self_k[l], st.self_v[l], config_.heads, q_segs, k_segs, false);
    x = add(tape, x, project(tape, att, layer.self.wo, layer.self.bo));

    a = norm(tape, x, layer.ln2);
    q = project(tape, a, layer.cross.wq, layer.cross.bq);
    att = attention(tape, q, st.mem_k[l], st.mem_v[l], config_.heads, q_segs, m_segs, false);
    x = add(tape, x, project(tape, att, layer.cross.wo, layer.cross.bo));

    x = add(tape, x, feed_forward(tape, norm(tape, x, layer.ln3), layer.ff));
  }
  st.length = len + 1;
  x = norm(tape, x, decoder_norm_);
  return project(tape, x, out_w_, out_b_);
}

template <typename T>
void Seq2Seq<T>::reorder(Tape<T>& tape, DecodeState& st, std::span<const std::uint32_t> keep) const {
  const std::size_t len = st.length;
  std::vector<std::uint32_t> rows;
  rows.reserve(keep.size() * len);
  std::vector<std::uint32_t> index;
  for (auto h : keep) {
    for (std::size_t i = 0; i < len; ++i) rows.push_back(static_cast<std::uint32_t>(h * len + i));
    index.push_back(st.memory_index[h]);
  }
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    st.self_k[l] = gather_rows(tape, st.self_k[l], rows);
    st.self_v[l] = gather_rows(tape, st.self_v[l], rows);
  }
  st.memory_index = std::move(index);
}

namespace {

template <typename T>
TokenId argmax_row(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

template <typename T>
std::vector<TokenIds> Seq2Seq<T>::greedy(std::span<const TokenIds> sources, Language source_lang,
                                         Language target_lang) const {
  std::vector<TokenIds> outputs(sources.size());
  if (sources.empty()) return outputs;
  Tape<T> tape(false);
  const auto memory = encode(tape, sources, source_lang);
  std::vector<std::uint32_t> active(sources.size());
  std::iota(active.begin(), active.end(), 0U);
  auto state = start_decoding(tape, memory, active);
  std::vector<TokenId> last(sources.size(), Vocab::kBos);

  for (std::size_t step = 0; !active.empty(); ++step) {
    const Var logits = decode_step(tape, state, last, step, target_lang);
    const auto& L = tape.value(logits);
    std::vector<std::uint32_t> keep, next_active;
    std::vector<TokenId> next_last;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto i = active[r];
      const TokenId w = argmax_row<T>(L.row(r));
      if (w == Vocab::kEos) continue;
      outputs[i].push_back(w);
      if (outputs[i].size() >= default_output_cap(sources[i].size())) continue;
      keep.push_back(static_cast<std::uint32_t>(r));
      next_active.push_back(i);
      next_last.push_back(w);
    }
    if (keep.size() != active.size()) reorder(tape, state, keep);
    active = std::move(next_active);
    last = std::move(next_last);
  }
  return outputs;
}

template <typename T>
BeamResult Seq2Seq<T>::beam_search(const TokenIds& source, const BeamConfig& beam,
                                   Language source_lang, Language target_lang) const {
  if (beam.width == 0) throw InputError("beam width must be >= 1");
  const std::size_t cap = beam.max_length > 0 ? beam.max_length : default_output_cap(source.size());
  auto normalized = [&](double log_prob, std::size_t length) {
    return log_prob / std::pow(static_cast<double>(std::max<std::size_t>(length, 1)), beam.length_penalty);
  };

  Tape<T> tape(false);
  const std::vector<TokenIds> batch{source};
  const auto memory = encode(tape, batch, source_lang);
  auto state = start_decoding(tape, memory, {0});
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> completed;

  struct Candidate {
    double log_prob;
    std::uint32_t parent;
    TokenId token;
  };
  std::vector<double> logp;
  for (std::size_t step = 0; step < cap && !live.empty(); ++step) {
    std::vector<TokenId> last;
    for (const auto& h : live) last.push_back(h.tokens.empty() ? Vocab::kBos : h.tokens.back());
    const Var logits = decode_step(tape, state, last, step, target_lang);
    const auto& L = tape.value(logits);

    std::vector<Candidate> cands;
    cands.reserve(live.size() * L.cols);
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto row = L.row(h);
      double mx = -std::numeric_limits<double>::infinity();
      for (T v : row) mx = std::max(mx, static_cast<double>(v));
      double sum = 0.0;
      for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
      const double lse = mx + std::log(sum);
      for (std::size_t w = 0; w < row.size(); ++w) {
        cands.push_back({live[h].log_prob + static_cast<double>(row[w]) - lse,
                         static_cast<std::uint32_t>(h), static_cast<TokenId>(w)});
      }
    }
    // Rank by score; ties go to the earlier hypothesis, then the lower token id.
    const std::size_t take = std::min(cands.size(), beam.width);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    std::vector<std::uint32_t> parents;
    const bool at_cap = step + 1 == cap;
    for (std::size_t c = 0; c < take; ++c) {
      const auto& cand = cands[c];
      Hypothesis h;
      h.tokens = live[cand.parent].tokens;
      h.log_prob = cand.log_prob;
      if (cand.token == Vocab::kEos) {
        h.finished = true;
        h.score = normalized(h.log_prob, h.tokens.size() + 1);
        completed.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(cand.token);
      if (at_cap) {
        h.score = normalized(h.log_prob, h.tokens.size());
        completed.push_back(std::move(h));
        continue;
      }
      next.push_back(std::move(h));
      parents.push_back(cand.parent);
    }
    if (completed.size() >= beam.width) break;
    if (!next.empty()) reorder(tape, state, parents);
    live = std::move(next);
  }

  BeamResult result;
  result.completed = std::move(completed);
  if (result.completed.empty()) throw Error("beam search produced no hypothesis");
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.completed.size(); ++i) {
    if (result.completed[i].score > result.completed[best].score) best = i;
  }
  result.best = result.completed[best];
  return result;
}

template class Seq2Seq<float>;
template class Seq2Seq<double>;
template void initialize_parameters<float>(ParameterStore<float>&, std::uint64_t);
template void initialize_parameters<double>(ParameterStore<double>&, std::uint64_t);

}  // namespace umtpara::nn
