#include <benchmark/benchmark.h>

#include <vector>

#include "umtpara/autodiff.hpp"
#include "umtpara/clustering.hpp"
#include "umtpara/fixtures.hpp"
#include "umtpara/metrics.hpp"
#include "umtpara/rng.hpp"
#include "umtpara/seq2seq.hpp"

using namespace umtpara;

namespace {

nn::Tensor<float> random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor<float> t(rows, cols);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor(n, n, 1), b = random_tensor(n, n, 2);
  for (auto _ : state) {
    nn::Tape<float> tape(false);
    const auto out = nn::matmul(tape, tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(tape.value(out).data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::ParameterStore<float> store;
  auto& a = store.add("a", n, n);
  auto& b = store.add("b", n, n);
  a.value = random_tensor(n, n, 1);
  b.value = random_tensor(n, n, 2);
  for (auto _ : state) {
    nn::Tape<float> tape;
    const auto prod = nn::matmul(tape, tape.parameter(a), tape.parameter(b));
    const auto loss = nn::segment_mean(tape, prod, std::vector<nn::Segment>{{0, static_cast<std::uint32_t>(n)}});
    tape.backward(nn::matmul(tape, loss, tape.constant(nn::Tensor<float>(n, 1, 1.0f))));
    benchmark::DoNotOptimize(a.grad.data.data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

void BM_Attention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 8, d = 64;
  const auto q = random_tensor(batch * len, d, 3);
  std::vector<nn::Segment> segs;
  for (std::size_t i = 0; i < batch; ++i) {
    segs.push_back({static_cast<std::uint32_t>(i * len), static_cast<std::uint32_t>(len)});
  }
  for (auto _ : state) {
    nn::Tape<float> tape(false);
    const auto x = tape.constant(q);
    const auto out = nn::attention(tape, x, x, x, 4, segs, segs, true);
    benchmark::DoNotOptimize(tape.value(out).data.data());
  }
}
BENCHMARK(BM_Attention)->Arg(8)->Arg(16)->Arg(32);

std::vector<TokenIds> token_batch(std::size_t n, std::size_t len, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenIds> out(n);
  for (auto& s : out) {
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(4 + rng.below(vocab - 4)));
  }
  return out;
}

void BM_Seq2SeqTrainStep(benchmark::State& state) {
  auto cfg = nn::TransformerConfig::desk(200, 0);
  cfg.d_model = static_cast<std::size_t>(state.range(0));
  cfg.d_ff = 2 * cfg.d_model;
  const nn::Seq2Seq<float> model(cfg, 1);
  const auto src = token_batch(16, 8, 200, 1), tgt = token_batch(16, 8, 200, 2);
  for (auto _ : state) {
    nn::Tape<float> tape;
    const auto loss = model.loss(tape, src, tgt, std::nullopt, std::nullopt);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss).data.data());
  }
}
BENCHMARK(BM_Seq2SeqTrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  auto cfg = nn::TransformerConfig::desk(200, 0);
  cfg.d_model = 32;
  cfg.d_ff = 64;
  const nn::Seq2Seq<float> model(cfg, 1);
  const auto src = token_batch(1, 8, 200, 3).front();
  nn::BeamConfig beam;
  beam.width = static_cast<std::size_t>(state.range(0));
  beam.max_length = 12;
  for (auto _ : state) benchmark::DoNotOptimize(model.beam_search(src, beam, std::nullopt, std::nullopt));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_LdaFit(benchmark::State& state) {
  fixtures::TopicCorpusSpec spec;
  spec.topics = 4;
  spec.sentences_per_topic = static_cast<std::size_t>(state.range(0)) / 4;
  const auto tc = fixtures::gen_topic_corpus(spec);
  std::vector<SentenceRecord> corpus;
  for (const auto& s : tc.sentences) corpus.push_back({static_cast<std::uint32_t>(corpus.size()), s, tokenize(s, {}), {}});
  const auto vocab = build_vocab(corpus, 1);
  encode_corpus(corpus, vocab);
  LdaConfig cfg;
  cfg.k = 4;
  cfg.sweeps = 5;
  for (auto _ : state) benchmark::DoNotOptimize(lda_fit(corpus, vocab.size(), cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LdaFit)->Arg(600)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_CorpusBleu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<Tokens> cands(n), refs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 12; ++j) {
      cands[i].push_back("w" + std::to_string(rng.below(50)));
      refs[i].push_back("w" + std::to_string(rng.below(50)));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::corpus_bleu(cands, refs, 4));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_CorpusBleu)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
