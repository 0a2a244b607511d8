#include <doctest.h>

#include "helpers.hpp"
#include "umtpara/error.hpp"
#include "umtpara/grad_check.hpp"
#include "umtpara/io.hpp"
#include "umtpara/rng.hpp"
#include "umtpara/surrogate.hpp"

using namespace umtpara;
using namespace umtpara::surrogate;

TEST_SUITE_BEGIN("surrogate");

namespace {

nn::TransformerConfig small(std::size_t vocab, std::size_t d = 32) {
  auto c = nn::TransformerConfig::desk(vocab, 0);
  c.d_model = d;
  c.d_ff = 2 * d;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.max_positions = 64;
  return c;
}

// Paraphrase rule: swap "a<i>" for "b<i>" and keep the rest.
struct Toy {
  Vocab vocab;
  std::vector<std::pair<Tokens, Tokens>> pairs;
};

Toy toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Toy t;
  Tokens regular;
  for (int i = 0; i < 6; ++i) {
    regular.push_back("a" + std::to_string(i));
    regular.push_back("b" + std::to_string(i));
  }
  for (int i = 0; i < 10; ++i) regular.push_back("w" + std::to_string(i));
  t.vocab = Vocab::from_tokens(regular);
  for (std::size_t k = 0; k < n; ++k) {
    Tokens src, tgt;
    const auto len = 3 + rng.below(4);
    for (std::size_t j = 0; j < len; ++j) {
      if (rng.below(3) == 0) {
        const auto m = std::to_string(rng.below(6));
        src.push_back("a" + m);
        tgt.push_back("b" + m);
      } else {
        const auto w = "w" + std::to_string(rng.below(10));
        src.push_back(w);
        tgt.push_back(w);
      }
    }
    t.pairs.emplace_back(src, tgt);
  }
  return t;
}

std::vector<std::vector<float>> snapshot(const SurrogateModel<float>& m) {
  std::vector<std::vector<float>> out;
  for (auto* p : m.net.params().all()) out.push_back(p->value.data);
  return out;
}

SurrogateTrainConfig quick(std::size_t steps, std::size_t batch = 10) {
  SurrogateTrainConfig c;
  c.steps = steps;
  c.batch = batch;
  c.optim = {0.003, 0.9, 0.98, 1e-8, 0, 0.0};
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("surrogate overfits 10 fixed pairs") {
  const auto t = toy(10, 1);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  auto r = train_surrogate<float>(ps, small(t.vocab.size()), quick(1000));
  REQUIRE(r.history.step_losses.size() == 1000);
  CHECK(r.history.step_losses.back() <= 0.1 * r.history.step_losses.front());
  CHECK(evaluate_loss(r.model, ps) <= 0.1 * r.history.step_losses.front());
  CHECK(r.history.epochs.size() == 1000);
}

TEST_CASE("zero steps return the initialized model") {
  const auto t = toy(10, 2);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  auto r = train_surrogate<float>(ps, small(t.vocab.size()), quick(0));
  SurrogateModel<float> fresh(small(t.vocab.size()), Rng::derive(5, 0));
  CHECK(snapshot(r.model) == snapshot(fresh));
  CHECK(r.model.vocab_fingerprint == t.vocab.fingerprint());

  auto m = std::move(r.model);
  const auto before = snapshot(m);
  (void)finetune(m, ps, quick(0));
  CHECK(snapshot(m) == before);
}

TEST_CASE("training is reproducible to the byte") {
  testing::TempDir dir;
  const auto t = toy(20, 3);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  const auto a = train_surrogate<float>(ps, small(t.vocab.size(), 16), quick(20, 4));
  const auto b = train_surrogate<float>(ps, small(t.vocab.size(), 16), quick(20, 4));
  save_surrogate(a.model, dir / "a.ckpt");
  save_surrogate(b.model, dir / "b.ckpt");
  CHECK(sha256_file(dir / "a.ckpt") == sha256_file(dir / "b.ckpt"));
  const auto loaded = load_surrogate<float>(dir / "a.ckpt");
  CHECK(snapshot(loaded) == snapshot(a.model));
  CHECK(loaded.vocab_fingerprint == a.model.vocab_fingerprint);
}

TEST_CASE("finetuning a fitted model keeps the loss near zero") {
  const auto t = toy(10, 4);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  auto r = train_surrogate<float>(ps, small(t.vocab.size()), quick(1000));
  const double fitted = evaluate_loss(r.model, ps);
  REQUIRE(fitted < 0.05);
  auto cfg = quick(100);
  cfg.optim.lr = 1e-4;
  (void)finetune(r.model, ps, cfg);
  CHECK(evaluate_loss(r.model, ps) < 0.05);
}

TEST_CASE("finetuning improves held-out loss on labeled data") {
  const auto t = toy(140, 6);
  std::vector<std::pair<Tokens, Tokens>> pseudo_pairs, labeled, dev;
  // Pretraining data copies; the labeled data carries the marker rule.
  for (std::size_t i = 0; i < 60; ++i) pseudo_pairs.emplace_back(t.pairs[i].first, t.pairs[i].first);
  for (std::size_t i = 60; i < 120; ++i) labeled.push_back(t.pairs[i]);
  for (std::size_t i = 120; i < 140; ++i) dev.push_back(t.pairs[i]);
  auto pre = train_surrogate<float>(encode_pairs(pseudo_pairs, t.vocab), small(t.vocab.size()), quick(150, 16));
  auto model = std::move(pre.model);
  const auto dev_set = encode_pairs(dev, t.vocab);
  const double before = evaluate_loss(model, dev_set);
  auto cfg = SurrogateTrainConfig::finetune_defaults();
  cfg.steps = 150;
  cfg.batch = 16;
  cfg.optim.lr = 0.002;
  cfg.optim.warmup = 0;
  (void)finetune(model, encode_pairs(labeled, t.vocab), cfg);
  CHECK(evaluate_loss(model, dev_set) < before);
}

TEST_CASE("finetune rejects a foreign vocabulary") {
  const auto t = toy(10, 7);
  auto r = train_surrogate<float>(encode_pairs(t.pairs, t.vocab), small(t.vocab.size(), 16), quick(1));
  PairSet other = encode_pairs(t.pairs, t.vocab);
  other.vocab_fingerprint ^= 1;
  CHECK_THROWS_AS(finetune(r.model, other, quick(1)), InputError);
}

TEST_CASE("beam decoding") {
  const auto t = toy(30, 8);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  const auto r = train_surrogate<float>(ps, small(t.vocab.size(), 16), quick(60, 8));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& src = ps.examples[i].src;
    nn::BeamConfig one{1, 0, 0.6};
    const std::vector<TokenIds> batch{src};
    CHECK(beam_decode(r.model, src, one).best.tokens == r.model.net.greedy(batch, std::nullopt, std::nullopt)[0]);

    nn::BeamConfig four{4, 0, 0.6};
    const auto b = beam_decode(r.model, src, four);
    CHECK(b.best.tokens.size() <= nn::default_output_cap(src.size()));
    for (const auto& h : b.completed) CHECK(b.best.score >= h.score);
  }
}

TEST_CASE("paraphrase is deterministic and capped") {
  const auto t = toy(30, 9);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  const auto r = train_surrogate<float>(ps, small(t.vocab.size(), 16), quick(30, 8));
  const nn::BeamConfig beam{4, 0, 0.6};
  const std::string text = "w1 a2 w3 w4";
  const auto out = paraphrase(r.model, t.vocab, text, {}, beam);
  CHECK(out == paraphrase(r.model, t.vocab, text, {}, beam));
  CHECK(tokenize(out, {}).size() <= nn::default_output_cap(4));
}

TEST_CASE("training loss gradient matches finite differences") {
  const auto t = toy(4, 10);
  const auto ps = encode_pairs(t.pairs, t.vocab);
  auto cfg = small(t.vocab.size(), 4);
  cfg.d_ff = 8;
  SurrogateModel<double> m(cfg, 3);
  std::vector<TokenIds> src, tgt;
  for (const auto& e : ps.examples) {
    src.push_back(e.src);
    tgt.push_back(e.tgt);
  }
  auto build = [&](nn::Tape<double>& tape) { return m.net.loss(tape, src, tgt, std::nullopt, std::nullopt); };
  CHECK(m.net.params().scalar_count() <= 1000);
  CHECK(nn::grad_check<double>(build, m.net.params().all(), 1e-4, 2000).max_relative_error < 1e-4);
}

TEST_CASE("labeled pairs load from TSV and JSONL") {
  testing::TempDir dir;
  testing::write_text(dir / "p.tsv", "The cat\ta cat\nx y\tz\n");
  testing::write_text(dir / "p.jsonl", "{\"source\":\"a b\",\"reference\":\"c\"}\n{\"src\":\"d\",\"tgt\":\"e f\"}\n");
  const auto tsv = load_labeled_pairs(dir / "p.tsv", {});
  REQUIRE(tsv.size() == 2);
  CHECK(tsv[0].first == Tokens{"the", "cat"});
  const auto js = load_labeled_pairs(dir / "p.jsonl", {});
  REQUIRE(js.size() == 2);
  CHECK(js[1].second == Tokens{"e", "f"});
}

TEST_CASE("epoch history csv") {
  const std::vector<EpochRecord> e{{1, 3, 2.5}, {2, 1, 1.25}};
  const auto csv = epoch_history_csv(e);
  CHECK(csv.find("epoch") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_SUITE_END();
