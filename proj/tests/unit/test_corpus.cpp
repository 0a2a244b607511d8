#include <doctest.h>

#include "helpers.hpp"
#include "umtpara/corpus.hpp"
#include "umtpara/error.hpp"
#include "umtpara/io.hpp"

using namespace umtpara;

TEST_SUITE_BEGIN("corpus");

TEST_CASE("tokenize lowercases and splits punctuation") {
  TokenizerConfig cfg;
  CHECK(tokenize("The cat  sat.", cfg) == Tokens{"the", "cat", "sat", "."});
  CHECK(tokenize("", cfg).empty());
  CHECK(tokenize("a b", cfg) == tokenize("a b", cfg));
}

TEST_CASE("tokenize leaves case and punctuation when disabled") {
  TokenizerConfig cfg{false, false};
  CHECK(tokenize("The cat, sat.", cfg) == Tokens{"The", "cat,", "sat."});
}

TEST_CASE("tokenize passes UTF-8 through untouched") {
  TokenizerConfig cfg;
  CHECK(tokenize("Caf\xc3\xa9 ok", cfg) == Tokens{"caf\xc3\xa9", "ok"});
}

TEST_CASE("detokenize joins with single spaces") {
  const Tokens t{"a", "b", "."};
  CHECK(detokenize(t) == "a b .");
}

namespace {

std::vector<SentenceRecord> records(std::initializer_list<const char*> lines) {
  std::vector<SentenceRecord> out;
  std::uint32_t id = 0;
  for (const char* l : lines) out.push_back({id++, l, tokenize(l, {}), {}});
  return out;
}

}  // namespace

TEST_CASE("build_vocab applies min_count") {
  auto corpus = records({"a a b"});
  const auto v = build_vocab(corpus, 2, 100);
  CHECK(v.size() == 5);
  CHECK(v.index("a") == 4);
  CHECK_FALSE(v.contains("b"));
}

TEST_CASE("build_vocab truncates by frequency then token") {
  auto corpus = records({"a b", "b"});
  const auto v = build_vocab(corpus, 1, 5);
  CHECK(v.size() == 5);
  CHECK(v.token(4) == "b");

  auto tie = records({"c b a"});
  const auto w = build_vocab(tie, 1, 6);
  CHECK(w.token(4) == "a");
  CHECK(w.token(5) == "b");
}

TEST_CASE("vocab reserves special indices") {
  auto corpus = records({"x y z"});
  const auto v = build_vocab(corpus, 1);
  CHECK(v.index("<pad>") == Vocab::kPad);
  CHECK(v.index("<unk>") == Vocab::kUnk);
  CHECK(v.index("<s>") == Vocab::kBos);
  CHECK(v.index("</s>") == Vocab::kEos);
}

TEST_CASE("encode maps unknown tokens to UNK") {
  const Tokens regular{"a"};
  const auto v = Vocab::from_tokens(regular);
  const Tokens a{"a"}, z{"zzz"}, none{};
  CHECK(encode(a, v) == TokenIds{4});
  CHECK(encode(z, v) == TokenIds{1});
  CHECK(encode(none, v).empty());
  const TokenIds ids{4, 1};
  CHECK(decode(ids, v) == Tokens{"a", "<unk>"});
}

TEST_CASE("vocab save and load round trip") {
  testing::TempDir dir;
  auto corpus = records({"a a b c c c"});
  const auto v = build_vocab(corpus, 1);
  v.save(dir / "vocab.txt");
  const auto w = Vocab::load(dir / "vocab.txt");
  CHECK(w.tokens() == v.tokens());
  CHECK(w.fingerprint() == v.fingerprint());
}

TEST_CASE("decode inverts encode for in-vocab tokens") {
  auto corpus = records({"the quick fox", "the lazy dog ."});
  const auto v = build_vocab(corpus, 1);
  for (const auto& r : corpus) CHECK(decode(encode(r.tokens, v), v) == r.tokens);
}

TEST_CASE("lowering min_count never removes tokens") {
  auto corpus = records({"a a a b b c", "c d a"});
  const auto strict = build_vocab(corpus, 3);
  const auto loose = build_vocab(corpus, 1);
  for (const auto& t : strict.tokens()) CHECK(loose.contains(t));
}

TEST_CASE("load_corpus reads lines and skips blanks") {
  testing::TempDir dir;
  testing::write_text(dir / "three.txt", "one\ntwo\nthree\n");
  auto c = load_corpus(dir / "three.txt", CorpusFormat::kLines, {});
  REQUIRE(c.size() == 3);
  CHECK(c[0].id == 0);
  CHECK(c[2].id == 2);
  CHECK(c[1].tokens == Tokens{"two"});

  testing::write_text(dir / "blank.txt", "one\n\n  \nthree\n");
  CHECK(load_corpus(dir / "blank.txt", CorpusFormat::kLines, {}).size() == 2);
}

TEST_CASE("load_corpus reads jsonl") {
  testing::TempDir dir;
  testing::write_text(dir / "c.jsonl", "{\"text\":\"a b\"}\n");
  auto c = load_corpus(dir / "c.jsonl", CorpusFormat::kJsonl, {});
  REQUIRE(c.size() == 1);
  CHECK(c[0].tokens == Tokens{"a", "b"});
}

TEST_CASE("load_corpus errors") {
  testing::TempDir dir;
  CHECK_THROWS_AS(load_corpus(dir / "missing.txt", CorpusFormat::kLines, {}), IoError);
  testing::write_text(dir / "bad.jsonl", "{\"body\":\"a\"}\n");
  CHECK_THROWS_AS(load_corpus(dir / "bad.jsonl", CorpusFormat::kJsonl, {}), InputError);
  CHECK_THROWS(parse_corpus_format("xml"));
}

TEST_CASE("encode_corpus fills ids") {
  auto corpus = records({"a b", "b"});
  const auto v = build_vocab(corpus, 1);
  encode_corpus(corpus, v);
  CHECK(corpus[1].ids == TokenIds{v.index("b")});
}

TEST_CASE("atomic write and digest") {
  testing::TempDir dir;
  write_file_atomic(dir / "f.txt", "abc");
  CHECK(read_file(dir / "f.txt") == "abc");
  CHECK(sha256_file(dir / "f.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_SUITE_END();
