#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace umtpara {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;
using Tokens = std::vector<std::string>;

struct TokenizerConfig {
  bool lowercase = true;
  bool split_punctuation = true;
};

struct SentenceRecord {
  std::uint32_t id = 0;
  std::string text;
  Tokens tokens;
  TokenIds ids;  // filled by encode_corpus
};

enum class CorpusFormat { kLines, kJsonl };

CorpusFormat parse_corpus_format(std::string_view name);

// Whitespace tokenization with optional ASCII punctuation splitting and
// lowercasing. Bytes >= 0x80 are never altered, so UTF-8 passes through.
Tokens tokenize(std::string_view text, const TokenizerConfig& config);

// Joins tokens with single spaces.
std::string detokenize(std::span<const std::string> tokens);

// Reads one record per non-blank line (lines) or per JSON object carrying a
// "text" field (jsonl). Ids are dense and follow file order.
std::vector<SentenceRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                        const TokenizerConfig& config);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kFirstRegular = 4;
  static constexpr std::string_view kSpecials[4] = {"<pad>", "<unk>", "<s>", "</s>"};

  // Only the specials.
  Vocab();

  // Builds from a list of regular tokens in index order (index = position + 4).
  static Vocab from_tokens(std::span<const std::string> regular,
                           std::vector<std::uint64_t> counts = {});

  std::size_t size() const { return tokens_.size(); }
  TokenId index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::uint64_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // FNV-1a over the token list; two vocabularies with equal fingerprints map
  // ids identically.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> lookup_;
};

// Keeps tokens with frequency >= min_count, then truncates to max_size entries
// (specials included) by descending frequency, ties by ascending token.
Vocab build_vocab(std::span<const SentenceRecord> corpus, std::uint64_t min_count = 2,
                  std::size_t max_size = 30000);

TokenIds encode(std::span<const std::string> tokens, const Vocab& vocab);
Tokens decode(std::span<const TokenId> ids, const Vocab& vocab);

// Fills `ids` for every record.
void encode_corpus(std::vector<SentenceRecord>& corpus, const Vocab& vocab);

}  // namespace umtpara
