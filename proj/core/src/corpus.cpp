#include "umtpara/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "umtpara/error.hpp"

namespace umtpara {

namespace {

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_ascii_space);
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "lines") return CorpusFormat::kLines;
  if (name == "jsonl") return CorpusFormat::kJsonl;
  throw InputError("unknown corpus format '" + std::string(name) + "' (expected lines|jsonl)");
}

Tokens tokenize(std::string_view text, const TokenizerConfig& config) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  for (char c : text) {
    if (is_ascii_space(c)) {
      flush();
      continue;
    }
    if (config.lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (config.split_punctuation && is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, c);
      continue;
    }
    current.push_back(c);
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<SentenceRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                        const TokenizerConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  std::vector<SentenceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    std::string text;
    if (format == CorpusFormat::kLines) {
      text = line;
      if (!text.empty() && text.back() == '\r') text.pop_back();
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": malformed JSON: " + e.what());
      }
      if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": JSON object without a string \"text\" field");
      }
      text = obj["text"].get<std::string>();
      if (is_blank(text)) continue;
    }
    SentenceRecord rec;
    rec.id = static_cast<std::uint32_t>(records.size());
    rec.tokens = tokenize(text, config);
    rec.text = std::move(text);
    records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  return records;
}

Vocab::Vocab() {
  for (auto s : kSpecials) {
    lookup_.emplace(std::string(s), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(s);
    counts_.push_back(0);
  }
}

Vocab Vocab::from_tokens(std::span<const std::string> regular, std::vector<std::uint64_t> counts) {
  if (!counts.empty() && counts.size() != regular.size()) {
    throw InputError("vocabulary count table does not match token list");
  }
  Vocab v;
  for (std::size_t i = 0; i < regular.size(); ++i) {
    const auto& tok = regular[i];
    if (tok.empty()) throw InputError("empty token in vocabulary");
    if (!v.lookup_.emplace(tok, static_cast<TokenId>(v.tokens_.size())).second) {
      throw InputError("duplicate vocabulary token '" + tok + "'");
    }
    v.tokens_.push_back(tok);
    v.counts_.push_back(counts.empty() ? 0 : counts[i]);
  }
  return v;
}

TokenId Vocab::index(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return lookup_.find(std::string(token)) != lookup_.end();
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("error while writing " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 4) throw InputError(path.string() + ": missing the 4-line special header");
  for (std::size_t i = 0; i < 4; ++i) {
    if (lines[i] != kSpecials[i]) {
      throw InputError(path.string() + ":" + std::to_string(i + 1) + ": expected special token " +
                       std::string(kSpecials[i]));
    }
  }
  return from_tokens(std::span<const std::string>(lines).subspan(4));
}

Vocab build_vocab(std::span<const SentenceRecord> corpus, std::uint64_t min_count,
                  std::size_t max_size) {
  if (min_count < 1) throw InputError("min_count must be >= 1");
  if (max_size < 4) throw InputError("max_size must be >= 4");
  std::map<std::string, std::uint64_t> freq;
  std::size_t total = 0;
  for (const auto& rec : corpus) {
    for (const auto& t : rec.tokens) {
      ++freq[t];
      ++total;
    }
  }
  if (total == 0) throw InputError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [tok, n] : freq) {
    bool special = std::find(std::begin(Vocab::kSpecials), std::end(Vocab::kSpecials), tok) !=
                   std::end(Vocab::kSpecials);
    if (n >= min_count && !special) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > max_size - 4) kept.resize(max_size - 4);

  std::vector<std::string> tokens;
  std::vector<std::uint64_t> counts;
  for (auto& [tok, n] : kept) {
    tokens.push_back(tok);
    counts.push_back(n);
  }
  return Vocab::from_tokens(tokens, std::move(counts));
}

TokenIds encode(std::span<const std::string> tokens, const Vocab& vocab) {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.index(t));
  return ids;
}

Tokens decode(std::span<const TokenId> ids, const Vocab& vocab) {
  Tokens out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

void encode_corpus(std::vector<SentenceRecord>& corpus, const Vocab& vocab) {
  for (auto& rec : corpus) rec.ids = encode(rec.tokens, vocab);
}

}  // namespace umtpara
