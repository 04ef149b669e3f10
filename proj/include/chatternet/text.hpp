#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chatternet/error.hpp"

namespace chatternet {

namespace tokens {
inline constexpr std::string_view pad = "<PAD>";
inline constexpr std::string_view unk = "<UNK>";
inline constexpr std::string_view url = "<URL>";
inline constexpr std::string_view num = "<NUM>";
}  // namespace tokens

namespace detail {

inline bool is_url(std::string_view chunk) {
  auto starts = [&](std::string_view p) {
    if (chunk.size() < p.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const char c = chunk[i];
      const char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
      if (lower != p[i]) return false;
    }
    return true;
  };
  return starts("http://") || starts("https://") || starts("www.");
}

inline void append_below_thousand(std::uint64_t n, std::vector<std::string>& out) {
  static constexpr const char* kOnes[] = {
      "zero",    "one",     "two",       "three",    "four",     "five",    "six",
      "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
      "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
  static constexpr const char* kTens[] = {"",      "",      "twenty",  "thirty", "forty",
                                          "fifty", "sixty", "seventy", "eighty", "ninety"};
  if (n >= 100) {
    out.emplace_back(kOnes[n / 100]);
    out.emplace_back("hundred");
    n %= 100;
    if (n == 0) return;
  }
  if (n >= 20) {
    out.emplace_back(kTens[n / 10]);
    if (n % 10 != 0) out.emplace_back(kOnes[n % 10]);
  } else {
    out.emplace_back(kOnes[n]);
  }
}

}  // namespace detail

/// Spelled-out English words for a nonnegative integer ("25" -> twenty five).
/// Returns nullopt above the trillions, which normalize() maps to <NUM>.
inline std::optional<std::vector<std::string>> number_words(std::uint64_t n) {
  if (n >= 1'000'000'000'000'000ULL) return std::nullopt;
  std::vector<std::string> out;
  if (n == 0) {
    out.emplace_back("zero");
    return out;
  }
  static constexpr std::pair<std::uint64_t, const char*> kScales[] = {
      {1'000'000'000'000ULL, "trillion"},
      {1'000'000'000ULL, "billion"},
      {1'000'000ULL, "million"},
      {1'000ULL, "thousand"}};
  for (const auto& [scale, word] : kScales) {
    if (n >= scale) {
      detail::append_below_thousand(n / scale, out);
      out.emplace_back(word);
      n %= scale;
    }
  }
  if (n > 0) detail::append_below_thousand(n, out);
  return out;
}

/// Lowercases, splits on whitespace and punctuation, replaces URLs by <URL>
/// and standalone numerals by their words. Tokens are maximal runs of ASCII
/// letters, digits, apostrophes and non-ASCII bytes; apostrophes at either
/// end of a token are dropped. A numeral run with a single inner '.' is read
/// as a decimal ("3.5" -> three point five).
inline std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> out;
  auto emit_word = [&out](std::string word) {
    while (!word.empty() && word.front() == '\'') word.erase(word.begin());
    while (!word.empty() && word.back() == '\'') word.pop_back();
    if (word.empty()) return;
    const bool numeric = std::all_of(word.begin(), word.end(),
                                     [](char c) { return c >= '0' && c <= '9'; });
    if (!numeric) {
      out.push_back(std::move(word));
      return;
    }
    std::optional<std::vector<std::string>> words;
    if (word.size() <= 18) words = number_words(std::stoull(word));
    if (!words) {
      out.emplace_back(tokens::num);
      return;
    }
    for (auto& w : *words) out.push_back(std::move(w));
  };

  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::string_view chunk = text.substr(begin, i - begin);
    if (chunk.empty()) continue;
    if (detail::is_url(chunk)) {
      out.emplace_back(tokens::url);
      continue;
    }
    std::string word;
    for (std::size_t c = 0; c < chunk.size(); ++c) {
      const auto ch = static_cast<unsigned char>(chunk[c]);
      const bool keep = std::isalnum(ch) || ch == '\'' || ch >= 0x80;
      if (keep) {
        word.push_back(static_cast<char>(std::tolower(ch)));
        continue;
      }
      // "3.5": decimal point between digits.
      const bool decimal = ch == '.' && !word.empty() &&
                           std::isdigit(static_cast<unsigned char>(word.back())) &&
                           c + 1 < chunk.size() &&
                           std::isdigit(static_cast<unsigned char>(chunk[c + 1]));
      const bool all_digits = std::all_of(word.begin(), word.end(),
                                          [](char d) { return d >= '0' && d <= '9'; });
      emit_word(std::move(word));
      word.clear();
      if (decimal && all_digits) out.emplace_back("point");
    }
    emit_word(std::move(word));
  }
  return out;
}

/// Number of URL chunks in raw text (used by the baseline's referral count).
inline std::size_t count_urls(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > begin && detail::is_url(text.substr(begin, i - begin))) ++n;
  }
  return n;
}

using TokenId = std::int32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kUrl = 2;
  static constexpr TokenId kNum = 3;
  static constexpr int kFormatVersion = 1;

  Vocabulary() {
    for (auto special : {tokens::pad, tokens::unk, tokens::url, tokens::num}) {
      add(std::string(special), 0);
    }
  }

  TokenId id(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::int64_t df(TokenId id) const { return dfs_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::int64_t document_count() const { return documents_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && dfs_ == other.dfs_ && documents_ == other.documents_;
  }

  /// Versioned text format: a header line, then "token<TAB>id<TAB>df" rows.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary: " + path);
    out << "chatternet-vocab " << kFormatVersion << ' ' << documents_ << '\n';
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out << tokens_[i] << '\t' << i << '\t' << dfs_[i] << '\n';
    }
    if (!out) throw DataError("failed writing vocabulary: " + path);
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocabulary: " + path);
    std::string magic;
    int version = 0;
    Vocabulary v;
    in >> magic >> version >> v.documents_;
    if (magic != "chatternet-vocab" || version != kFormatVersion) {
      throw DataError("unsupported vocabulary format in " + path);
    }
    v.tokens_.clear();
    v.dfs_.clear();
    v.ids_.clear();
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string token;
      std::size_t id = 0;
      std::int64_t df = 0;
      if (!std::getline(row, token, '\t') || !(row >> id >> df) || id != v.tokens_.size()) {
        throw DataError("corrupt vocabulary row in " + path + ": " + line);
      }
      v.add(token, df);
    }
    if (v.size() < 4 || v.token(kPad) != tokens::pad) {
      throw DataError("vocabulary is missing special tokens: " + path);
    }
    return v;
  }

 private:
  friend Vocabulary build_vocab(const std::vector<std::vector<std::string>>&, double, std::int64_t);

  void add(std::string token, std::int64_t df) {
    ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
    dfs_.push_back(df);
  }

  std::vector<std::string> tokens_;
  std::vector<std::int64_t> dfs_;
  std::unordered_map<std::string, TokenId> ids_;
  std::int64_t documents_ = 0;
};

/// Keeps tokens with min_df <= df (absolute) and df / N <= max_df, both
/// bounds inclusive. Retained tokens are ordered by descending df, then
/// lexicographically, after the four special tokens.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                              double max_df = 0.8, std::int64_t min_df = 5) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::int64_t> df;
  for (const auto& doc : corpus) {
    std::vector<std::string> unique(doc);
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto& t : unique) ++df[t];
  }
  Vocabulary vocab;
  vocab.documents_ = static_cast<std::int64_t>(corpus.size());
  const auto n = static_cast<double>(corpus.size());
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [token, count] : df) {
    if (vocab.contains(token)) {
      vocab.dfs_[static_cast<std::size_t>(vocab.id(token))] = count;
      continue;
    }
    if (count < min_df || static_cast<double>(count) / n > max_df) continue;
    kept.emplace_back(token, count);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [token, count] : kept) vocab.add(token, count);
  return vocab;
}

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t true_length = 0;
};

/// Keeps the first max_len tokens and right-pads with PAD.
inline TokenSequence encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            std::size_t max_len) {
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  seq.true_length = std::min(max_len, tokens.size());
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id(tokens[i]);
  return seq;
}

inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(seq.true_length);
  for (std::size_t i = 0; i < seq.true_length; ++i) out.push_back(vocab.token(seq.ids[i]));
  return out;
}

}  // namespace chatternet
