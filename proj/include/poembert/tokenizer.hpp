#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "poembert/error.hpp"
#include "poembert/io.hpp"
#include "poembert/utf8.hpp"

namespace poembert {

inline constexpr std::string_view kContinuationPrefix = "##";
inline constexpr std::size_t kMaxWordChars = 100;

/// WordPiece vocabulary. Ids 0..6 are always the reserved tokens below.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kHemistichSep = 5;
  static constexpr int kEmptyHemistich = 6;
  static constexpr int kNumReserved = 7;

  static constexpr std::array<std::string_view, kNumReserved> kReserved = {
      "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[s]", "[e]"};

  Vocab() : Vocab(std::vector<std::string>(kReserved.begin(), kReserved.end())) {}

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kNumReserved) {
      throw Error(Errc::CorruptFile, "vocabulary lacks the reserved tokens");
    }
    for (int i = 0; i < kNumReserved; ++i) {
      if (tokens_[i] != kReserved[i]) {
        throw Error(Errc::CorruptFile, "vocabulary id " + std::to_string(i) +
                                           " must be " + std::string(kReserved[i]));
      }
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty() || tokens_[i].find('\n') != std::string::npos) {
        throw Error(Errc::CorruptFile, "bad token at id " + std::to_string(i));
      }
      if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
        throw Error(Errc::CorruptFile, "duplicate token '" + tokens_[i] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error(Errc::IdOutOfRange, "token id " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::optional<int> find(std::string_view tok) const {
    const auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  static bool is_special(int id) noexcept { return id >= 0 && id < kNumReserved; }

  /// One token per line; the line number is the id.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  static Vocab parse(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      tokens.emplace_back(line);
      start = end + 1;
    }
    return Vocab(std::move(tokens));
  }

  /// Content hash of the serialized vocabulary.
  std::string digest() const { return hex_digest(serialize()); }

  void save(const std::string& path) const { write_file(path, serialize()); }
  static Vocab load(const std::string& path) { return parse(read_file(path)); }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

namespace detail {

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline bool is_reserved_word(std::string_view w) {
  return std::find(Vocab::kReserved.begin(), Vocab::kReserved.end(), w) !=
         Vocab::kReserved.end();
}

}  // namespace detail

/// Trains a WordPiece vocabulary.
///
/// The vocabulary starts with the reserved tokens, then every corpus
/// character in word-initial form, then every character in "##" form (both
/// sorted by code point). Merges are applied greedily: the adjacent pair with
/// the highest count(pair) / (count(first) * count(second)) among pairs seen
/// at least `min_frequency` times wins; ties go to the lexicographically
/// smallest merged token. Training stops at `target_size` tokens or when no
/// pair qualifies.
inline Vocab train_wordpiece(const std::vector<std::string>& lines,
                             std::size_t target_size, std::size_t min_frequency = 2) {
  std::map<std::string, std::uint64_t> word_counts;
  for (const auto& line : lines) {
    for (auto w : detail::split_whitespace(line)) {
      if (!detail::is_reserved_word(w)) ++word_counts[std::string(w)];
    }
  }
  if (word_counts.empty()) throw Error(Errc::EmptyCorpus, "no words to train on");

  std::set<char32_t> alphabet;
  std::vector<std::pair<std::u32string, std::uint64_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) {
    std::u32string cps = utf8::decode(w);
    alphabet.insert(cps.begin(), cps.end());
    words.emplace_back(std::move(cps), c);
  }

  std::vector<std::string> tokens(Vocab::kReserved.begin(), Vocab::kReserved.end());
  std::unordered_map<std::string, int> ids;
  for (int i = 0; i < Vocab::kNumReserved; ++i) ids.emplace(tokens[i], i);
  auto intern = [&](const std::string& t) {
    const auto [it, inserted] = ids.emplace(t, static_cast<int>(tokens.size()));
    if (inserted) tokens.push_back(t);
    return it->second;
  };
  for (char32_t c : alphabet) intern(utf8::encode(c));
  for (char32_t c : alphabet) intern(std::string(kContinuationPrefix) + utf8::encode(c));

  struct Word {
    std::vector<int> pieces;
    std::uint64_t count;
  };
  std::vector<Word> splits;
  splits.reserve(words.size());
  for (const auto& [cps, count] : words) {
    Word w{{}, count};
    for (std::size_t i = 0; i < cps.size(); ++i) {
      const std::string ch = utf8::encode(cps[i]);
      w.pieces.push_back(ids.at(i == 0 ? ch : std::string(kContinuationPrefix) + ch));
    }
    splits.push_back(std::move(w));
  }

  auto merged_name = [&](int a, int b) {
    return tokens[a] + tokens[b].substr(kContinuationPrefix.size());
  };

  while (tokens.size() < target_size) {
    std::unordered_map<int, std::uint64_t> piece_count;
    std::map<std::pair<int, int>, std::uint64_t> pair_count;
    for (const auto& w : splits) {
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        piece_count[w.pieces[i]] += w.count;
        if (i + 1 < w.pieces.size()) pair_count[{w.pieces[i], w.pieces[i + 1]}] += w.count;
      }
    }

    std::optional<std::pair<int, int>> best;
    std::uint64_t best_num = 0;
    unsigned __int128 best_den = 1;
    std::string best_name;
    for (const auto& [pair, count] : pair_count) {
      if (count < min_frequency) continue;
      const unsigned __int128 den =
          static_cast<unsigned __int128>(piece_count[pair.first]) * piece_count[pair.second];
      // count / den  vs  best_num / best_den, compared exactly.
      const unsigned __int128 lhs = static_cast<unsigned __int128>(count) * best_den;
      const unsigned __int128 rhs = static_cast<unsigned __int128>(best_num) * den;
      if (!best || lhs > rhs) {
        best = pair;
        best_num = count;
        best_den = den;
        best_name = merged_name(pair.first, pair.second);
      } else if (lhs == rhs) {
        std::string name = merged_name(pair.first, pair.second);
        if (name < best_name) {
          best = pair;
          best_name = std::move(name);
          best_num = count;
          best_den = den;
        }
      }
    }
    if (!best) break;

    const int merged = intern(best_name);
    for (auto& w : splits) {
      std::vector<int> next;
      next.reserve(w.pieces.size());
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        if (i + 1 < w.pieces.size() && w.pieces[i] == best->first &&
            w.pieces[i + 1] == best->second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.pieces[i]);
        }
      }
      w.pieces = std::move(next);
    }
  }
  return Vocab(std::move(tokens));
}

/// Greedy longest-match-first segmentation of a single word. Returns
/// {[UNK]} when any suffix cannot be matched or the word is too long.
inline std::vector<int> wordpiece_word(std::string_view word, const Vocab& vocab) {
  const std::u32string cps = utf8::decode(word);
  if (cps.size() > kMaxWordChars) return {Vocab::kUnk};
  std::vector<int> out;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::optional<int> match;
    std::size_t end = cps.size();
    for (; end > start; --end) {
      std::string piece = start > 0 ? std::string(kContinuationPrefix) : std::string();
      piece += utf8::encode(std::u32string_view(cps).substr(start, end - start));
      match = vocab.find(piece);
      if (match) break;
    }
    if (!match) return {Vocab::kUnk};
    out.push_back(*match);
    start = end;
  }
  return out;
}

/// Fixed-length encoded verse: [CLS] pieces... [SEP] [PAD]...
struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;

  std::size_t max_len() const noexcept { return ids.size(); }
  std::size_t length() const noexcept {
    return static_cast<std::size_t>(
        std::count(attention_mask.begin(), attention_mask.end(), 1));
  }
  bool operator==(const TokenSequence&) const = default;
};

inline std::vector<int> tokenize(std::string_view line, const Vocab& vocab) {
  std::vector<int> pieces;
  for (auto w : detail::split_whitespace(line)) {
    if (w == "[s]") {
      pieces.push_back(Vocab::kHemistichSep);
    } else if (w == "[e]") {
      pieces.push_back(Vocab::kEmptyHemistich);
    } else {
      const auto p = wordpiece_word(w, vocab);
      pieces.insert(pieces.end(), p.begin(), p.end());
    }
  }
  return pieces;
}

inline TokenSequence encode(std::string_view line, const Vocab& vocab,
                            std::size_t max_len) {
  if (max_len < 2) throw Error(Errc::InvalidConfig, "max_len must be >= 2");
  std::vector<int> pieces = tokenize(line, vocab);
  if (pieces.size() > max_len - 2) pieces.resize(max_len - 2);
  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(Vocab::kCls);
  seq.ids.insert(seq.ids.end(), pieces.begin(), pieces.end());
  seq.ids.push_back(Vocab::kSep);
  seq.attention_mask.assign(seq.ids.size(), 1);
  seq.ids.resize(max_len, Vocab::kPad);
  seq.attention_mask.resize(max_len, 0);
  return seq;
}

/// Inverse of `encode` on covered text: control tokens are dropped, "##"
/// pieces are glued to their predecessor and [UNK] stays literal.
inline std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == Vocab::kCls || id == Vocab::kSep || id == Vocab::kPad) continue;
    if (tok.starts_with(kContinuationPrefix) && !Vocab::is_special(id)) {
      out += tok.substr(kContinuationPrefix.size());
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace poembert
