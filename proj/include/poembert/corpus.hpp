#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "poembert/error.hpp"
#include "poembert/io.hpp"
#include "poembert/preprocess.hpp"
#include "poembert/rng.hpp"
#include "poembert/taxonomy.hpp"
#include "poembert/utf8.hpp"
#include "poembert/verse.hpp"

namespace poembert {

/// Immutable collection of verses. Verse ids are unique.
class CorpusStore {
 public:
  CorpusStore() = default;
  CorpusStore(std::vector<VerseRecord> records, std::string provenance)
      : records_(std::move(records)), provenance_(std::move(provenance)) {
    std::unordered_set<std::int64_t> seen;
    for (const auto& r : records_) {
      if (!seen.insert(r.verse_id).second) {
        throw Error(Errc::DuplicateVerseId,
                    "verse id " + std::to_string(r.verse_id) + " repeated");
      }
    }
  }

  const std::vector<VerseRecord>& records() const noexcept { return records_; }
  const std::string& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const VerseRecord& operator[](std::size_t i) const { return records_[i]; }

 private:
  std::vector<VerseRecord> records_;
  std::string provenance_;
};

inline constexpr std::string_view kCorpusColumns[] = {
    "verse_id", "hemistich1", "hemistich2", "meter", "variant",
    "rhyme",    "poet_name",  "gender",     "era",   "topic"};

// ---------------------------------------------------------------------------
// Loading and writing

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string canonical_label(Task t, const std::string& field,
                                   const std::string& value, std::size_t line) {
  const auto& tax = taxonomy(t);
  const auto idx = tax.index_of(value);
  if (!idx) {
    throw Error(Errc::UnknownLabel, field + " '" + value + "' at line " +
                                        std::to_string(line));
  }
  return tax.label(*idx);
}

}  // namespace detail

inline CorpusStore load_corpus(const std::string& path, char delimiter = '\t') {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open corpus " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::MissingColumn, "hemistich1 (empty file " + path + ")");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_fields(line, delimiter);
  for (const auto& col : header) {
    if (std::find(std::begin(kCorpusColumns), std::end(kCorpusColumns), col) ==
        std::end(kCorpusColumns)) {
      throw Error(Errc::UnknownColumn, "'" + col + "' in " + path);
    }
  }
  if (std::find(header.begin(), header.end(), "hemistich1") == header.end()) {
    throw Error(Errc::MissingColumn, "hemistich1");
  }

  std::vector<VerseRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_fields(line, delimiter);
    if (fields.size() != header.size()) {
      throw Error(Errc::MalformedRow,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    VerseRecord r;
    r.verse_id = static_cast<std::int64_t>(records.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
      std::string& v = fields[c];
      const std::string& col = header[c];
      if (v.empty()) continue;
      if (col == "verse_id") {
        try {
          std::size_t used = 0;
          r.verse_id = std::stoll(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
          throw Error(Errc::MalformedRow,
                      "line " + std::to_string(line_no) + ": bad verse_id '" + v + "'");
        }
      } else if (col == "hemistich1") {
        r.hemistich1 = std::move(v);
      } else if (col == "hemistich2") {
        r.hemistich2 = std::move(v);
      } else if (col == "meter") {
        r.meter = detail::canonical_label(Task::MeterAll, col, v, line_no);
      } else if (col == "variant") {
        const auto& names = variant_names();
        const auto it = std::find_if(names.begin(), names.end(), [&](const auto& n) {
          return detail::fold(n) == detail::fold(v);
        });
        if (it == names.end()) {
          throw Error(Errc::UnknownLabel,
                      "variant '" + v + "' at line " + std::to_string(line_no));
        }
        r.variant = *it;
      } else if (col == "rhyme") {
        r.rhyme = detail::canonical_label(Task::Rhyme, col, v, line_no);
      } else if (col == "poet_name") {
        r.poet_name = std::move(v);
      } else if (col == "gender") {
        const std::string f = detail::fold(v);
        if (f == "male") {
          r.gender = Gender::Male;
        } else if (f == "female") {
          r.gender = Gender::Female;
        } else {
          throw Error(Errc::UnknownLabel,
                      "gender '" + v + "' at line " + std::to_string(line_no));
        }
      } else if (col == "era") {
        r.era = std::move(v);
      } else if (col == "topic") {
        r.topic = std::move(v);
      }
    }
    if (clean_hemistich(r.hemistich1).empty()) {
      throw Error(Errc::EmptyHemistich,
                  "line " + std::to_string(line_no) + ": hemistich1 has no Arabic text");
    }
    records.push_back(std::move(r));
  }
  return CorpusStore(std::move(records), path);
}

inline void write_corpus(const CorpusStore& corpus, const std::string& path,
                         char delimiter = '\t') {
  std::ostringstream out;
  for (std::size_t c = 0; c < std::size(kCorpusColumns); ++c) {
    if (c) out << delimiter;
    out << kCorpusColumns[c];
  }
  out << '\n';
  auto opt = [](const std::optional<std::string>& s) { return s ? *s : std::string{}; };
  for (const auto& r : corpus.records()) {
    const std::string gender =
        r.gender ? (*r.gender == Gender::Male ? "Male" : "Female") : "";
    const std::string fields[] = {std::to_string(r.verse_id), r.hemistich1,
                                  opt(r.hemistich2),          opt(r.meter),
                                  opt(r.variant),             opt(r.rhyme),
                                  opt(r.poet_name),           gender,
                                  opt(r.era),                 opt(r.topic)};
    for (std::size_t c = 0; c < std::size(fields); ++c) {
      if (c) out << delimiter;
      out << fields[c];
    }
    out << '\n';
  }
  write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Deduplication

/// Cleaned text of both hemistichs, the identity used for duplicate removal.
inline std::string normalized_verse_key(const VerseRecord& r) {
  std::string key = clean_hemistich(r.hemistich1);
  key += '\x1f';
  if (r.hemistich2) key += clean_hemistich(*r.hemistich2);
  return key;
}

inline CorpusStore deduplicate(const CorpusStore& corpus) {
  std::unordered_set<std::string> seen;
  std::vector<VerseRecord> kept;
  kept.reserve(corpus.size());
  for (const auto& r : corpus.records()) {
    if (seen.insert(normalized_verse_key(r)).second) kept.push_back(r);
  }
  return CorpusStore(std::move(kept), corpus.provenance());
}

// ---------------------------------------------------------------------------
// Sentiment grouping of poem types

/// Maps poem-type topics onto the four sentiment classes. The built-in table
/// groups Slander -> Anger; Romantic, Parting, Longing, Spinning -> Love;
/// Religious, Invocation, Mercy -> Spirituality; Elegy -> Sadness.
class SentimentGrouping {
 public:
  SentimentGrouping() {
    const std::pair<const char*, const char*> table[] = {
        {"Slander Poems", "Anger"},         {"Romantic Poems", "Love"},
        {"Parting Poems", "Love"},          {"Longing Poems", "Love"},
        {"Spinning Poems", "Love"},         {"Religious Poems", "Spirituality"},
        {"Invocation Poems", "Spirituality"}, {"Mercy Poems", "Spirituality"},
        {"Elegy Poems", "Sadness"}};
    for (const auto& [topic, sentiment] : table) add(topic, sentiment);
  }

  /// Reads `topic<TAB>sentiment` lines that add to or replace built-in rows.
  static SentimentGrouping with_overrides(const std::string& path) {
    SentimentGrouping g;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto fields = detail::split_fields(line, '\t');
      if (fields.size() != 2) {
        throw Error(Errc::MalformedRow, "sentiment override: '" + line + "'");
      }
      g.add(fields[0], fields[1]);
    }
    return g;
  }

  void add(std::string_view topic, std::string_view sentiment) {
    const auto idx = taxonomy(Task::SentimentT).index_of(sentiment);
    if (!idx) throw Error(Errc::UnknownLabel, "sentiment '" + std::string(sentiment) + "'");
    table_[key(topic)] = *idx;
  }

  std::optional<std::size_t> find(std::string_view topic) const {
    const auto it = table_.find(key(topic));
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& group(std::string_view topic) const {
    const auto idx = find(topic);
    if (!idx) throw Error(Errc::UnmappedTopic, "'" + std::string(topic) + "'");
    return taxonomy(Task::SentimentT).label(*idx);
  }

 private:
  // "Elegy Poems", "elegy", "Elegy poem" all map to the same key.
  static std::string key(std::string_view topic) {
    std::string f = detail::fold(topic);
    for (std::string_view suffix : {"poems", "poem"}) {
      if (f.size() > suffix.size() && f.ends_with(suffix)) {
        f.resize(f.size() - suffix.size());
        break;
      }
    }
    return f;
  }

  std::map<std::string, std::size_t> table_;
};

inline const std::string& group_sentiment(std::string_view topic) {
  static const SentimentGrouping grouping;
  return grouping.group(topic);
}

// ---------------------------------------------------------------------------
// Task labels

/// Rhyme class of a cleaned text: the final letter, with the "لا" ending,
/// taa marbutah and waw-hamza as their own classes.
inline std::optional<std::size_t> rhyme_of_text(std::string_view text) {
  std::u32string cps = utf8::decode(strip_symbols(strip_diacritics(text), false));
  if (cps.empty()) return std::nullopt;
  const char32_t last = cps.back();
  if (last == U'ا' && cps.size() >= 2 && cps[cps.size() - 2] == U'ل') {
    return taxonomy(Task::Rhyme).index_of("Laa");
  }
  return taxonomy(Task::Rhyme).index_of(utf8::encode(last));
}

/// Integer label of `r` for `task`, or nullopt when the record does not
/// carry that label (or carries one outside the task's class list).
inline std::optional<std::size_t> task_label(
    const VerseRecord& r, Task task,
    const SentimentGrouping& grouping = SentimentGrouping{}) {
  const auto& tax = taxonomy(task);
  switch (task) {
    case Task::SentimentT:
      return r.topic ? grouping.find(*r.topic) : std::nullopt;
    case Task::MeterClassical:
    case Task::MeterAll:
      return r.meter ? tax.index_of(*r.meter) : std::nullopt;
    case Task::SubMeter:
      if (!r.meter || !r.variant) return std::nullopt;
      return tax.index_of(*r.meter + " " + *r.variant);
    case Task::Gender:
      if (!r.gender) return std::nullopt;
      return tax.index_of(*r.gender == Gender::Male ? "Male" : "Female");
    case Task::Rhyme:
      return r.rhyme ? tax.index_of(*r.rhyme) : std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Train / validation split

struct CorpusSplit {
  CorpusStore train;
  CorpusStore val;
};

/// Verse-level split. Each stratum (or the whole corpus) is shuffled with the
/// seed and its first floor(n * ratio) records go to train. Survivors keep
/// their original relative order.
inline CorpusSplit split(const CorpusStore& corpus, double ratio, std::uint64_t seed,
                         std::optional<Task> stratify_by = std::nullopt) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(Errc::InvalidConfig, "split ratio must be in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> strata;
  std::vector<std::string> stratum_names;
  if (stratify_by) {
    const auto& tax = taxonomy(*stratify_by);
    strata.resize(tax.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto lab = task_label(corpus[i], *stratify_by);
      if (!lab) {
        throw Error(Errc::MissingLabel, "verse " + std::to_string(corpus[i].verse_id) +
                                            " has no " +
                                            std::string(task_name(*stratify_by)) +
                                            " label");
      }
      strata[*lab].push_back(i);
    }
    stratum_names = tax.labels();
  } else {
    strata.emplace_back(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) strata[0][i] = i;
    stratum_names = {"all"};
  }

  Rng rng = make_rng(seed, Stream::Split);
  std::vector<char> in_train(corpus.size(), 0);
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& idx = strata[s];
    if (idx.empty()) continue;
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(idx.size()) * ratio));
    if (stratify_by && n_train == 0) {
      throw Error(Errc::EmptyStratum, "'" + stratum_names[s] + "' has " +
                                          std::to_string(idx.size()) +
                                          " record(s), none would reach train");
    }
    shuffle(std::span(idx), rng);
    for (std::size_t k = 0; k < n_train; ++k) in_train[idx[k]] = 1;
  }

  std::vector<VerseRecord> train, val;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (in_train[i] ? train : val).push_back(corpus[i]);
  }
  return {CorpusStore(std::move(train), corpus.provenance() + "#train"),
          CorpusStore(std::move(val), corpus.provenance() + "#val")};
}

// ---------------------------------------------------------------------------
// Synthetic corpora with planted labels

namespace detail {

// Letters used for ordinary words. Rhyme classes are drawn from the remaining
// letters so a rhyme letter only ever appears at the end of a verse.
inline constexpr std::u32string_view kBodyLetters = U"بتدرسعكمنه";

inline std::vector<std::size_t> synthetic_classes(Task signal) {
  std::vector<std::size_t> classes;
  const auto& tax = taxonomy(signal);
  if (signal != Task::Rhyme) {
    for (std::size_t k = 0; k < tax.size(); ++k) classes.push_back(k);
    return classes;
  }
  for (std::size_t k = 0; k < kRhymeLetters.size(); ++k) {
    const std::u32string glyph = utf8::decode(kRhymeLetters[k].glyph);
    const bool uses_body = std::any_of(glyph.begin(), glyph.end(), [](char32_t c) {
      return kBodyLetters.find(c) != std::u32string_view::npos;
    });
    if (!uses_body) classes.push_back(k);
  }
  return classes;
}

inline std::string marker_word(std::size_t k) {
  // "ظ" never occurs in body words, so each marker is a distinct word.
  std::string w = "ظ";
  w += kRhymeLetters[k % 28].glyph;
  w += "ظ";
  if (k >= 28) w += kRhymeLetters[k / 28].glyph;
  return w;
}

inline void set_planted_label(VerseRecord& r, Task signal, std::size_t k) {
  const std::string& name = taxonomy(signal).label(k);
  switch (signal) {
    case Task::SentimentT: {
      static const char* const kTopics[] = {"Slander Poems", "Romantic Poems",
                                            "Religious Poems", "Elegy Poems"};
      r.topic = kTopics[k];
      break;
    }
    case Task::MeterClassical:
    case Task::MeterAll:
      r.meter = name;
      break;
    case Task::SubMeter: {
      const auto sp = name.find(' ');
      r.meter = name.substr(0, sp);
      r.variant = name.substr(sp + 1);
      break;
    }
    case Task::Gender:
      r.gender = name == "Male" ? Gender::Male : Gender::Female;
      break;
    case Task::Rhyme:
      r.rhyme = name;
      break;
  }
}

}  // namespace detail

/// Synthetic verses whose `signal` label is a planted function of the text:
/// for Rhyme the label is the verse's final letter, for every other task each
/// class carries its own marker word. Classes are balanced to within one.
inline CorpusStore generate_synthetic(std::size_t n, std::uint64_t seed, Task signal) {
  if (n == 0) throw Error(Errc::InvalidConfig, "synthetic corpus size must be > 0");
  Rng rng = make_rng(seed, Stream::Synthetic);

  std::vector<std::string> lexicon;
  std::set<std::string> lexicon_seen;
  while (lexicon.size() < 48) {
    const auto len = 2 + uniform_index(rng, 3);
    std::u32string w;
    for (std::uint64_t i = 0; i < len; ++i) {
      w.push_back(detail::kBodyLetters[uniform_index(rng, detail::kBodyLetters.size())]);
    }
    std::string word = utf8::encode(w);
    if (lexicon_seen.insert(word).second) lexicon.push_back(std::move(word));
  }

  const std::vector<std::size_t> classes = detail::synthetic_classes(signal);
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) slot[i] = i % classes.size();
  shuffle(std::span(slot), rng);

  auto words = [&](std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(lexicon[uniform_index(rng, lexicon.size())]);
    }
    return out;
  };
  auto join = [](const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) {
      if (!s.empty()) s += ' ';
      s += w;
    }
    return s;
  };

  std::vector<VerseRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = classes[slot[i]];
    std::vector<std::string> h1 = words(2 + uniform_index(rng, 2));
    const bool has_h2 = uniform01(rng) < 0.9;
    std::vector<std::string> h2 = has_h2 ? words(2 + uniform_index(rng, 2))
                                         : std::vector<std::string>{};
    if (signal == Task::Rhyme) {
      auto& last = has_h2 ? h2.back() : h1.back();
      last += kRhymeLetters[k].glyph;
    } else {
      auto& target = (has_h2 && uniform01(rng) < 0.5) ? h2 : h1;
      const auto pos = uniform_index(rng, target.size() + 1);
      target.insert(target.begin() + static_cast<std::ptrdiff_t>(pos),
                    detail::marker_word(k));
    }
    VerseRecord r;
    r.verse_id = static_cast<std::int64_t>(i);
    r.hemistich1 = join(h1);
    if (has_h2) r.hemistich2 = join(h2);
    detail::set_planted_label(r, signal, k);
    records.push_back(std::move(r));
  }
  return CorpusStore(std::move(records),
                     "synthetic(" + std::to_string(seed) + ")");
}

}  // namespace poembert
