#include <map>
#include <set>

#include <gtest/gtest.h>

#include "poembert/rng.hpp"
#include "poembert/tokenizer.hpp"
#include "poembert/utf8.hpp"
#include "test_util.hpp"

using namespace poembert;

namespace {

// Straightforward WordPiece trainer working on strings only. Every round
// recounts pieces and pairs from scratch.
std::vector<std::string> reference_wordpiece(const std::vector<std::string>& lines,
                                             std::size_t target, std::uint64_t min_freq) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& line : lines) {
    std::string w;
    for (char c : line + " ") {
      if (c == ' ' || c == '\t' || c == '\n') {
        if (!w.empty() && w != "[s]" && w != "[e]" && w != "[PAD]" && w != "[UNK]" &&
            w != "[CLS]" && w != "[SEP]" && w != "[MASK]") {
          ++counts[w];
        }
        w.clear();
      } else {
        w += c;
      }
    }
  }
  std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[s]", "[e]"};
  std::set<char32_t> chars;
  for (const auto& [w, _] : counts) {
    for (char32_t c : utf8::decode(w)) chars.insert(c);
  }
  for (char32_t c : chars) vocab.push_back(utf8::encode(c));
  for (char32_t c : chars) vocab.push_back("##" + utf8::encode(c));

  std::vector<std::pair<std::vector<std::string>, std::uint64_t>> words;
  for (const auto& [w, n] : counts) {
    std::vector<std::string> pieces;
    bool first = true;
    for (char32_t c : utf8::decode(w)) {
      pieces.push_back((first ? "" : "##") + utf8::encode(c));
      first = false;
    }
    words.emplace_back(pieces, n);
  }

  while (vocab.size() < target) {
    std::map<std::string, std::uint64_t> piece_n;
    std::map<std::pair<std::string, std::string>, std::uint64_t> pair_n;
    for (const auto& [ps, n] : words) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        piece_n[ps[i]] += n;
        if (i + 1 < ps.size()) pair_n[{ps[i], ps[i + 1]}] += n;
      }
    }
    bool found = false;
    std::pair<std::string, std::string> best;
    std::string best_name;
    long double best_score = -1;
    for (const auto& [pr, n] : pair_n) {
      if (n < min_freq) continue;
      const long double score =
          static_cast<long double>(n) / (static_cast<long double>(piece_n[pr.first]) * piece_n[pr.second]);
      const std::string name = pr.first + pr.second.substr(2);
      if (!found || score > best_score || (score == best_score && name < best_name)) {
        found = true;
        best = pr;
        best_name = name;
        best_score = score;
      }
    }
    if (!found) break;
    if (std::find(vocab.begin(), vocab.end(), best_name) == vocab.end()) vocab.push_back(best_name);
    for (auto& [ps, n] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (i + 1 < ps.size() && ps[i] == best.first && ps[i + 1] == best.second) {
          next.push_back(best_name);
          ++i;
        } else {
          next.push_back(ps[i]);
        }
      }
      ps = next;
    }
  }
  return vocab;
}

std::string random_line(Rng& rng, std::u32string_view alphabet, std::size_t max_words) {
  std::string line;
  const auto n = 1 + uniform_index(rng, max_words);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!line.empty()) line += ' ';
    std::u32string w;
    const auto len = 1 + uniform_index(rng, 5);
    for (std::uint64_t j = 0; j < len; ++j) w.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    line += utf8::encode(w);
  }
  return line;
}

void expect_sequence_invariants(const TokenSequence& s, const Vocab& v, std::size_t max_len) {
  ASSERT_EQ(s.ids.size(), max_len);
  ASSERT_EQ(s.attention_mask.size(), max_len);
  EXPECT_EQ(s.ids[0], Vocab::kCls);
  const std::size_t n = s.length();
  ASSERT_GE(n, 2u);
  for (std::size_t i = 0; i < max_len; ++i) {
    EXPECT_EQ(s.attention_mask[i], i < n ? 1 : 0);
    EXPECT_GE(s.ids[i], 0);
    EXPECT_LT(static_cast<std::size_t>(s.ids[i]), v.size());
    EXPECT_EQ(s.ids[i] == Vocab::kSep, i == n - 1);
    if (i >= n) {
      EXPECT_EQ(s.ids[i], Vocab::kPad);
    }
  }
}

}  // namespace

TEST(TrainWordpiece, RepeatedWordBecomesWholeToken) {
  const Vocab v = train_wordpiece({"ابا ابا"}, 100);
  EXPECT_TRUE(v.find("ابا"));
  EXPECT_EQ(v.tokens(), reference_wordpiece({"ابا ابا"}, 100, 2));
}

TEST(TrainWordpiece, ReservedIdsComeFirst) {
  const Vocab v = train_wordpiece({"قفا نبك [s] من ذكرى"}, 60);
  for (int i = 0; i < Vocab::kNumReserved; ++i) EXPECT_EQ(v.token(i), Vocab::kReserved[i]);
  EXPECT_EQ(v.find("[s]"), Vocab::kHemistichSep);
}

TEST(TrainWordpiece, NoBudgetMeansNoMerges) {
  const std::vector<std::string> lines = {"بتب تبت", "بت بت ثب"};
  // Alphabet {ب, ت, ث}.
  const Vocab v = train_wordpiece(lines, 7 + 2 * 3);
  const std::vector<std::string> want = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[s]",
                                         "[e]",   "ب",     "ت",     "ث",     "##ب",    "##ت",
                                         "##ث"};
  EXPECT_EQ(v.tokens(), want);
}

TEST(TrainWordpiece, EmptyCorpus) {
  for (const auto& lines : {std::vector<std::string>{}, std::vector<std::string>{"  ", "[s] [e]"}}) {
    try {
      train_wordpiece(lines, 50);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::EmptyCorpus);
    }
  }
}

TEST(TrainWordpiece, MatchesReferenceOnRandomCorpora) {
  Rng rng = make_rng(11, Stream::Synthetic);
  const std::u32string alphabet = U"ابتثجحخد";
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::string> lines;
    const auto n = 1 + uniform_index(rng, 30);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string line = random_line(rng, alphabet, 6);
      if (uniform01(rng) < 0.3) line += " [s] " + random_line(rng, alphabet, 3);
      lines.push_back(line);
    }
    const std::size_t target = 20 + uniform_index(rng, 60);
    const std::size_t min_freq = 1 + uniform_index(rng, 3);
    EXPECT_EQ(train_wordpiece(lines, target, min_freq).tokens(),
              reference_wordpiece(lines, target, min_freq))
        << "trial " << trial;
  }
}

TEST(TrainWordpiece, MinFrequencyIsInclusive) {
  // "اب" occurs exactly twice.
  EXPECT_TRUE(train_wordpiece({"اب اب"}, 50, 2).find("اب"));
  EXPECT_FALSE(train_wordpiece({"اب اب"}, 50, 3).find("اب"));
}

TEST(TrainWordpiece, Deterministic) {
  const std::vector<std::string> lines = {"قفا نبك من ذكرى حبيب ومنزل", "بسقط اللوى بين الدخول فحومل"};
  EXPECT_EQ(train_wordpiece(lines, 80), train_wordpiece(lines, 80));
}

TEST(Encode, EmptyLine) {
  const Vocab v = train_wordpiece({"ابا ابا"}, 100);
  const auto s = encode("", v, 8);
  EXPECT_EQ(s.ids, (std::vector<int>{Vocab::kCls, Vocab::kSep, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(s.attention_mask, (std::vector<int>{1, 1, 0, 0, 0, 0, 0, 0}));
}

TEST(Encode, HemistichMarkers) {
  const Vocab v = train_wordpiece({"ابا ابا"}, 100);
  const int aba = *v.find("ابا");
  const auto s = encode("ابا [s] ابا", v, 32);
  std::vector<int> want = {Vocab::kCls, aba, Vocab::kHemistichSep, aba, Vocab::kSep};
  want.resize(32, Vocab::kPad);
  EXPECT_EQ(s.ids, want);
  EXPECT_EQ(encode("ابا [e]", v, 32).ids[2], Vocab::kEmptyHemistich);
}

TEST(Encode, TruncatesToMaxLen) {
  const Vocab v = train_wordpiece({"ا ب"}, 20);
  std::string line;
  for (int i = 0; i < 40; ++i) line += i % 2 ? "ب " : "ا ";
  const auto s = encode(line, v, 32);
  EXPECT_EQ(s.length(), 32u);
  EXPECT_EQ(s.ids.back(), Vocab::kSep);
  EXPECT_EQ(std::count(s.attention_mask.begin(), s.attention_mask.end(), 0), 0);
}

TEST(Encode, UnknownWord) {
  const Vocab v = train_wordpiece({"ابا ابا"}, 100);
  const auto s = encode("ابا زاي", v, 8);
  EXPECT_EQ(s.ids[2], Vocab::kUnk);
  EXPECT_EQ(decode(s.ids, v), "ابا [UNK]");
  std::string long_word(kMaxWordChars + 1, 'x');
  EXPECT_EQ(wordpiece_word(long_word, train_wordpiece({"x"}, 20)), std::vector<int>{Vocab::kUnk});
}

TEST(Encode, InvalidMaxLen) {
  try {
    encode("x", Vocab(), 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidConfig);
  }
}

TEST(Encode, InvariantsOnArbitraryText) {
  const Vocab v = train_wordpiece({"قفا نبك من ذكرى حبيب ومنزل", "ابا [s] ابا"}, 60);
  Rng rng = make_rng(5, Stream::Synthetic);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const auto n = uniform_index(rng, 120);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      if (u < 0.2) {
        text += ' ';
      } else if (u < 0.5) {
        text += static_cast<char>(uniform_index(rng, 256));
      } else if (u < 0.55) {
        text += uniform01(rng) < 0.5 ? "[s]" : "[e]";
      } else {
        text += utf8::encode(static_cast<char32_t>(0x0621 + uniform_index(rng, 40)));
      }
    }
    const std::size_t max_len = 2 + uniform_index(rng, 40);
    expect_sequence_invariants(encode(text, v, max_len), v, max_len);
    if (HasFailure()) FAIL() << "trial " << trial;
  }
}

TEST(Encode, EverySeedCharacterIsEncodable) {
  const std::vector<std::string> lines = {"قفا نبك من ذكرى", "حبيب ومنزل"};
  const Vocab v = train_wordpiece(lines, 200);
  for (const auto& l : lines) {
    for (char32_t c : utf8::decode(l)) {
      if (c == U' ') continue;
      EXPECT_NE(encode(utf8::encode(c), v, 4).ids[1], Vocab::kUnk);
    }
  }
}

TEST(Decode, RoundTripsInVocabLines) {
  Rng rng = make_rng(8, Stream::Synthetic);
  const std::u32string alphabet = U"سمعلنه";
  std::vector<std::string> lines;
  for (int i = 0; i < 50; ++i) lines.push_back(random_line(rng, alphabet, 6));
  const Vocab v = train_wordpiece(lines, 120);
  for (const auto& l : lines) {
    const auto s = encode(l, v, 64);
    EXPECT_EQ(decode(s.ids, v), l);
    // Greedy pieces reassemble each word.
    for (auto w : detail::split_whitespace(l)) {
      std::string joined;
      for (int id : wordpiece_word(w, v)) {
        const auto& t = v.token(id);
        joined += t.starts_with("##") ? t.substr(2) : t;
      }
      EXPECT_EQ(joined, w);
    }
  }
  EXPECT_EQ(decode(encode("ابا [s] ابا", train_wordpiece({"ابا"}, 30), 16).ids,
                   train_wordpiece({"ابا"}, 30)),
            "ابا [s] ابا");
}

TEST(Decode, ControlTokensOnly) {
  EXPECT_EQ(decode({Vocab::kCls, Vocab::kSep}, Vocab()), "");
}

TEST(Decode, IdOutOfRange) {
  try {
    decode({Vocab::kCls, 99}, Vocab());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IdOutOfRange);
  }
}

TEST(VocabFile, RoundTripAndCorruption) {
  testutil::TempDir dir;
  const Vocab v = train_wordpiece({"قفا نبك من ذكرى"}, 50);
  v.save(dir.file("v.txt"));
  EXPECT_EQ(Vocab::load(dir.file("v.txt")), v);
  EXPECT_EQ(Vocab::load(dir.file("v.txt")).digest(), v.digest());
  for (const std::string bad : {"[PAD]\n[UNK]\n", "[UNK]\n[PAD]\n[CLS]\n[SEP]\n[MASK]\n[s]\n[e]\n",
                                "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n[s]\n[e]\nا\nا\n"}) {
    try {
      Vocab::parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::CorruptFile);
    }
  }
}
