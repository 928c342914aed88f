#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "poembert/error.hpp"
#include "poembert/utf8.hpp"
#include "poembert/verse.hpp"

namespace poembert {

inline constexpr std::string_view kHemistichSep = "[s]";
inline constexpr std::string_view kEmptyHemistich = "[e]";

inline constexpr bool is_diacritic(char32_t c) {
  return (c >= 0x064B && c <= 0x0652) || c == 0x0670 || c == 0x0640;
}

inline constexpr bool is_arabic_letter(char32_t c) {
  return (c >= 0x0621 && c <= 0x064A) || c == 0x0671;
}

/// Removes harakat, tanween, shadda, sukun, superscript alef and tatweel.
inline std::string strip_diacritics(std::string_view text) {
  std::u32string cps = utf8::decode(text);
  std::u32string out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    if (!is_diacritic(c)) out.push_back(c);
  }
  return utf8::encode(out);
}

/// Whitelist filter: Arabic letters survive, everything else becomes a space,
/// then spaces are collapsed and trimmed. With `keep_markers`, literal "[s]"
/// and "[e]" substrings are kept verbatim.
inline std::string strip_symbols(std::string_view text, bool keep_markers = true) {
  const std::u32string cps = utf8::decode(text);
  std::u32string out;
  out.reserve(cps.size());
  bool pending_space = false;
  auto emit = [&](char32_t c) {
    if (pending_space && !out.empty()) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (keep_markers && c == U'[' && i + 2 < cps.size() &&
        (cps[i + 1] == U's' || cps[i + 1] == U'e') && cps[i + 2] == U']') {
      emit(U'[');
      out.push_back(cps[i + 1]);
      out.push_back(U']');
      i += 2;
    } else if (is_arabic_letter(c)) {
      emit(c);
    } else {
      pending_space = true;
    }
  }
  return utf8::encode(out);
}

/// Joins two cleaned hemistichs with the separator marker. A missing or
/// blank second hemistich is written as the empty-hemistich marker.
inline std::string mark_hemistichs(std::string_view h1,
                                   const std::optional<std::string>& h2) {
  auto trimmed = [](std::string_view s) {
    const auto b = s.find_first_not_of(' ');
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(' ');
    return s.substr(b, e - b + 1);
  };
  const std::string_view first = trimmed(h1);
  if (first.empty()) throw Error(Errc::EmptyHemistich, "first hemistich is empty");
  std::string line(first);
  line += ' ';
  line += kHemistichSep;
  line += ' ';
  const std::string_view second = h2 ? trimmed(*h2) : std::string_view{};
  if (second.empty()) {
    line += kEmptyHemistich;
  } else {
    line += second;
  }
  return line;
}

/// Diacritics, then symbols, on the raw hemistich text. Markers that occur in
/// raw text are treated as symbols so a line carries exactly one separator.
inline std::string clean_hemistich(std::string_view raw) {
  return strip_symbols(strip_diacritics(raw), /*keep_markers=*/false);
}

struct PreprocessedVerse {
  std::int64_t verse_id = 0;
  std::string line;

  bool operator==(const PreprocessedVerse&) const = default;
};

inline PreprocessedVerse preprocess_verse(const VerseRecord& record) {
  const std::string h1 = clean_hemistich(record.hemistich1);
  if (h1.empty()) {
    throw Error(Errc::EmptyHemistich,
                "verse " + std::to_string(record.verse_id) +
                    ": first hemistich is empty after cleaning");
  }
  std::optional<std::string> h2;
  if (record.hemistich2) {
    std::string cleaned = clean_hemistich(*record.hemistich2);
    if (!cleaned.empty()) h2 = std::move(cleaned);
  }
  return {record.verse_id, mark_hemistichs(h1, h2)};
}

}  // namespace poembert
