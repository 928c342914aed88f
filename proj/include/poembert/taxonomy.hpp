#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poembert/error.hpp"

namespace poembert {

enum class Task { SentimentT, MeterClassical, MeterAll, SubMeter, Gender, Rhyme };

inline constexpr std::array<Task, 6> kAllTasks = {
    Task::SentimentT, Task::MeterClassical, Task::MeterAll,
    Task::SubMeter,   Task::Gender,         Task::Rhyme};

constexpr std::string_view task_name(Task t) {
  switch (t) {
    case Task::SentimentT: return "SentimentT";
    case Task::MeterClassical: return "MeterClassical";
    case Task::MeterAll: return "MeterAll";
    case Task::SubMeter: return "SubMeter";
    case Task::Gender: return "Gender";
    case Task::Rhyme: return "Rhyme";
  }
  return "";
}

namespace detail {

inline std::string fold(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace detail

/// Accepts the canonical task names and CLI spellings such as
/// "rhyme", "meter-classical", "sub-meter", "sentiment".
inline Task parse_task(std::string_view s) {
  const std::string f = detail::fold(s);
  if (f == "sentimentt" || f == "sentiment") return Task::SentimentT;
  if (f == "meterclassical" || f == "classical") return Task::MeterClassical;
  if (f == "meterall" || f == "meter" || f == "meters") return Task::MeterAll;
  if (f == "submeter" || f == "submeters") return Task::SubMeter;
  if (f == "gender") return Task::Gender;
  if (f == "rhyme") return Task::Rhyme;
  throw Error(Errc::InvalidConfig, "unknown task '" + std::string(s) + "'");
}

// Meter names in the order of the meter frequency listing: the first 16 are
// the classical meters, the last 12 the non-classical ones.
inline const std::vector<std::string>& meter_names() {
  static const std::vector<std::string> names = {
      "Taweel",    "Kamel",      "Baseet",    "Khafif",   "Wafer",
      "Rajaz",     "Ramel",      "Mutaqarib", "Saree",    "Munsarih",
      "Mujtath",   "Hazaj",      "Madeed",    "Mutadarak", "Muqtadab",
      "Mudari",    "Muashah",    "Free form", "Colloquial", "Doubeet",
      "Mawalia",   "Masehube",   "Selselah",  "Zajal",    "Kankan",
      "Hajini",    "Sakhri",     "Luaihani"};
  return names;
}

inline constexpr std::size_t kClassicalMeterCount = 16;

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "Complete", "Majzuu", "Mashture", "Manhuk", "Maktuu", "Ahuth", "Mukhala"};
  return names;
}

inline const std::vector<std::string>& sub_meter_names() {
  static const std::vector<std::string> names = {
      "Baseet Complete",    "Baseet Mukhala",     "Hazaj Majzuu",
      "Kamel Ahuth",        "Kamel Complete",     "Kamel Majzuu",
      "Khafif Complete",    "Khafif Majzuu",      "Madeed Majzuu",
      "Mudari Majzuu",      "Mujtath Majzuu",     "Munsarih Complete",
      "Muqtadab Majzuu",    "Mutadarak Complete", "Mutadarak Mashture",
      "Mutaqarib Complete", "Rajaz Complete",     "Rajaz Majzuu",
      "Rajaz Mashture",     "Ramel Complete",     "Ramel Majzuu",
      "Saree Complete",     "Taweel Complete",    "Wafer Complete",
      "Wafer Majzuu"};
  return names;
}

inline const std::vector<std::string>& sentiment_names() {
  static const std::vector<std::string> names = {"Anger", "Love", "Spirituality",
                                                 "Sadness"};
  return names;
}

inline const std::vector<std::string>& gender_names() {
  static const std::vector<std::string> names = {"Female", "Male"};
  return names;
}

struct RhymeLetter {
  std::string_view name;
  std::string_view glyph;
};

// The 28 letters in alphabetical order, then the three written variants.
inline constexpr std::array<RhymeLetter, 31> kRhymeLetters = {{
    {"Alif", "ا"},      {"Baa", "ب"},           {"Taa", "ت"},
    {"Thaa", "ث"},      {"Jeem", "ج"},          {"Hhaa", "ح"},
    {"Khaa", "خ"},      {"Dal", "د"},           {"Thal", "ذ"},
    {"Raa", "ر"},       {"Zay", "ز"},           {"Seen", "س"},
    {"Sheen", "ش"},     {"Sad", "ص"},           {"Dad", "ض"},
    {"Tta", "ط"},       {"Zza", "ظ"},           {"Ain", "ع"},
    {"Ghain", "غ"},     {"Faa", "ف"},           {"Qaf", "ق"},
    {"Kaf", "ك"},       {"Lam", "ل"},           {"Meem", "م"},
    {"Noon", "ن"},      {"Haa", "ه"},           {"Waw", "و"},
    {"Yaa", "ي"},       {"Laa", "لا"},          {"Taa Marbutah", "ة"},
    {"Waw Hamza", "ؤ"},
}};

inline const std::vector<std::string>& rhyme_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& r : kRhymeLetters) v.emplace_back(r.name);
    return v;
  }();
  return names;
}

/// Ordered label set of one task with a name <-> index bijection.
class LabelTaxonomy {
 public:
  LabelTaxonomy(Task task, std::vector<std::string> labels)
      : task_(task), labels_(std::move(labels)) {}

  Task task() const noexcept { return task_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  /// Case-insensitive lookup; exact spelling is canonicalised by `label()`.
  std::optional<std::size_t> index_of(std::string_view name) const {
    const std::string f = detail::fold(name);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (detail::fold(labels_[i]) == f) return i;
    }
    if (task_ == Task::Rhyme) {
      for (std::size_t i = 0; i < kRhymeLetters.size(); ++i) {
        if (kRhymeLetters[i].glyph == name) return i;
      }
    }
    return std::nullopt;
  }

 private:
  Task task_;
  std::vector<std::string> labels_;
};

inline const LabelTaxonomy& taxonomy(Task t) {
  static const std::array<LabelTaxonomy, 6> all = {
      LabelTaxonomy(Task::SentimentT, sentiment_names()),
      LabelTaxonomy(Task::MeterClassical,
                    std::vector<std::string>(meter_names().begin(),
                                             meter_names().begin() +
                                                 kClassicalMeterCount)),
      LabelTaxonomy(Task::MeterAll, meter_names()),
      LabelTaxonomy(Task::SubMeter, sub_meter_names()),
      LabelTaxonomy(Task::Gender, gender_names()),
      LabelTaxonomy(Task::Rhyme, rhyme_names()),
  };
  return all[static_cast<std::size_t>(t)];
}

}  // namespace poembert
