#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace poembert {

enum class Gender { Male, Female };

/// One verse with its hemistichs and whatever labels the source provides.
/// Absent labels are `std::nullopt`, never empty strings.
struct VerseRecord {
  std::int64_t verse_id = 0;
  std::string hemistich1;
  std::optional<std::string> hemistich2;
  std::optional<std::string> meter;
  std::optional<std::string> variant;
  std::optional<std::string> rhyme;
  std::optional<std::string> poet_name;
  std::optional<Gender> gender;
  std::optional<std::string> era;
  std::optional<std::string> topic;

  bool operator==(const VerseRecord&) const = default;
};

}  // namespace poembert
