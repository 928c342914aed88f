#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poembert {

enum class Errc {
  MissingColumn,
  UnknownColumn,
  UnknownLabel,
  MalformedRow,
  DuplicateVerseId,
  UnmappedTopic,
  EmptyStratum,
  MissingLabel,
  EmptyHemistich,
  EmptyCorpus,
  IdOutOfRange,
  ShapeMismatch,
  EmptyReduction,
  AllMasked,
  LabelOutOfRange,
  LengthMismatch,
  NonFiniteLoss,
  DigestMismatch,
  VersionMismatch,
  CorruptFile,
  InvalidConfig,
  MissingHead,
  Io,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::UnknownColumn: return "UnknownColumn";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DuplicateVerseId: return "DuplicateVerseId";
    case Errc::UnmappedTopic: return "UnmappedTopic";
    case Errc::EmptyStratum: return "EmptyStratum";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::EmptyHemistich: return "EmptyHemistich";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::IdOutOfRange: return "IdOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyReduction: return "EmptyReduction";
    case Errc::AllMasked: return "AllMasked";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::DigestMismatch: return "DigestMismatch";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::MissingHead: return "MissingHead";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Domain error carrying a machine-readable kind. The CLI prints `name()`
/// on the diagnostic stream and exits with status 1.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

}  // namespace poembert
