#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iae {

enum class Errc {
  // ingestion / data
  MissingColumn,
  ParseError,
  EmptyDataset,
  IoError,
  // configuration
  ConfigError,
  // splitting and mechanisms
  TooFewSamples,
  EmptyNcGroup,
  DegenerateFitness,
  // numerics
  DimensionMismatch,
  LengthMismatch,
  EmptyInput,
  SingularSystem,
  ClassMissing,
  TooFewPerClass,
  ZeroVariance,
  DegenerateAnova,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::IoError: return "IoError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EmptyNcGroup: return "EmptyNcGroup";
    case Errc::DegenerateFitness: return "DegenerateFitness";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::ClassMissing: return "ClassMissing";
    case Errc::TooFewPerClass: return "TooFewPerClass";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::DegenerateAnova: return "DegenerateAnova";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can triage without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace iae
