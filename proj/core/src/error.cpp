#include "adlab/error.hpp"

namespace adlab {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownSymbol: return "UnknownSymbol";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::MissingReasoning: return "MissingReasoning";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ContextOverflow: return "ContextOverflow";
    case Errc::EmptyOutput: return "EmptyOutput";
    case Errc::EmptyPrompt: return "EmptyPrompt";
    case Errc::GroupTooSmall: return "GroupTooSmall";
    case Errc::InvalidHops: return "InvalidHops";
    case Errc::GenerationExhausted: return "GenerationExhausted";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::MissingCandidates: return "MissingCandidates";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::ConfigMissing: return "ConfigMissing";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::Diverged: return "Diverged";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

UnknownSymbolError::UnknownSymbolError(std::size_t position)
    : Error(Errc::UnknownSymbol, "no vocabulary token matches at position " + std::to_string(position)),
      position_(position) {}

ParseError::ParseError(std::size_t line, std::string reason, std::string field)
    : Error(Errc::ParseError,
            "line " + std::to_string(line) + (field.empty() ? "" : " (field '" + field + "')") + ": " + reason),
      line_(line),
      field_(std::move(field)) {}

}  // namespace adlab
