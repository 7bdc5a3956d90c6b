#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adlab {

enum class Errc {
  UnknownSymbol,
  IndexOutOfRange,
  MissingReasoning,
  InvalidConfig,
  ContextOverflow,
  EmptyOutput,
  EmptyPrompt,
  GroupTooSmall,
  InvalidHops,
  GenerationExhausted,
  ParseError,
  IoError,
  MissingCandidates,
  EmptyClass,
  ConfigMissing,
  ShapeMismatch,
  Diverged,
};

const char* to_string(Errc code) noexcept;

// Every error raised by the library carries a stable code so callers (the CLI
// in particular) can map failures onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class UnknownSymbolError : public Error {
 public:
  explicit UnknownSymbolError(std::size_t position);

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string reason, std::string field = {});

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

}  // namespace adlab
