#pragma once

// Think/answer tag grammar and the difficulty-conditioned format reward.
//
// The reward is a hard component worth 0.5 (an anchored pattern over the whole
// structure) plus four soft components worth 0.125 each (tag presence, or for
// simple questions, absence of the think tags). Patterns are start-anchored
// only, so trailing text after the first closing </answer> is not penalised by
// the hard component.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "adlab/core.hpp"

namespace adlab {

struct TagParse {
  bool has_think_open = false;
  bool has_think_close = false;
  bool has_answer_open = false;
  bool has_answer_close = false;
  std::optional<std::string> think_span;
  std::optional<std::string> answer_span;
};

inline constexpr double kHardScore = 0.5;
inline constexpr double kSoftScore = 0.125;

struct FormatBreakdown {
  double hard = 0.0;
  std::array<double, 4> soft{};
  double total = 0.0;

  friend bool operator==(const FormatBreakdown&, const FormatBreakdown&) = default;
};

enum class Behavior { Thinking, Direct };

TagParse parse_tags(std::string_view text);

// Complex: ^<think>.*?</think>\s*<answer>.*?</answer>
// Simple:  ^<answer>.*?</answer>
// "." excludes '\n'.
bool hard_match(std::string_view text, Difficulty difficulty);

FormatBreakdown format_reward(std::string_view text, Difficulty difficulty);

// Thinking iff the literal <think> occurs anywhere in the text.
Behavior classify_behavior(std::string_view text);

std::string_view to_string(Behavior b) noexcept;

}  // namespace adlab
