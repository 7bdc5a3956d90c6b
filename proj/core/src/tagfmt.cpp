#include "adlab/tagfmt.hpp"

#include <regex>

namespace adlab {

namespace {

bool contains(std::string_view text, std::string_view needle) { return text.find(needle) != std::string_view::npos; }

std::optional<std::string> span_between(std::string_view text, std::string_view open, std::string_view close) {
  const auto start = text.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body = start + open.size();
  const auto end = text.find(close, body);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(body, end - body));
}

// Python's "." excludes only '\n'; ECMAScript's also excludes '\r', so the
// body is spelled [^\n] to keep the printed pattern's semantics.
const std::regex& complex_pattern() {
  static const std::regex re(R"(^<think>[^\n]*?</think>\s*<answer>[^\n]*?</answer>)", std::regex::ECMAScript);
  return re;
}

const std::regex& simple_pattern() {
  static const std::regex re(R"(^<answer>[^\n]*?</answer>)", std::regex::ECMAScript);
  return re;
}

}  // namespace

TagParse parse_tags(std::string_view text) {
  TagParse p;
  p.has_think_open = contains(text, tokens::kThinkOpen);
  p.has_think_close = contains(text, tokens::kThinkClose);
  p.has_answer_open = contains(text, tokens::kAnswerOpen);
  p.has_answer_close = contains(text, tokens::kAnswerClose);
  p.think_span = span_between(text, tokens::kThinkOpen, tokens::kThinkClose);
  p.answer_span = span_between(text, tokens::kAnswerOpen, tokens::kAnswerClose);
  return p;
}

bool hard_match(std::string_view text, Difficulty difficulty) {
  const auto& re = difficulty == Difficulty::Complex ? complex_pattern() : simple_pattern();
  return std::regex_search(text.begin(), text.end(), re, std::regex_constants::match_continuous);
}

FormatBreakdown format_reward(std::string_view text, Difficulty difficulty) {
  const TagParse p = parse_tags(text);
  FormatBreakdown f;
  f.hard = hard_match(text, difficulty) ? kHardScore : 0.0;
  const auto score = [](bool ok) { return ok ? kSoftScore : 0.0; };
  if (difficulty == Difficulty::Complex) {
    f.soft = {score(p.has_think_open), score(p.has_think_close), score(p.has_answer_open), score(p.has_answer_close)};
  } else {
    f.soft = {score(!p.has_think_open), score(!p.has_think_close), score(p.has_answer_open),
              score(p.has_answer_close)};
  }
  // Multiples of 1/8 are exact in binary, so the sum is exact.
  f.total = f.hard + f.soft[0] + f.soft[1] + f.soft[2] + f.soft[3];
  return f;
}

Behavior classify_behavior(std::string_view text) {
  return contains(text, tokens::kThinkOpen) ? Behavior::Thinking : Behavior::Direct;
}

std::string_view to_string(Behavior b) noexcept { return b == Behavior::Thinking ? "thinking" : "direct"; }

}  // namespace adlab
