#include <array>

#include "adlab/core.hpp"

namespace adlab {

const std::string_view kSystemTemplate =
    "A conversation between User and Assistant.\n"
    "The user asks a question, and the assistant solves it. If the assistant determines that the question "
    "requires multi-step reasoning or extra thinking steps, the assistant generates a <think> tag, followed by "
    "the reasoning process enclosed within <think> </think> tags, and then provides the answer within "
    "<answer> </answer> tags, i.e., <think> reasoning process here </think> <answer> answer here </answer>. "
    "If the question is simple and does not require additional reasoning, the assistant directly provides the "
    "answer within <answer> </answer> tags, i.e., <answer> answer here </answer>.\n"
    "User: [prompt]. Assistant: ";

namespace {

constexpr std::string_view kSlot = "[prompt]";

// Splits text around tag markers, dropping the markers themselves.
void split_on_tags(std::string_view text, std::vector<std::string>& out) {
  constexpr std::array<std::string_view, 4> kTags = {tokens::kThinkOpen, tokens::kThinkClose, tokens::kAnswerOpen,
                                                     tokens::kAnswerClose};
  std::size_t start = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool hit = false;
    for (auto tag : kTags) {
      if (text.compare(pos, tag.size(), tag) == 0) {
        if (pos > start) out.emplace_back(text.substr(start, pos - start));
        pos += tag.size();
        start = pos;
        hit = true;
        break;
      }
    }
    if (!hit) ++pos;
  }
  if (start < text.size()) out.emplace_back(text.substr(start));
}

}  // namespace

std::vector<std::string> template_pieces() {
  const auto slot = kSystemTemplate.find(kSlot);
  std::vector<std::string> pieces;
  split_on_tags(kSystemTemplate.substr(0, slot), pieces);
  split_on_tags(kSystemTemplate.substr(slot + kSlot.size()), pieces);
  return pieces;
}

std::string render_prompt(const Sample& sample) {
  std::string filled = sample.context.empty() ? sample.question : sample.context + " " + sample.question;
  std::string out(kSystemTemplate);
  out.replace(out.find(kSlot), kSlot.size(), filled);
  return out;
}

std::string render_sft_target(const Sample& sample) {
  std::string answer = std::string(tokens::kAnswerOpen) + sample.reference_answer + std::string(tokens::kAnswerClose);
  if (sample.difficulty == Difficulty::Simple) return answer;
  if (!sample.reasoning || sample.reasoning->empty()) {
    throw Error(Errc::MissingReasoning, "complex sample '" + sample.id + "' has no reasoning path");
  }
  return std::string(tokens::kThinkOpen) + *sample.reasoning + std::string(tokens::kThinkClose) + " " + answer;
}

}  // namespace adlab
